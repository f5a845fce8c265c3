// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "rgu/data.hpp"
#include "rgu/diffusion.hpp"
#include "rgu/nn.hpp"
#include "rgu/rng.hpp"

namespace rgu::train {

struct TrainConfig {
  std::size_t steps = 20000;
  std::size_t batch = 128;
  double lr = 0.05;
  std::uint64_t seed = 0;

  void validate() const;
};

struct TrainResult {
  nn::NoisePredictor model;
  std::vector<double> losses;  // one minibatch loss per step
};

/// Plain minibatch gradient descent on the diffusion loss. Minibatches are drawn
/// with replacement. Throws DivergenceError as soon as a loss is not finite.
TrainResult pretrain(const nn::NoisePredictor& init, const data::LabeledDataset& data,
                     const diffusion::NoiseSchedule& schedule, const TrainConfig& config, Rng& rng);

inline constexpr const char* kLossCsvHeader = "step,loss";
std::string loss_csv(const std::vector<double>& losses);

}  // namespace rgu::train
