// SPDX-License-Identifier: Apache-2.0
#include "rgu/train.hpp"

#include <cmath>
#include <sstream>

#include "rgu/errors.hpp"
#include "rgu/format.hpp"

namespace rgu::train {

void TrainConfig::validate() const {
  if (batch < 1) throw DomainError("train.batch must be >= 1");
  if (!(lr > 0.0)) throw DomainError("train.lr must be > 0");
}

TrainResult pretrain(const nn::NoisePredictor& init, const data::LabeledDataset& data,
                     const diffusion::NoiseSchedule& schedule, const TrainConfig& config,
                     Rng& rng) {
  config.validate();
  if (data.empty()) throw DomainError("train: empty dataset");
  TrainResult out{init, {}};
  out.losses.reserve(config.steps);
  std::vector<std::size_t> idx(config.batch);
  for (std::size_t step = 0; step < config.steps; ++step) {
    for (auto& i : idx) i = rng.index(data.size());
    const auto batch = data::gather(data, idx);
    const auto ids = batch.class_ids();
    const auto lg = diffusion::diffusion_loss(out.model, batch.points, ids, schedule, rng);
    if (!std::isfinite(lg.loss)) {
      throw DivergenceError("train: loss became " + format_double(lg.loss) + " at step " +
                            std::to_string(step));
    }
    out.losses.push_back(lg.loss);
    out.model = out.model.stepped(lg.grad, config.lr);
  }
  return out;
}

std::string loss_csv(const std::vector<double>& losses) {
  std::ostringstream os;
  os << kLossCsvHeader << '\n';
  for (std::size_t i = 0; i < losses.size(); ++i) os << i << ',' << format_double(losses[i]) << '\n';
  return os.str();
}

}  // namespace rgu::train
