// SPDX-License-Identifier: Apache-2.0
#include "rgu/checkpoint.hpp"

#include <fstream>

#include "rgu/errors.hpp"

namespace rgu::app {

using nlohmann::json;

json to_json(const Checkpoint& c) {
  const auto& a = c.model.architecture();
  return json{
      {"format", "rgu-checkpoint"},
      {"version", c.version},
      {"architecture",
       {{"input_dim", a.input_dim},
        {"hidden_dims", a.hidden_dims},
        {"num_classes", a.num_classes},
        {"num_timesteps", a.num_timesteps},
        {"time_embed_dim", a.time_embed_dim},
        {"class_embed_dim", a.class_embed_dim}}},
      {"schedule",
       {{"T", c.schedule.T}, {"beta_min", c.schedule.beta_min}, {"beta_max", c.schedule.beta_max}}},
      {"provenance",
       {{"config_hash", c.provenance.config_hash},
        {"seed", c.provenance.seed},
        {"iterations", c.provenance.iterations},
        {"stage", c.provenance.stage}}},
      {"params", c.model.param_vector()},
  };
}

Checkpoint checkpoint_from_json(const json& j) {
  try {
    if (j.value("format", std::string()) != "rgu-checkpoint") {
      throw DomainError("checkpoint: not an rgu checkpoint");
    }
    const int version = j.at("version").get<int>();
    if (version != kCheckpointVersion) {
      throw DomainError("checkpoint: unsupported version " + std::to_string(version) +
                        " (this build reads version " + std::to_string(kCheckpointVersion) + ")");
    }
    const auto& ja = j.at("architecture");
    nn::Architecture a;
    a.input_dim = ja.at("input_dim").get<std::size_t>();
    a.hidden_dims = ja.at("hidden_dims").get<std::vector<std::size_t>>();
    a.num_classes = ja.at("num_classes").get<std::size_t>();
    a.num_timesteps = ja.at("num_timesteps").get<std::size_t>();
    a.time_embed_dim = ja.at("time_embed_dim").get<std::size_t>();
    a.class_embed_dim = ja.at("class_embed_dim").get<std::size_t>();
    a.validate();
    auto params = j.at("params").get<std::vector<double>>();
    if (params.size() != a.param_count()) {
      throw DomainError("checkpoint: " + std::to_string(params.size()) +
                        " params for an architecture of " + std::to_string(a.param_count()));
    }
    Checkpoint c;
    c.version = version;
    c.model = nn::NoisePredictor(a, std::move(params));
    const auto& js = j.at("schedule");
    c.schedule.T = js.at("T").get<int>();
    c.schedule.beta_min = js.at("beta_min").get<double>();
    c.schedule.beta_max = js.at("beta_max").get<double>();
    if (static_cast<std::size_t>(c.schedule.T) != a.num_timesteps) {
      throw DomainError("checkpoint: schedule T disagrees with the time embedding table");
    }
    const auto& jp = j.at("provenance");
    c.provenance.config_hash = jp.at("config_hash").get<std::string>();
    c.provenance.seed = jp.at("seed").get<std::uint64_t>();
    c.provenance.iterations = jp.at("iterations").get<std::size_t>();
    c.provenance.stage = jp.at("stage").get<std::string>();
    return c;
  } catch (const json::exception& e) {
    throw DomainError(std::string("checkpoint: ") + e.what());
  }
}

void save_checkpoint(const Checkpoint& c, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write checkpoint '" + path + "'");
  out << to_json(c).dump() << '\n';
  if (!out) throw std::runtime_error("failed writing checkpoint '" + path + "'");
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read checkpoint '" + path + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw DomainError("checkpoint '" + path + "': " + e.what());
  }
  return checkpoint_from_json(j);
}

}  // namespace rgu::app
