// SPDX-License-Identifier: Apache-2.0
#include "rgu/nn.hpp"

#include <cmath>
#include <string>

#include "rgu/errors.hpp"

namespace rgu::nn {

void Architecture::validate() const {
  if (input_dim == 0) throw DomainError("architecture: input_dim must be positive");
  if (hidden_dims.empty()) throw DomainError("architecture: at least one hidden layer is required");
  for (std::size_t h : hidden_dims) {
    if (h == 0) throw DomainError("architecture: hidden widths must be positive");
  }
  if (num_classes == 0) throw DomainError("architecture: num_classes must be positive");
  if (num_timesteps == 0) throw DomainError("architecture: num_timesteps must be positive");
  if (class_embed_dim != hidden_dims.front()) {
    throw DomainError("architecture: class_embed_dim (" + std::to_string(class_embed_dim) +
                      ") must equal the first hidden width (" +
                      std::to_string(hidden_dims.front()) + ")");
  }
}

std::size_t Architecture::param_count() const { return ParamLayout::of(*this).total; }

ParamLayout ParamLayout::of(const Architecture& arch) {
  arch.validate();
  ParamLayout layout;
  std::size_t offset = 0;
  std::size_t in = arch.input_dim + arch.time_embed_dim;
  auto add_dense = [&](std::size_t out) {
    Dense d{in, out, offset, offset + in * out};
    offset = d.bias + out;
    layout.layers.push_back(d);
    in = out;
  };
  for (std::size_t h : arch.hidden_dims) add_dense(h);
  add_dense(arch.input_dim);
  layout.time_table = offset;
  offset += arch.num_timesteps * arch.time_embed_dim;
  layout.class_table = offset;
  offset += (arch.num_classes + 1) * arch.class_embed_dim;
  layout.total = offset;
  return layout;
}

NoisePredictor::NoisePredictor(Architecture arch)
    : arch_(std::move(arch)), layout_(ParamLayout::of(arch_)), params_(layout_.total, 0.0) {}

NoisePredictor::NoisePredictor(Architecture arch, std::vector<double> params)
    : arch_(std::move(arch)), layout_(ParamLayout::of(arch_)), params_(std::move(params)) {
  if (params_.size() != layout_.total) {
    throw ShapeError("noise predictor: expected " + std::to_string(layout_.total) +
                     " parameters, got " + std::to_string(params_.size()));
  }
}

NoisePredictor NoisePredictor::random_init(Architecture arch, Rng& rng, double embed_scale) {
  NoisePredictor model(std::move(arch));
  auto& p = model.params_;
  for (const auto& d : model.layout_.layers) {
    const double scale = 1.0 / std::sqrt(static_cast<double>(d.in));
    for (std::size_t i = 0; i < d.in * d.out; ++i) p[d.weight + i] = scale * rng.normal();
  }
  for (std::size_t i = model.layout_.time_table; i < model.layout_.total; ++i) {
    p[i] = embed_scale * rng.normal();
  }
  return model;
}

NoisePredictor NoisePredictor::from_parts(Architecture arch, const ModelParts& parts) {
  NoisePredictor model(std::move(arch));
  const auto& layout = model.layout_;
  if (parts.layers.size() != layout.layers.size()) {
    throw ShapeError("noise predictor: expected " + std::to_string(layout.layers.size()) +
                     " layers, got " + std::to_string(parts.layers.size()));
  }
  auto& p = model.params_;
  for (std::size_t l = 0; l < layout.layers.size(); ++l) {
    const auto& d = layout.layers[l];
    const auto& src = parts.layers[l];
    if (src.weight.shape() != std::vector<std::size_t>{d.out, d.in} || src.bias.size() != d.out) {
      throw ShapeError("noise predictor: layer " + std::to_string(l) + " has shape " +
                       shape_string(src.weight.shape()));
    }
    std::copy(src.weight.data().begin(), src.weight.data().end(), p.begin() + d.weight);
    std::copy(src.bias.begin(), src.bias.end(), p.begin() + d.bias);
  }
  const auto& arch_ref = model.arch_;
  if (parts.time_embedding.shape() !=
      std::vector<std::size_t>{arch_ref.num_timesteps, arch_ref.time_embed_dim}) {
    throw ShapeError("noise predictor: time embedding shape " +
                     shape_string(parts.time_embedding.shape()));
  }
  if (parts.class_embedding.shape() !=
      std::vector<std::size_t>{arch_ref.num_classes + 1, arch_ref.class_embed_dim}) {
    throw ShapeError("noise predictor: class embedding shape " +
                     shape_string(parts.class_embedding.shape()));
  }
  std::copy(parts.time_embedding.data().begin(), parts.time_embedding.data().end(),
            p.begin() + layout.time_table);
  std::copy(parts.class_embedding.data().begin(), parts.class_embedding.data().end(),
            p.begin() + layout.class_table);
  return model;
}

ModelParts NoisePredictor::parts() const {
  ModelParts out;
  for (const auto& d : layout_.layers) {
    DenseLayer layer;
    layer.weight = Tensor({d.out, d.in}, std::vector<double>(params_.begin() + d.weight,
                                                             params_.begin() + d.bias));
    layer.bias.assign(params_.begin() + d.bias, params_.begin() + d.bias + d.out);
    out.layers.push_back(std::move(layer));
  }
  out.time_embedding =
      Tensor({arch_.num_timesteps, arch_.time_embed_dim},
             std::vector<double>(params_.begin() + layout_.time_table,
                                 params_.begin() + layout_.class_table));
  out.class_embedding = Tensor({arch_.num_classes + 1, arch_.class_embed_dim},
                               std::vector<double>(params_.begin() + layout_.class_table,
                                                   params_.end()));
  return out;
}

NoisePredictor NoisePredictor::stepped(const FlatGrad& direction, double eta) const {
  if (direction.size() != params_.size()) {
    throw ShapeError("noise predictor: step direction has " + std::to_string(direction.size()) +
                     " entries for " + std::to_string(params_.size()) + " parameters");
  }
  std::vector<double> next = params_;
  axpy(-eta, direction.values, next);
  return NoisePredictor(arch_, std::move(next));
}

NoisePredictor NoisePredictor::with_params(std::vector<double> params) const {
  return NoisePredictor(arch_, std::move(params));
}

double silu(double z) {
  const double s = z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
  return z * s;
}

double silu_derivative(double z) {
  const double s = z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
  return s * (1.0 + z * (1.0 - s));
}

namespace {

/// Activations for one sample, reused across the batch.
struct Workspace {
  std::vector<double> input;                // [x ; time embedding]
  std::vector<std::vector<double>> pre;     // pre-activations of hidden layers
  std::vector<std::vector<double>> act;     // activations of hidden layers
  std::vector<double> out;
  // backward scratch
  std::vector<double> grad_act;
  std::vector<double> grad_pre;
  std::vector<double> grad_input;

  explicit Workspace(const ParamLayout& layout) {
    input.resize(layout.layers.front().in);
    for (std::size_t l = 0; l + 1 < layout.layers.size(); ++l) {
      pre.emplace_back(layout.layers[l].out);
      act.emplace_back(layout.layers[l].out);
    }
    out.resize(layout.layers.back().out);
  }
};

void check_timestep(const Architecture& arch, int t) {
  if (t < 1 || static_cast<std::size_t>(t) > arch.num_timesteps) {
    throw DomainError("mlp: timestep " + std::to_string(t) + " outside [1, " +
                      std::to_string(arch.num_timesteps) + "]");
  }
}

std::size_t class_row(const Architecture& arch, ClassId c) {
  if (!c) return arch.num_classes;
  if (*c < 0 || static_cast<std::size_t>(*c) >= arch.num_classes) {
    throw DomainError("mlp: class id " + std::to_string(*c) + " outside [0, " +
                      std::to_string(arch.num_classes) + ")");
  }
  return static_cast<std::size_t>(*c);
}

void check_batch(const Architecture& arch, const Tensor& x, std::size_t n_t, std::size_t n_c) {
  if (x.rank() != 2 || x.cols() != arch.input_dim) {
    throw ShapeError("mlp: input shape " + shape_string(x.shape()) + " expected (batch, " +
                     std::to_string(arch.input_dim) + ")");
  }
  if (n_t != x.rows() || n_c != x.rows()) {
    throw ShapeError("mlp: " + std::to_string(x.rows()) + " samples but " + std::to_string(n_t) +
                     " timesteps and " + std::to_string(n_c) + " class ids");
  }
}

void forward_sample(const NoisePredictor& model, std::span<const double> x, int t,
                    std::size_t crow, Workspace& ws) {
  const auto& arch = model.architecture();
  const auto& layout = model.layout();
  const auto p = model.params();

  std::copy(x.begin(), x.end(), ws.input.begin());
  const double* temb = p.data() + layout.time_table + (t - 1) * arch.time_embed_dim;
  std::copy(temb, temb + arch.time_embed_dim, ws.input.begin() + arch.input_dim);

  const double* cemb = p.data() + layout.class_table + crow * arch.class_embed_dim;
  const std::size_t hidden = layout.layers.size() - 1;
  const std::vector<double>* in = &ws.input;
  for (std::size_t l = 0; l <= hidden; ++l) {
    const auto& d = layout.layers[l];
    std::vector<double>& z = l < hidden ? ws.pre[l] : ws.out;
    const double* w = p.data() + d.weight;
    for (std::size_t o = 0; o < d.out; ++o) {
      double s = p[d.bias + o];
      const double* wr = w + o * d.in;
      for (std::size_t i = 0; i < d.in; ++i) s += wr[i] * (*in)[i];
      if (l == 0) s += cemb[o];
      z[o] = s;
    }
    if (l < hidden) {
      for (std::size_t o = 0; o < d.out; ++o) ws.act[l][o] = silu(z[o]);
      in = &ws.act[l];
    }
  }
}

/// Accumulates d(scale * l)/dparams into grad, where l is the squared error of
/// the last forward_sample call against target.
void backward_sample(const NoisePredictor& model, std::span<const double> target, int t,
                     std::size_t crow, double scale, Workspace& ws, std::vector<double>& grad) {
  const auto& arch = model.architecture();
  const auto& layout = model.layout();
  const auto p = model.params();
  const double k = scale * 2.0 / static_cast<double>(arch.input_dim);

  const std::size_t hidden = layout.layers.size() - 1;
  auto& gz = ws.grad_pre;   // gradient w.r.t. the current layer's pre-activation
  auto& up = ws.grad_act;   // gradient w.r.t. the current layer's output
  auto& down = ws.grad_input;
  gz.resize(ws.out.size());
  for (std::size_t j = 0; j < ws.out.size(); ++j) gz[j] = k * (ws.out[j] - target[j]);

  for (std::size_t li = hidden + 1; li-- > 0;) {
    const auto& d = layout.layers[li];
    const std::vector<double>& in = li == 0 ? ws.input : ws.act[li - 1];
    if (li < hidden) {
      gz.resize(d.out);
      for (std::size_t o = 0; o < d.out; ++o) gz[o] = up[o] * silu_derivative(ws.pre[li][o]);
    }
    const double* w = p.data() + d.weight;
    double* gw = grad.data() + d.weight;
    down.assign(d.in, 0.0);
    for (std::size_t o = 0; o < d.out; ++o) {
      const double g = gz[o];
      grad[d.bias + o] += g;
      double* gwr = gw + o * d.in;
      const double* wr = w + o * d.in;
      for (std::size_t i = 0; i < d.in; ++i) {
        gwr[i] += g * in[i];
        down[i] += wr[i] * g;
      }
    }
    if (li == 0) {
      double* gc = grad.data() + layout.class_table + crow * arch.class_embed_dim;
      for (std::size_t o = 0; o < d.out; ++o) gc[o] += gz[o];
      double* gt = grad.data() + layout.time_table + (t - 1) * arch.time_embed_dim;
      for (std::size_t i = 0; i < arch.time_embed_dim; ++i) gt[i] += down[arch.input_dim + i];
    } else {
      up.swap(down);
    }
  }
}

}  // namespace

Tensor mlp_forward(const NoisePredictor& model, const Tensor& x_t, std::span<const int> t,
                   std::span<const ClassId> class_ids) {
  const auto& arch = model.architecture();
  check_batch(arch, x_t, t.size(), class_ids.size());
  Workspace ws(model.layout());
  Tensor out({x_t.rows(), arch.input_dim});
  for (std::size_t b = 0; b < x_t.rows(); ++b) {
    check_timestep(arch, t[b]);
    forward_sample(model, x_t.row(b), t[b], class_row(arch, class_ids[b]), ws);
    std::copy(ws.out.begin(), ws.out.end(), out.row(b).begin());
  }
  return out;
}

Tensor mlp_forward(const NoisePredictor& model, const Tensor& x_t, int t, ClassId class_id) {
  const std::size_t n = x_t.rank() == 2 ? x_t.rows() : 0;
  std::vector<int> ts(n, t);
  std::vector<ClassId> cs(n, class_id);
  if (x_t.rank() != 2) check_batch(model.architecture(), x_t, n, n);
  check_timestep(model.architecture(), t);
  return mlp_forward(model, x_t, ts, cs);
}

WeightedLossGrad weighted_backward(const NoisePredictor& model, const Tensor& batch,
                                   const Tensor& targets, std::span<const int> t,
                                   std::span<const ClassId> class_ids,
                                   const SampleWeightFn& weight) {
  const auto& arch = model.architecture();
  check_batch(arch, batch, t.size(), class_ids.size());
  if (targets.shape() != batch.shape()) {
    throw ShapeError("mlp: targets " + shape_string(targets.shape()) + " vs batch " +
                     shape_string(batch.shape()));
  }
  Workspace ws(model.layout());
  WeightedLossGrad result;
  result.grad = FlatGrad(model.params().size());
  result.sample_losses.resize(batch.rows());
  for (std::size_t b = 0; b < batch.rows(); ++b) {
    check_timestep(arch, t[b]);
    const std::size_t crow = class_row(arch, class_ids[b]);
    forward_sample(model, batch.row(b), t[b], crow, ws);
    const auto target = targets.row(b);
    double l = 0.0;
    for (std::size_t j = 0; j < ws.out.size(); ++j) {
      const double e = ws.out[j] - target[j];
      l += e * e;
    }
    l /= static_cast<double>(arch.input_dim);
    result.sample_losses[b] = l;
    const double w = weight(b, l);
    if (w != 0.0) backward_sample(model, target, t[b], crow, w, ws, result.grad.values);
  }
  return result;
}

LossGrad mlp_backward(const NoisePredictor& model, const Tensor& batch, const Tensor& targets,
                      std::span<const int> t, std::span<const ClassId> class_ids) {
  if (batch.rank() != 2 || batch.rows() == 0) throw ShapeError("mlp_backward: empty batch");
  const double w = 1.0 / static_cast<double>(batch.rows());
  auto r = weighted_backward(model, batch, targets, t, class_ids,
                             [w](std::size_t, double) { return w; });
  LossGrad out;
  for (double l : r.sample_losses) out.loss += l;
  out.loss /= static_cast<double>(batch.rows());
  out.grad = std::move(r.grad);
  return out;
}

}  // namespace rgu::nn
