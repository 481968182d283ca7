#include "pdls/nn.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "pdls/errors.hpp"
#include "pdls/rng.hpp"

namespace pdls {

void MlpParams::validate() const {
  if (layers.empty()) throw ShapeError("MlpParams: no layers");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& l = layers[i];
    if (l.weight.rows() == 0 || l.weight.cols() == 0)
      throw ShapeError("MlpParams: empty layer");
    if (l.bias.size() != l.out_dim()) throw ShapeError("MlpParams: bias length != out dim");
    if (i > 0 && layers[i - 1].out_dim() != l.in_dim())
      throw ShapeError("MlpParams: adjacent layer dims do not chain");
  }
}

MlpParams make_mlp(std::size_t input_dim, const std::vector<std::size_t>& widths,
                   const std::vector<Activation>& activations, std::uint64_t seed) {
  if (widths.empty() || widths.size() != activations.size())
    throw InvalidInputError("make_mlp: widths/activations mismatch");
  MlpParams p;
  Rng rng(seed);
  std::size_t in = input_dim;
  for (std::size_t i = 0; i < widths.size(); ++i) {
    DenseLayer layer;
    const std::size_t out = widths[i];
    layer.weight = Matrix(out, in);
    const double bound = std::sqrt(6.0 / static_cast<double>(in + out));
    for (double& w : layer.weight.storage()) w = rng.uniform(-bound, bound);
    layer.bias.assign(out, 0.0);
    layer.activation = activations[i];
    p.layers.push_back(std::move(layer));
    in = out;
  }
  p.validate();
  return p;
}

MlpParams make_encoder(std::size_t embedding_dim, std::uint64_t seed) {
  return make_encoder(embedding_dim, {1024, 1024, 512, 512}, seed);
}

MlpParams make_encoder(std::size_t embedding_dim, const std::vector<std::size_t>& widths,
                       std::uint64_t seed) {
  // First layer linear, every later layer ReLU activated.
  std::vector<Activation> acts(widths.size(), Activation::Relu);
  acts.front() = Activation::None;
  return make_mlp(embedding_dim, widths, acts, seed);
}

MlpForwardResult mlp_forward(const MlpParams& params, const Matrix& input,
                             const DropoutSpec& dropout, std::uint64_t seed) {
  params.validate();
  if (input.cols() != params.input_dim()) {
    std::ostringstream os;
    os << "mlp_forward: input width " << input.cols() << " != layer width "
       << params.input_dim();
    throw ShapeError(os.str());
  }
  if (dropout.rate < 0.0 || dropout.rate >= 1.0)
    throw InvalidInputError("mlp_forward: dropout rate must be in [0,1)");

  MlpCache cache;
  cache.params = &params;
  cache.params_version = params.version;
  cache.batch = input.rows();
  cache.keep_scale = dropout.active() ? 1.0 / (1.0 - dropout.rate) : 1.0;

  Rng rng(seed);
  Matrix x = input;
  for (const auto& layer : params.layers) {
    cache.inputs.push_back(x);
    Matrix pre = matmul_nt(x, layer.weight);
    add_row_bias(pre, layer.bias);
    cache.pre.push_back(pre);

    Matrix out = std::move(pre);
    std::vector<std::uint8_t> mask;
    if (layer.activation == Activation::Relu) {
      for (double& v : out.storage()) v = v > 0.0 ? v : 0.0;
      if (dropout.active()) {
        mask.resize(out.size());
        double* d = out.data();
        for (std::size_t i = 0; i < out.size(); ++i) {
          mask[i] = rng.uniform01() >= dropout.rate ? 1 : 0;
          d[i] = mask[i] ? d[i] * cache.keep_scale : 0.0;
        }
      }
    }
    cache.keep.push_back(std::move(mask));
    x = std::move(out);
  }
  return MlpForwardResult{std::move(x), std::move(cache)};
}

MlpGrads mlp_backward(const MlpParams& params, const MlpCache& cache,
                      const Matrix& upstream_grad) {
  if (cache.params != &params || cache.params_version != params.version ||
      cache.inputs.size() != params.layers.size())
    throw InvalidInputError("invalid-cache: cache does not match these parameters");
  if (upstream_grad.rows() != cache.batch ||
      upstream_grad.cols() != params.output_dim())
    throw InvalidInputError("invalid-cache: upstream gradient shape mismatch");

  MlpGrads grads;
  grads.layers.resize(params.layers.size());

  Matrix g = upstream_grad;
  for (std::size_t li = params.layers.size(); li-- > 0;) {
    const auto& layer = params.layers[li];
    if (layer.activation == Activation::Relu) {
      if (!cache.keep[li].empty()) {
        double* gd = g.data();
        const std::uint8_t* keep = cache.keep[li].data();
        for (std::size_t i = 0; i < g.size(); ++i)
          gd[i] = keep[i] ? gd[i] * cache.keep_scale : 0.0;
      }
      double* gd = g.data();
      const double* pre = cache.pre[li].data();
      for (std::size_t i = 0; i < g.size(); ++i)
        if (pre[i] <= 0.0) gd[i] = 0.0;
    }
    grads.layers[li].weight = matmul_tn(g, cache.inputs[li]); // out x in
    grads.layers[li].bias.assign(layer.out_dim(), 0.0);
    for (std::size_t r = 0; r < g.rows(); ++r) {
      const double* gr = g.row(r);
      for (std::size_t c = 0; c < g.cols(); ++c) grads.layers[li].bias[c] += gr[c];
    }
    if (li > 0) g = matmul(g, layer.weight);
  }
  grads.input_grad = matmul(g, params.layers.front().weight);
  return grads;
}

Matrix softmax_rows(const Matrix& logits) {
  Matrix out = logits;
  for (std::size_t r = 0; r < out.rows(); ++r) {
    double* row = out.row(r);
    double mx = row[0];
    for (std::size_t c = 1; c < out.cols(); ++c) mx = std::max(mx, row[c]);
    double sum = 0.0;
    for (std::size_t c = 0; c < out.cols(); ++c) {
      row[c] = std::exp(row[c] - mx);
      sum += row[c];
    }
    for (std::size_t c = 0; c < out.cols(); ++c) row[c] /= sum;
  }
  return out;
}

CrossEntropyResult softmax_cross_entropy(const Matrix& logits,
                                         const std::vector<int>& targets) {
  if (targets.size() != logits.rows())
    throw ShapeError("softmax_cross_entropy: one target per row required");
  const std::size_t n = logits.rows(), k = logits.cols();
  for (int t : targets)
    if (t < 0 || static_cast<std::size_t>(t) >= k)
      throw InvalidInputError("softmax_cross_entropy: target index out of range");

  Matrix probs = softmax_rows(logits);
  double loss = 0.0;
  for (std::size_t r = 0; r < n; ++r)
    loss -= std::log(probs.at(r, static_cast<std::size_t>(targets[r])));
  loss /= static_cast<double>(n);

  Matrix grad = std::move(probs);
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t r = 0; r < n; ++r) {
    double* row = grad.row(r);
    row[targets[r]] -= 1.0;
    for (std::size_t c = 0; c < k; ++c) row[c] *= inv_n;
  }
  return CrossEntropyResult{loss, std::move(grad)};
}

std::size_t total_size(const std::vector<ParamView>& views) {
  std::size_t n = 0;
  for (const auto& v : views) n += v.size;
  return n;
}

std::vector<ParamView> param_views(MlpParams& p) {
  std::vector<ParamView> views;
  for (auto& layer : p.layers) {
    views.push_back({layer.weight.data(), layer.weight.size()});
    views.push_back({layer.bias.data(), layer.bias.size()});
  }
  return views;
}

std::vector<ParamView> grad_views(MlpGrads& g) {
  std::vector<ParamView> views;
  for (auto& layer : g.layers) {
    views.push_back({layer.weight.data(), layer.weight.size()});
    views.push_back({layer.bias.data(), layer.bias.size()});
  }
  return views;
}

AdamState::AdamState(std::size_t n_params, AdamConfig cfg)
    : cfg_(cfg), m_(n_params, 0.0), v_(n_params, 0.0) {}

void AdamState::apply(const std::vector<ParamView>& params,
                      const std::vector<ParamView>& grads) {
  if (total_size(params) != m_.size() || total_size(grads) != m_.size())
    throw ShapeError("AdamState: parameter/gradient size mismatch");
  ++step_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
  std::size_t off = 0;
  for (std::size_t b = 0; b < params.size(); ++b) {
    if (params[b].size != grads[b].size)
      throw ShapeError("AdamState: block size mismatch");
    double* p = params[b].data;
    const double* g = grads[b].data;
    for (std::size_t i = 0; i < params[b].size; ++i, ++off) {
      m_[off] = cfg_.beta1 * m_[off] + (1.0 - cfg_.beta1) * g[i];
      v_[off] = cfg_.beta2 * v_[off] + (1.0 - cfg_.beta2) * g[i] * g[i];
      const double mhat = m_[off] / bc1;
      const double vhat = v_[off] / bc2;
      p[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
  }
}

GradCheckReport grad_check(const std::function<double()>& loss,
                           const std::function<std::vector<double>()>& analytic_grad,
                           const std::vector<ParamView>& params,
                           const GradCheckOptions& opts) {
  if (opts.closure_dropout != DropoutMode::Off)
    throw InvalidInputError(
        "deterministic-closure-required: gradient checks need dropout off");
  const double l0 = loss();
  if (loss() != l0)
    throw InvalidInputError(
        "deterministic-closure-required: loss closure is not deterministic");

  const std::vector<double> analytic = analytic_grad();
  const std::size_t n = total_size(params);
  if (analytic.size() != n)
    throw ShapeError("grad_check: analytic gradient length mismatch");

  std::vector<std::size_t> indices;
  if (opts.max_samples > 0 && opts.max_samples < n) {
    Rng rng(opts.seed);
    indices.resize(opts.max_samples);
    for (auto& ix : indices) ix = static_cast<std::size_t>(rng.uniform_int(n));
  } else {
    indices.resize(n);
    for (std::size_t i = 0; i < n; ++i) indices[i] = i;
  }

  auto locate = [&](std::size_t flat) -> double* {
    for (const auto& v : params) {
      if (flat < v.size) return v.data + flat;
      flat -= v.size;
    }
    throw ShapeError("grad_check: index out of range");
  };

  GradCheckReport report;
  report.checked = indices.size();
  for (std::size_t flat : indices) {
    double* p = locate(flat);
    const double saved = *p;
    *p = saved + opts.step;
    const double fp = loss();
    *p = saved - opts.step;
    const double fm = loss();
    *p = saved;
    const double numeric = (fp - fm) / (2.0 * opts.step);
    const double a = analytic[flat];
    const double denom = std::max(std::abs(a), std::abs(numeric));
    double rel = 0.0;
    if (denom >= 1e-8) rel = std::abs(a - numeric) / std::max(denom, 1e-6);
    if (rel > report.max_rel_err) {
      report.max_rel_err = rel;
      report.worst_index = flat;
      report.worst_analytic = a;
      report.worst_numeric = numeric;
    }
  }
  return report;
}

} // namespace pdls
