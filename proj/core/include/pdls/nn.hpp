#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "pdls/matrix.hpp"

namespace pdls {

enum class Activation { None, Relu };

struct DenseLayer {
  Matrix weight; // out x in
  std::vector<double> bias;
  Activation activation = Activation::None;

  std::size_t in_dim() const { return weight.cols(); }
  std::size_t out_dim() const { return weight.rows(); }
};

/// Parameters of a fully-connected stack. The default specimen encoder is
/// in -> 1024 -> 1024 -> 512 -> 512 with ReLU on the last three layers.
struct MlpParams {
  std::vector<DenseLayer> layers;
  std::uint64_t version = 0; // bumped on every optimizer update

  std::size_t input_dim() const { return layers.front().in_dim(); }
  std::size_t output_dim() const { return layers.back().out_dim(); }
  void validate() const;
  void mark_updated() { ++version; }
};

/// Builds a seeded MLP. Weights are uniform in +-sqrt(6/(in+out)); biases
/// start at zero.
MlpParams make_mlp(std::size_t input_dim, const std::vector<std::size_t>& widths,
                   const std::vector<Activation>& activations, std::uint64_t seed);

/// The default encoder stack for a given embedding width.
MlpParams make_encoder(std::size_t embedding_dim, std::uint64_t seed);
MlpParams make_encoder(std::size_t embedding_dim, const std::vector<std::size_t>& widths,
                       std::uint64_t seed);

enum class DropoutMode { Off, Train, McSample };

/// Dropout is placed after each ReLU. Surviving activations are scaled by
/// 1/(1-rate); in Off mode the layer output passes through untouched.
struct DropoutSpec {
  double rate = 0.5;
  DropoutMode mode = DropoutMode::Off;

  bool active() const { return mode != DropoutMode::Off && rate > 0.0; }
};

struct MlpCache {
  const MlpParams* params = nullptr;
  std::uint64_t params_version = 0;
  std::vector<Matrix> inputs;              // input to each layer
  std::vector<Matrix> pre;                 // pre-activation per layer
  std::vector<std::vector<std::uint8_t>> keep; // dropout keep masks (empty if unused)
  double keep_scale = 1.0;
  std::size_t batch = 0;
};

struct MlpForwardResult {
  Matrix output;
  MlpCache cache;
};

/// Deterministic given (params, input, dropout, seed); the cache is
/// sufficient for one matching backward call.
MlpForwardResult mlp_forward(const MlpParams& params, const Matrix& input,
                             const DropoutSpec& dropout, std::uint64_t seed);

struct DenseLayerGrads {
  Matrix weight;
  std::vector<double> bias;
};

struct MlpGrads {
  std::vector<DenseLayerGrads> layers;
  Matrix input_grad;
};

/// Reverse pass. The cache must come from a forward call on the same,
/// unmodified params; anything else raises an invalid-cache error.
MlpGrads mlp_backward(const MlpParams& params, const MlpCache& cache,
                      const Matrix& upstream_grad);

/// Row-wise softmax; every output row sums to 1.
Matrix softmax_rows(const Matrix& logits);

struct CrossEntropyResult {
  double loss = 0.0;
  Matrix logit_grads;
};

/// Mean negative log softmax probability of the target class, with the
/// standard (softmax - onehot)/n gradient.
CrossEntropyResult softmax_cross_entropy(const Matrix& logits,
                                         const std::vector<int>& targets);

// --- optimizer ------------------------------------------------------------

struct ParamView {
  double* data = nullptr;
  std::size_t size = 0;
};

std::size_t total_size(const std::vector<ParamView>& views);
std::vector<ParamView> param_views(MlpParams& p);
std::vector<ParamView> grad_views(MlpGrads& g);

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam with bias correction over a flat view of the parameters.
class AdamState {
public:
  AdamState() = default;
  AdamState(std::size_t n_params, AdamConfig cfg);

  void apply(const std::vector<ParamView>& params, const std::vector<ParamView>& grads);

  std::uint64_t steps() const { return step_; }
  const AdamConfig& config() const { return cfg_; }

private:
  AdamConfig cfg_;
  std::uint64_t step_ = 0;
  std::vector<double> m_;
  std::vector<double> v_;
};

// --- finite-difference gradient check --------------------------------------

struct GradCheckOptions {
  double step = 1e-5;
  std::size_t max_samples = 0; // 0 = every parameter
  std::uint64_t seed = 0;      // sampling seed when max_samples > 0
  DropoutMode closure_dropout = DropoutMode::Off;
};

struct GradCheckReport {
  double max_rel_err = 0.0;
  std::size_t checked = 0;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

/// Compares an analytic gradient against central finite differences. The
/// loss closure must be a deterministic function of the parameters, so
/// train-mode dropout closures are rejected.
GradCheckReport grad_check(const std::function<double()>& loss,
                           const std::function<std::vector<double>()>& analytic_grad,
                           const std::vector<ParamView>& params,
                           const GradCheckOptions& opts = {});

} // namespace pdls
