#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "pdls/matrix.hpp"
#include "pdls/nn.hpp"
#include "pdls/taxonomy.hpp"

namespace pdls {

enum class Split { Train, Val, Test, Calibration };

std::string_view split_id(Split s);
Split split_from_id(std::string_view id);

/// One specimen's quality-assured tile embeddings plus its ground truth.
/// Classification is specimen-level: the bag covers every tile of the
/// specimen, never a single slide.
struct SpecimenBag {
  std::string specimen_id;
  Matrix tiles; // n x embedding_dim, n >= 1
  SpecimenClass label = SpecimenClass::Other;
  std::string lab_id;
  Split split = Split::Train;
  std::string diagnosis; // empty when untagged

  // Generator-only metadata: indices of the class-signal tiles. Never read
  // by training code; attention-salience tests compare against it.
  std::vector<std::size_t> diagnostic_tiles;

  std::size_t n_tiles() const { return tiles.rows(); }
  std::size_t dim() const { return tiles.cols(); }
};

/// Gated attention: score_i = w^T (tanh(V h_i) * sigmoid(U h_i)).
struct AttentionParams {
  Matrix v; // Da x D
  Matrix u; // Da x D
  std::vector<double> w;

  std::size_t hidden_dim() const { return w.size(); }
  std::size_t input_dim() const { return v.cols(); }
};

AttentionParams make_attention(std::size_t input_dim, std::size_t hidden_dim,
                               std::uint64_t seed);

/// Linear task head with softmax output. For binary heads, index 1 is the
/// positive (first-named) class.
struct TaskHead {
  std::string name;
  Matrix weight; // k x D
  std::vector<double> bias;
  std::vector<std::string> class_names; // one per output row

  std::size_t classes() const { return weight.rows(); }
  std::size_t class_index(std::string_view cls) const;
};

TaskHead make_head(std::string name, std::size_t input_dim,
                   std::vector<std::string> class_names, std::uint64_t seed);

struct HeadSpec {
  std::string name;
  std::vector<std::string> class_names;
};

/// One member of the hierarchy: per-tile encoder, attention pooling, task
/// heads. The encoder output width must match the attention/head input
/// width.
struct BagModel {
  MlpParams encoder;
  AttentionParams attention;
  std::vector<TaskHead> heads;
  double dropout_rate = 0.5;

  std::size_t embedding_dim() const { return encoder.input_dim(); }
  void validate() const;
  void mark_updated() { encoder.mark_updated(); }
  const TaskHead& head(std::string_view name) const;
};

struct BagModelConfig {
  std::vector<std::size_t> encoder_widths = {1024, 1024, 512, 512};
  std::size_t attention_dim = 256;
  double dropout_rate = 0.5;
};

BagModel make_bag_model(std::size_t embedding_dim, const BagModelConfig& cfg,
                        const std::vector<HeadSpec>& heads, std::uint64_t seed);

// --- attention pooling -----------------------------------------------------

struct AttentionPool {
  std::vector<double> pooled;  // D
  std::vector<double> weights; // n, in original tile order; sums to 1
  // backward cache
  std::vector<double> scores;
  std::vector<std::size_t> order; // canonical (score-sorted) summation order
  Matrix tanh_vh;                 // n x Da
  Matrix sig_uh;                  // n x Da
};

/// Pools tile representations into one bag vector. Sums run in canonical
/// sorted-score order, so the pooled vector does not depend on tile order.
AttentionPool attention_pool(const Matrix& encoded, const AttentionParams& attention);

struct AttentionGrads {
  Matrix v;
  Matrix u;
  std::vector<double> w;
  Matrix encoded_grad; // n x D
};

AttentionGrads attention_backward(const Matrix& encoded, const AttentionParams& attention,
                                  const AttentionPool& pool,
                                  const std::vector<double>& pooled_grad);

// --- bag forward/backward ---------------------------------------------------

struct BagForward {
  std::vector<std::vector<double>> head_probs;  // per head, sums to 1
  std::vector<std::vector<double>> head_logits; // per head
  std::vector<double> attention_weights;        // per tile
  std::vector<double> pooled;
  Matrix encoded; // n x encoder-output tile representations
  MlpCache encoder_cache;
  AttentionPool pool;
};

BagForward bag_forward(const BagModel& model, const Matrix& tiles,
                       const DropoutSpec& dropout, std::uint64_t seed);
BagForward bag_forward(const BagModel& model, const SpecimenBag& bag,
                       const DropoutSpec& dropout, std::uint64_t seed);

struct HeadGrads {
  Matrix weight;
  std::vector<double> bias;
};

struct BagGrads {
  MlpGrads encoder;
  AttentionGrads attention;
  std::vector<HeadGrads> heads;
};

/// Backpropagates per-head logit gradients through heads, attention and
/// encoder. Heads with an empty gradient vector receive exactly zero
/// parameter gradients.
BagGrads bag_backward(const BagModel& model, const BagForward& fwd,
                      const std::vector<std::vector<double>>& head_logit_grads);

std::vector<ParamView> param_views(BagModel& m);
std::vector<ParamView> grad_views(BagGrads& g);
BagGrads zero_grads_like(const BagModel& m);

// --- masked multi-task loss --------------------------------------------------

enum class TaskGroup { High, Intermediate, Rest };

TaskGroup task_group(SpecimenClass c);
std::string_view task_group_id(TaskGroup g);

inline constexpr std::array<std::string_view, 3> kSuspectTaskHeads = {
    "high_vs_int", "high_vs_rest", "int_vs_rest"};

/// Per-head binary targets for the suspect subclassifier; exactly two of
/// the three tasks are active for any ground-truth group. Index 1 is the
/// head's positive (first-named) class.
std::array<std::optional<int>, 3> task_targets(TaskGroup g);

struct MaskedLoss {
  double loss = 0.0;
  std::vector<std::vector<double>> head_logit_grads; // zero-size for masked heads
};

/// Mean cross-entropy over the active heads only. Masked heads get an
/// empty gradient so their parameters receive bitwise-zero updates.
MaskedLoss masked_loss(const std::vector<std::vector<double>>& head_logits,
                       const std::vector<std::optional<int>>& targets);

// --- training ----------------------------------------------------------------

struct TrainExample {
  const SpecimenBag* bag = nullptr;
  std::vector<std::optional<int>> targets; // per head; nullopt = masked
};

struct FitConfig {
  AdamConfig adam;
  int max_epochs = 100;
  int patience = 10;
  int bag_batch = 1; // bags per optimizer step
  std::uint64_t seed = 0;
  bool verbose = false;
};

struct EpochStats {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
};

struct TrainLog {
  std::vector<EpochStats> epochs;
  int best_epoch = -1;
  double best_val_loss = 0.0;
};

/// One-bag-per-step Adam training with early stopping on validation loss;
/// the parameters from the best validation epoch are restored before
/// returning. Deterministic given the seed.
TrainLog fit(BagModel& model, const std::vector<TrainExample>& train,
             const std::vector<TrainExample>& val, const FitConfig& cfg);

/// Mean masked loss over a set of examples with dropout off.
double evaluate_loss(const BagModel& model, const std::vector<TrainExample>& examples);

} // namespace pdls
