#include "pdls/mil.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "pdls/errors.hpp"
#include "pdls/rng.hpp"

namespace pdls {

std::string_view split_id(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
    case Split::Calibration: return "calibration";
  }
  throw InvalidInputError("unknown split");
}

Split split_from_id(std::string_view id) {
  if (id == "train") return Split::Train;
  if (id == "val") return Split::Val;
  if (id == "test") return Split::Test;
  if (id == "calibration") return Split::Calibration;
  throw InvalidInputError("unknown split id: " + std::string(id));
}

AttentionParams make_attention(std::size_t input_dim, std::size_t hidden_dim,
                               std::uint64_t seed) {
  if (input_dim == 0 || hidden_dim == 0)
    throw InvalidInputError("attention dims must be positive");
  Rng rng(seed);
  AttentionParams att;
  const double limit = std::sqrt(6.0 / double(hidden_dim + input_dim));
  att.v = Matrix(hidden_dim, input_dim);
  att.u = Matrix(hidden_dim, input_dim);
  for (double& x : att.v.storage()) x = rng.uniform(-limit, limit);
  for (double& x : att.u.storage()) x = rng.uniform(-limit, limit);
  const double wlimit = std::sqrt(6.0 / double(hidden_dim + 1));
  att.w.resize(hidden_dim);
  for (double& x : att.w) x = rng.uniform(-wlimit, wlimit);
  return att;
}

TaskHead make_head(std::string name, std::size_t input_dim,
                   std::vector<std::string> class_names, std::uint64_t seed) {
  const std::size_t classes = class_names.size();
  if (classes < 2) throw InvalidInputError("head needs at least 2 classes");
  Rng rng(seed);
  TaskHead head;
  head.name = std::move(name);
  head.weight = Matrix(classes, input_dim);
  const double limit = std::sqrt(6.0 / double(classes + input_dim));
  for (double& x : head.weight.storage()) x = rng.uniform(-limit, limit);
  head.bias.assign(classes, 0.0);
  head.class_names = std::move(class_names);
  return head;
}

std::size_t TaskHead::class_index(std::string_view cls) const {
  for (std::size_t i = 0; i < class_names.size(); ++i)
    if (class_names[i] == cls) return i;
  throw InvalidInputError("head '" + name + "' has no class '" + std::string(cls) + "'");
}

void BagModel::validate() const {
  encoder.validate();
  const std::size_t d = encoder.output_dim();
  if (attention.input_dim() != d || attention.u.cols() != d ||
      attention.u.rows() != attention.v.rows() ||
      attention.w.size() != attention.v.rows())
    throw ShapeError("attention does not match encoder output width");
  if (heads.empty()) throw InvalidInputError("bag model has no task heads");
  for (const TaskHead& h : heads) {
    if (h.weight.cols() != d || h.bias.size() != h.weight.rows())
      throw ShapeError("task head '" + h.name + "' does not match encoder output width");
    if (h.class_names.size() != h.weight.rows())
      throw ShapeError("task head '" + h.name + "' class names do not match output rows");
  }
}

const TaskHead& BagModel::head(std::string_view name) const {
  for (const TaskHead& h : heads)
    if (h.name == name) return h;
  throw InvalidInputError("no task head named '" + std::string(name) + "'");
}

BagModel make_bag_model(std::size_t embedding_dim, const BagModelConfig& cfg,
                        const std::vector<HeadSpec>& heads, std::uint64_t seed) {
  if (heads.empty()) throw InvalidInputError("bag model needs at least one head");
  BagModel m;
  m.encoder = make_encoder(embedding_dim, cfg.encoder_widths, derive_seed(seed, "encoder"));
  m.attention = make_attention(m.encoder.output_dim(), cfg.attention_dim,
                               derive_seed(seed, "attention"));
  m.dropout_rate = cfg.dropout_rate;
  m.heads.reserve(heads.size());
  for (std::size_t i = 0; i < heads.size(); ++i) {
    m.heads.push_back(make_head(heads[i].name, m.encoder.output_dim(),
                                heads[i].class_names,
                                derive_seed(derive_seed(seed, "head"), i)));
  }
  m.validate();
  return m;
}

// --- attention pooling -----------------------------------------------------

AttentionPool attention_pool(const Matrix& encoded, const AttentionParams& attention) {
  const std::size_t n = encoded.rows();
  const std::size_t d = encoded.cols();
  const std::size_t da = attention.hidden_dim();
  if (n == 0) throw InvalidInputError("cannot pool an empty bag");
  if (d != attention.input_dim()) throw ShapeError("tile width does not match attention");

  AttentionPool out;
  // Pre-activations for both gates; the matmuls keep a fixed inner order.
  Matrix vh = matmul_nt(encoded, attention.v); // n x Da
  Matrix uh = matmul_nt(encoded, attention.u);
  out.tanh_vh = Matrix(n, da);
  out.sig_uh = Matrix(n, da);
  out.scores.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < da; ++j) {
      const double t = std::tanh(vh.at(i, j));
      const double m = 1.0 / (1.0 + std::exp(-uh.at(i, j)));
      out.tanh_vh.at(i, j) = t;
      out.sig_uh.at(i, j) = m;
      s += attention.w[j] * t * m;
    }
    out.scores[i] = s;
  }

  // Canonical summation order: ascending score, ties by index. Reordering
  // the tiles therefore cannot change the floating-point result.
  out.order.resize(n);
  std::iota(out.order.begin(), out.order.end(), std::size_t{0});
  std::sort(out.order.begin(), out.order.end(), [&](std::size_t a, std::size_t b) {
    if (out.scores[a] != out.scores[b]) return out.scores[a] < out.scores[b];
    return a < b;
  });

  const double smax = out.scores[out.order.back()];
  double denom = 0.0;
  std::vector<double> expv(n);
  for (std::size_t i : out.order) {
    expv[i] = std::exp(out.scores[i] - smax);
    denom += expv[i];
  }
  out.weights.resize(n);
  for (std::size_t i = 0; i < n; ++i) out.weights[i] = expv[i] / denom;

  out.pooled.assign(d, 0.0);
  for (std::size_t i : out.order) {
    const double* row = encoded.row(i);
    const double a = out.weights[i];
    for (std::size_t j = 0; j < d; ++j) out.pooled[j] += a * row[j];
  }
  return out;
}

AttentionGrads attention_backward(const Matrix& encoded, const AttentionParams& attention,
                                  const AttentionPool& pool,
                                  const std::vector<double>& pooled_grad) {
  const std::size_t n = encoded.rows();
  const std::size_t d = encoded.cols();
  const std::size_t da = attention.hidden_dim();
  if (pool.weights.size() != n || pool.tanh_vh.rows() != n)
    throw ShapeError("pool cache does not match bag");
  if (pooled_grad.size() != d) throw ShapeError("pooled gradient width mismatch");

  // d loss / d a_i, then softmax backward to the raw scores.
  std::vector<double> da_grad(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = encoded.row(i);
    double acc = 0.0;
    for (std::size_t j = 0; j < d; ++j) acc += pooled_grad[j] * row[j];
    da_grad[i] = acc;
  }
  double mix = 0.0;
  for (std::size_t i : pool.order) mix += pool.weights[i] * da_grad[i];
  std::vector<double> ds(n);
  for (std::size_t i = 0; i < n; ++i) ds[i] = pool.weights[i] * (da_grad[i] - mix);

  AttentionGrads g;
  g.w.assign(da, 0.0);
  Matrix pre_v(n, da); // gradient at V h_i
  Matrix pre_u(n, da);
  for (std::size_t i : pool.order) {
    for (std::size_t j = 0; j < da; ++j) {
      const double t = pool.tanh_vh.at(i, j);
      const double m = pool.sig_uh.at(i, j);
      g.w[j] += ds[i] * t * m;
      const double de = ds[i] * attention.w[j];
      pre_v.at(i, j) = de * m * (1.0 - t * t);
      pre_u.at(i, j) = de * t * m * (1.0 - m);
    }
  }
  g.v = matmul_tn(pre_v, encoded); // Da x D
  g.u = matmul_tn(pre_u, encoded);

  g.encoded_grad = matmul(pre_v, attention.v);
  add_inplace(g.encoded_grad, matmul(pre_u, attention.u));
  for (std::size_t i = 0; i < n; ++i) {
    double* row = g.encoded_grad.row(i);
    const double a = pool.weights[i];
    for (std::size_t j = 0; j < d; ++j) row[j] += a * pooled_grad[j];
  }
  return g;
}

// --- bag forward / backward --------------------------------------------------

BagForward bag_forward(const BagModel& model, const Matrix& tiles,
                       const DropoutSpec& dropout, std::uint64_t seed) {
  model.validate();
  if (tiles.rows() == 0) throw InvalidInputError("cannot run an empty bag");
  if (tiles.cols() != model.embedding_dim())
    throw ShapeError("tile embedding width does not match encoder");

  BagForward fwd;
  DropoutSpec spec = dropout;
  spec.rate = model.dropout_rate;
  MlpForwardResult enc = mlp_forward(model.encoder, tiles, spec, seed);
  fwd.encoded = std::move(enc.output);
  fwd.encoder_cache = std::move(enc.cache);
  fwd.pool = attention_pool(fwd.encoded, model.attention);
  fwd.pooled = fwd.pool.pooled;
  fwd.attention_weights = fwd.pool.weights;

  fwd.head_logits.resize(model.heads.size());
  fwd.head_probs.resize(model.heads.size());
  for (std::size_t h = 0; h < model.heads.size(); ++h) {
    const TaskHead& head = model.heads[h];
    const std::size_t k = head.classes();
    std::vector<double> z(k);
    for (std::size_t c = 0; c < k; ++c) {
      const double* wrow = head.weight.row(c);
      double acc = 0.0;
      for (std::size_t j = 0; j < head.weight.cols(); ++j) acc += wrow[j] * fwd.pooled[j];
      z[c] = acc + head.bias[c];
    }
    Matrix zm(1, k);
    std::copy(z.begin(), z.end(), zm.row(0));
    Matrix p = softmax_rows(zm);
    fwd.head_logits[h] = std::move(z);
    fwd.head_probs[h].assign(p.row(0), p.row(0) + k);
  }
  return fwd;
}

BagForward bag_forward(const BagModel& model, const SpecimenBag& bag,
                       const DropoutSpec& dropout, std::uint64_t seed) {
  return bag_forward(model, bag.tiles, dropout, seed);
}

BagGrads bag_backward(const BagModel& model, const BagForward& fwd,
                      const std::vector<std::vector<double>>& head_logit_grads) {
  if (head_logit_grads.size() != model.heads.size())
    throw ShapeError("one logit gradient per head required");
  const std::size_t d = model.encoder.output_dim();

  BagGrads g;
  g.heads.resize(model.heads.size());
  std::vector<double> pooled_grad(d, 0.0);
  for (std::size_t h = 0; h < model.heads.size(); ++h) {
    const TaskHead& head = model.heads[h];
    const std::size_t k = head.classes();
    g.heads[h].weight = Matrix(k, d);
    g.heads[h].bias.assign(k, 0.0);
    const std::vector<double>& dz = head_logit_grads[h];
    if (dz.empty()) continue; // masked head: gradients stay exactly zero
    if (dz.size() != k) throw ShapeError("logit gradient width mismatch");
    for (std::size_t c = 0; c < k; ++c) {
      g.heads[h].bias[c] = dz[c];
      double* wrow = g.heads[h].weight.row(c);
      const double* hw = head.weight.row(c);
      for (std::size_t j = 0; j < d; ++j) {
        wrow[j] = dz[c] * fwd.pooled[j];
        pooled_grad[j] += dz[c] * hw[j];
      }
    }
  }

  g.attention = attention_backward(fwd.encoded, model.attention, fwd.pool, pooled_grad);
  g.encoder = mlp_backward(model.encoder, fwd.encoder_cache, g.attention.encoded_grad);
  return g;
}

std::vector<ParamView> param_views(BagModel& m) {
  std::vector<ParamView> v = param_views(m.encoder);
  v.push_back({m.attention.v.storage().data(), m.attention.v.storage().size()});
  v.push_back({m.attention.u.storage().data(), m.attention.u.storage().size()});
  v.push_back({m.attention.w.data(), m.attention.w.size()});
  for (TaskHead& h : m.heads) {
    v.push_back({h.weight.storage().data(), h.weight.storage().size()});
    v.push_back({h.bias.data(), h.bias.size()});
  }
  return v;
}

std::vector<ParamView> grad_views(BagGrads& g) {
  std::vector<ParamView> v = grad_views(g.encoder);
  v.push_back({g.attention.v.storage().data(), g.attention.v.storage().size()});
  v.push_back({g.attention.u.storage().data(), g.attention.u.storage().size()});
  v.push_back({g.attention.w.data(), g.attention.w.size()});
  for (HeadGrads& h : g.heads) {
    v.push_back({h.weight.storage().data(), h.weight.storage().size()});
    v.push_back({h.bias.data(), h.bias.size()});
  }
  return v;
}

BagGrads zero_grads_like(const BagModel& m) {
  BagGrads g;
  g.encoder.layers.resize(m.encoder.layers.size());
  for (std::size_t i = 0; i < m.encoder.layers.size(); ++i) {
    g.encoder.layers[i].weight =
        Matrix(m.encoder.layers[i].weight.rows(), m.encoder.layers[i].weight.cols());
    g.encoder.layers[i].bias.assign(m.encoder.layers[i].bias.size(), 0.0);
  }
  g.attention.v = Matrix(m.attention.v.rows(), m.attention.v.cols());
  g.attention.u = Matrix(m.attention.u.rows(), m.attention.u.cols());
  g.attention.w.assign(m.attention.w.size(), 0.0);
  g.heads.resize(m.heads.size());
  for (std::size_t h = 0; h < m.heads.size(); ++h) {
    g.heads[h].weight = Matrix(m.heads[h].weight.rows(), m.heads[h].weight.cols());
    g.heads[h].bias.assign(m.heads[h].bias.size(), 0.0);
  }
  return g;
}

// --- masked loss ---------------------------------------------------------------

TaskGroup task_group(SpecimenClass c) {
  switch (c) {
    case SpecimenClass::MelHigh: return TaskGroup::High;
    case SpecimenClass::MelInt: return TaskGroup::Intermediate;
    default: return TaskGroup::Rest;
  }
}

std::string_view task_group_id(TaskGroup g) {
  switch (g) {
    case TaskGroup::High: return "high";
    case TaskGroup::Intermediate: return "intermediate";
    case TaskGroup::Rest: return "rest";
  }
  throw InvalidInputError("unknown task group");
}

std::array<std::optional<int>, 3> task_targets(TaskGroup g) {
  // Head order: high_vs_int, high_vs_rest, int_vs_rest; index 1 is the
  // first-named class. Each group trains exactly two of the three tasks.
  switch (g) {
    case TaskGroup::High: return {1, 1, std::nullopt};
    case TaskGroup::Intermediate: return {0, std::nullopt, 1};
    case TaskGroup::Rest: return {std::nullopt, 0, 0};
  }
  throw InvalidInputError("unknown task group");
}

MaskedLoss masked_loss(const std::vector<std::vector<double>>& head_logits,
                       const std::vector<std::optional<int>>& targets) {
  if (head_logits.size() != targets.size())
    throw ShapeError("one target per head required");
  std::size_t active = 0;
  for (const auto& t : targets)
    if (t.has_value()) ++active;
  if (active == 0) throw InvalidInputError("at least one task must be active");

  MaskedLoss out;
  out.head_logit_grads.resize(head_logits.size());
  for (std::size_t h = 0; h < head_logits.size(); ++h) {
    if (!targets[h].has_value()) continue;
    const std::vector<double>& z = head_logits[h];
    Matrix zm(1, z.size());
    std::copy(z.begin(), z.end(), zm.row(0));
    CrossEntropyResult ce = softmax_cross_entropy(zm, std::vector<int>{*targets[h]});
    out.loss += ce.loss / double(active);
    out.head_logit_grads[h].resize(z.size());
    for (std::size_t c = 0; c < z.size(); ++c)
      out.head_logit_grads[h][c] = ce.logit_grads.at(0, c) / double(active);
  }
  return out;
}

// --- training --------------------------------------------------------------------

double evaluate_loss(const BagModel& model, const std::vector<TrainExample>& examples) {
  if (examples.empty()) throw InvalidInputError("cannot evaluate an empty split");
  double total = 0.0;
  for (const TrainExample& ex : examples) {
    BagForward fwd = bag_forward(model, *ex.bag, {model.dropout_rate, DropoutMode::Off}, 0);
    total += masked_loss(fwd.head_logits, ex.targets).loss;
  }
  return total / double(examples.size());
}

namespace {

void check_examples(const BagModel& model, const std::vector<TrainExample>& examples,
                    const char* split) {
  if (examples.empty())
    throw InvalidInputError(std::string("empty ") + split + " split");
  for (const TrainExample& ex : examples) {
    if (ex.bag == nullptr) throw InvalidInputError("null bag in training data");
    if (ex.targets.size() != model.heads.size())
      throw ShapeError("example target count does not match heads");
    for (std::size_t h = 0; h < ex.targets.size(); ++h) {
      if (ex.targets[h] &&
          (*ex.targets[h] < 0 || std::size_t(*ex.targets[h]) >= model.heads[h].classes()))
        throw InvalidInputError("target out of range for head " + model.heads[h].name);
    }
  }
}

} // namespace

TrainLog fit(BagModel& model, const std::vector<TrainExample>& train,
             const std::vector<TrainExample>& val, const FitConfig& cfg) {
  model.validate();
  check_examples(model, train, "train");
  check_examples(model, val, "val");
  if (cfg.bag_batch < 1) throw InvalidInputError("bag_batch must be >= 1");
  if (cfg.max_epochs < 0 || cfg.patience < 0)
    throw InvalidInputError("max_epochs and patience must be non-negative");

  // All-identical targets cannot train a discriminative model; reject early.
  bool all_same = true;
  for (std::size_t i = 1; i < train.size() && all_same; ++i)
    all_same = train[i].targets == train[0].targets;
  if (all_same && train.size() > 0)
    throw DegenerateLabelsError("all training examples share one target signature");

  TrainLog log;
  log.best_val_loss = evaluate_loss(model, val);
  log.best_epoch = 0;
  if (cfg.max_epochs == 0) return log;

  std::vector<ParamView> params = param_views(model);
  AdamState adam(total_size(params), cfg.adam);
  BagModel best = model;

  Rng shuffle_rng(derive_seed(cfg.seed, "fit-shuffle"));
  const std::uint64_t dropout_base = derive_seed(cfg.seed, "fit-dropout");
  std::vector<std::size_t> indices(train.size());
  std::iota(indices.begin(), indices.end(), std::size_t{0});

  int since_best = 0;
  std::uint64_t step = 0;
  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    shuffle_rng.shuffle(indices);
    double train_loss = 0.0;
    BagGrads acc = zero_grads_like(model);
    std::vector<ParamView> acc_views = grad_views(acc);
    int in_batch = 0;

    auto flush = [&](int count) {
      if (count == 0) return;
      if (count > 1) {
        for (ParamView& v : acc_views)
          for (std::size_t i = 0; i < v.size; ++i) v.data[i] /= double(count);
      }
      adam.apply(params, acc_views);
      model.mark_updated();
      for (ParamView& v : acc_views) std::fill(v.data, v.data + v.size, 0.0);
    };

    for (std::size_t idx : indices) {
      const TrainExample& ex = train[idx];
      BagForward fwd = bag_forward(model, *ex.bag, {model.dropout_rate, DropoutMode::Train},
                                   derive_seed(dropout_base, step++));
      MaskedLoss ml = masked_loss(fwd.head_logits, ex.targets);
      train_loss += ml.loss;
      for (auto& hg : ml.head_logit_grads)
        if (hg.empty()) hg.clear();
      BagGrads g = bag_backward(model, fwd, ml.head_logit_grads);
      std::vector<ParamView> gv = grad_views(g);
      for (std::size_t b = 0; b < gv.size(); ++b)
        for (std::size_t i = 0; i < gv[b].size; ++i) acc_views[b].data[i] += gv[b].data[i];
      if (++in_batch == cfg.bag_batch) {
        flush(in_batch);
        in_batch = 0;
      }
    }
    flush(in_batch);

    const double val_loss = evaluate_loss(model, val);
    log.epochs.push_back({epoch, train_loss / double(train.size()), val_loss});
    if (cfg.verbose)
      std::fprintf(stderr, "epoch %3d train %.6f val %.6f\n", epoch,
                   train_loss / double(train.size()), val_loss);
    if (val_loss < log.best_val_loss) {
      log.best_val_loss = val_loss;
      log.best_epoch = epoch;
      best = model;
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      break;
    }
  }

  model = best;
  model.mark_updated();
  return log;
}

} // namespace pdls
