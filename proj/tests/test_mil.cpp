#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "helpers.hpp"
#include "pdls/errors.hpp"
#include "pdls/mil.hpp"
#include "pdls/rng.hpp"
#include "pdls/synth.hpp"

using namespace pdls;

namespace {

BagModel tiny_model(std::size_t dim, std::uint64_t seed,
                    std::vector<HeadSpec> heads = {{"task", {"neg", "pos"}}}) {
  BagModelConfig cfg;
  cfg.encoder_widths = {12, 8};
  cfg.attention_dim = 6;
  cfg.dropout_rate = 0.5;
  return make_bag_model(dim, cfg, heads, seed);
}

double stable_softmax_weight(const std::vector<double>& scores, std::size_t i) {
  double mx = *std::max_element(scores.begin(), scores.end());
  double z = 0.0;
  for (double s : scores) z += std::exp(s - mx);
  return std::exp(scores[i] - mx) / z;
}

}  // namespace

TEST_CASE("a single-tile bag gets all the attention") {
  Rng rng(3);
  auto attn = make_attention(5, 4, 11);
  auto h = testutil::random_matrix(1, 5, rng);
  auto pool = attention_pool(h, attn);
  REQUIRE(pool.weights.size() == 1);
  CHECK(pool.weights[0] == 1.0);
  for (std::size_t d = 0; d < 5; ++d) CHECK(pool.pooled[d] == h.at(0, d));
}

TEST_CASE("identical tiles share the attention evenly") {
  Rng rng(5);
  auto attn = make_attention(6, 4, 13);
  Matrix h(2, 6);
  for (std::size_t d = 0; d < 6; ++d) h.at(0, d) = h.at(1, d) = rng.normal();
  auto pool = attention_pool(h, attn);
  CHECK(pool.weights[0] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(pool.weights[1] == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("attention weights form a distribution and follow the scores") {
  Rng rng(7);
  auto attn = make_attention(8, 5, 17);
  auto h = testutil::random_matrix(30, 8, rng);
  auto pool = attention_pool(h, attn);

  double sum = std::accumulate(pool.weights.begin(), pool.weights.end(), 0.0);
  CHECK(std::abs(sum - 1.0) <= 1e-12);
  for (double w : pool.weights) CHECK(w > 0.0);

  // Each weight is the softmax of its gating score.
  for (std::size_t i = 0; i < pool.weights.size(); ++i)
    CHECK(pool.weights[i] ==
          doctest::Approx(stable_softmax_weight(pool.scores, i)).epsilon(1e-12));
}

TEST_CASE("pooling is invariant to tile order") {
  Rng rng(11);
  auto attn = make_attention(10, 6, 19);
  for (int trial = 0; trial < 20; ++trial) {
    std::size_t n = 2 + rng.uniform_int(40);
    auto h = testutil::random_matrix(n, 10, rng);
    auto base = attention_pool(h, attn);

    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    rng.shuffle(perm);
    Matrix shuffled(n, 10);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t d = 0; d < 10; ++d) shuffled.at(i, d) = h.at(perm[i], d);

    auto permuted = attention_pool(shuffled, attn);
    for (std::size_t d = 0; d < 10; ++d)
      CHECK(std::abs(permuted.pooled[d] - base.pooled[d]) <= 1e-9);
    // Weights travel with their tiles.
    for (std::size_t i = 0; i < n; ++i)
      CHECK(std::abs(permuted.weights[i] - base.weights[perm[i]]) <= 1e-12);
  }
}

TEST_CASE("zero attention parameters spread the weights uniformly") {
  AttentionParams attn;
  attn.v = Matrix(4, 6);
  attn.u = Matrix(4, 6);
  attn.w.assign(4, 0.0);
  Rng rng(13);
  auto h = testutil::random_matrix(8, 6, rng);
  auto pool = attention_pool(h, attn);
  for (double w : pool.weights) CHECK(w == doctest::Approx(1.0 / 8.0).epsilon(1e-12));
}

TEST_CASE("empty bags are rejected") {
  auto attn = make_attention(4, 3, 23);
  Matrix empty(0, 4);
  CHECK_THROWS_AS(attention_pool(empty, attn), InvalidInputError);
  auto model = tiny_model(4, 29);
  CHECK_THROWS_AS(bag_forward(model, empty, {}, 0), InvalidInputError);
}

TEST_CASE("zeroed head weights emit uniform probabilities") {
  auto model = tiny_model(5, 31, {{"task", {"a", "b", "c"}}});
  model.heads[0].weight = Matrix(3, 8);
  model.heads[0].bias.assign(3, 0.0);
  Rng rng(37);
  auto tiles = testutil::random_matrix(6, 5, rng);
  auto fwd = bag_forward(model, tiles, {}, 0);
  for (double p : fwd.head_probs[0]) CHECK(p == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("bag forward matches a by-hand trace of the math") {
  // 3 tiles, 4 input dims, tiny single-layer encoder: re-derive every stage
  // with plain loops and compare.
  BagModelConfig cfg;
  cfg.encoder_widths = {3};
  cfg.attention_dim = 2;
  auto model = make_bag_model(4, cfg, {{"t", {"neg", "pos"}}}, 41);
  Rng rng(43);
  auto tiles = testutil::random_matrix(3, 4, rng);
  auto fwd = bag_forward(model, tiles, {}, 0);

  // single-layer encoders are a plain linear projection (no ReLU)
  const auto& enc = model.encoder.layers[0];
  Matrix h(3, 3);
  for (std::size_t t = 0; t < 3; ++t)
    for (std::size_t o = 0; o < 3; ++o) {
      double acc = enc.bias[o];
      for (std::size_t i = 0; i < 4; ++i) acc += enc.weight.at(o, i) * tiles.at(t, i);
      h.at(t, o) = acc;
    }

  std::vector<double> scores(3);
  for (std::size_t t = 0; t < 3; ++t) {
    double s = 0.0;
    for (std::size_t a = 0; a < 2; ++a) {
      double vh = 0.0, uh = 0.0;
      for (std::size_t d = 0; d < 3; ++d) {
        vh += model.attention.v.at(a, d) * h.at(t, d);
        uh += model.attention.u.at(a, d) * h.at(t, d);
      }
      s += model.attention.w[a] * std::tanh(vh) * (1.0 / (1.0 + std::exp(-uh)));
    }
    scores[t] = s;
  }
  std::vector<double> weights(3), pooled(3, 0.0);
  for (std::size_t t = 0; t < 3; ++t) weights[t] = stable_softmax_weight(scores, t);
  for (std::size_t t = 0; t < 3; ++t)
    for (std::size_t d = 0; d < 3; ++d) pooled[d] += weights[t] * h.at(t, d);

  std::vector<double> logits(2);
  for (std::size_t k = 0; k < 2; ++k) {
    double acc = model.heads[0].bias[k];
    for (std::size_t d = 0; d < 3; ++d) acc += model.heads[0].weight.at(k, d) * pooled[d];
    logits[k] = acc;
  }
  double mx = std::max(logits[0], logits[1]);
  double z = std::exp(logits[0] - mx) + std::exp(logits[1] - mx);

  for (std::size_t t = 0; t < 3; ++t) {
    CHECK(std::abs(fwd.attention_weights[t] - weights[t]) <= 1e-12);
    CHECK(std::abs(fwd.pool.scores[t] - scores[t]) <= 1e-12);
  }
  for (std::size_t d = 0; d < 3; ++d) CHECK(std::abs(fwd.pooled[d] - pooled[d]) <= 1e-12);
  for (std::size_t k = 0; k < 2; ++k) {
    CHECK(std::abs(fwd.head_logits[0][k] - logits[k]) <= 1e-12);
    CHECK(std::abs(fwd.head_probs[0][k] - std::exp(logits[k] - mx) / z) <= 1e-12);
  }
}

TEST_CASE("task groups and their active-head targets") {
  CHECK(task_group(SpecimenClass::MelHigh) == TaskGroup::High);
  CHECK(task_group(SpecimenClass::MelInt) == TaskGroup::Intermediate);
  for (auto c : {SpecimenClass::Basaloid, SpecimenClass::Squamous, SpecimenClass::MelLow,
                 SpecimenClass::Other})
    CHECK(task_group(c) == TaskGroup::Rest);

  // Head order: high_vs_int, high_vs_rest, int_vs_rest. Index 1 is the
  // positive class of each binary head.
  auto high = task_targets(TaskGroup::High);
  CHECK(high[0] == 1);  // high beats int
  CHECK(high[1] == 1);  // high beats rest
  CHECK_FALSE(high[2].has_value());

  auto inter = task_targets(TaskGroup::Intermediate);
  CHECK(inter[0] == 0);  // int is the negative side of high-vs-int
  CHECK_FALSE(inter[1].has_value());
  CHECK(inter[2] == 1);  // int beats rest

  auto rest = task_targets(TaskGroup::Rest);
  CHECK_FALSE(rest[0].has_value());
  CHECK(rest[1] == 0);
  CHECK(rest[2] == 0);

  // Exactly two of three tasks active for every group.
  for (auto g : {TaskGroup::High, TaskGroup::Intermediate, TaskGroup::Rest}) {
    auto t = task_targets(g);
    int active = 0;
    for (auto& v : t) active += v.has_value();
    CHECK(active == 2);
  }
}

TEST_CASE("masked loss averages cross entropy over the active heads only") {
  // Uniform logits on every head: each active head contributes ln 2.
  std::vector<std::vector<double>> logits = {{0.0, 0.0}, {0.0, 0.0}, {0.0, 0.0}};
  std::vector<std::optional<int>> targets = {1, 1, std::nullopt};
  auto ml = masked_loss(logits, targets);
  CHECK(std::abs(ml.loss - std::log(2.0)) <= 1e-12);
  REQUIRE(ml.head_logit_grads.size() == 3);
  CHECK(!ml.head_logit_grads[0].empty());
  CHECK(!ml.head_logit_grads[1].empty());
  CHECK(ml.head_logit_grads[2].empty());  // masked head: no gradient at all

  // Value check against the direct formula on asymmetric logits.
  std::vector<std::vector<double>> l2 = {{0.3, -0.2}, {1.0, 2.0}, {0.0, 0.0}};
  std::vector<std::optional<int>> t2 = {0, std::nullopt, 1};
  auto ml2 = masked_loss(l2, t2);
  auto ce = [](const std::vector<double>& z, int t) {
    double mx = std::max(z[0], z[1]);
    double lse = std::log(std::exp(z[0] - mx) + std::exp(z[1] - mx)) + mx;
    return lse - z[t];
  };
  CHECK(std::abs(ml2.loss - 0.5 * (ce(l2[0], 0) + ce(l2[2], 1))) <= 1e-12);
  CHECK(ml2.head_logit_grads[1].empty());

  CHECK_THROWS_AS(masked_loss(logits, {std::nullopt, std::nullopt, std::nullopt}),
                  InvalidInputError);
}

TEST_CASE("masked heads receive bitwise-zero parameter gradients") {
  auto model = tiny_model(6, 47,
                          {{"high_vs_int", {"mel_int", "mel_high"}},
                           {"high_vs_rest", {"rest", "mel_high"}},
                           {"int_vs_rest", {"rest", "mel_int"}}});
  Rng rng(53);
  auto tiles = testutil::random_matrix(5, 6, rng);
  auto fwd = bag_forward(model, tiles, {}, 0);

  // Intermediate specimens mask high_vs_rest (index 1).
  auto targets = task_targets(TaskGroup::Intermediate);
  std::vector<std::optional<int>> tv(targets.begin(), targets.end());
  auto ml = masked_loss(fwd.head_logits, tv);
  auto grads = bag_backward(model, fwd, ml.head_logit_grads);

  const auto& masked = grads.heads[1];
  for (std::size_t i = 0; i < masked.weight.rows() * masked.weight.cols(); ++i)
    CHECK(masked.weight.data()[i] == 0.0);
  for (double b : masked.bias) CHECK(b == 0.0);

  // The active heads do learn.
  double active_mass = 0.0;
  for (std::size_t h : {std::size_t{0}, std::size_t{2}})
    for (std::size_t i = 0; i < grads.heads[h].weight.rows() * grads.heads[h].weight.cols(); ++i)
      active_mass += std::abs(grads.heads[h].weight.data()[i]);
  CHECK(active_mass > 0.0);
}

TEST_CASE("full bag model gradients agree with finite differences") {
  BagModelConfig cfg;
  cfg.encoder_widths = {10, 6};
  cfg.attention_dim = 4;
  auto model = make_bag_model(8, cfg,
                              {{"high_vs_int", {"mel_int", "mel_high"}},
                               {"high_vs_rest", {"rest", "mel_high"}},
                               {"int_vs_rest", {"rest", "mel_int"}}},
                              61);
  Rng rng(67);
  auto tiles = testutil::random_matrix(7, 8, rng);
  std::vector<std::optional<int>> targets = {1, 1, std::nullopt};  // a High bag

  auto loss_fn = [&]() {
    auto fwd = bag_forward(model, tiles, {}, 0);
    return masked_loss(fwd.head_logits, targets).loss;
  };
  auto grad_fn = [&]() {
    auto fwd = bag_forward(model, tiles, {}, 0);
    auto ml = masked_loss(fwd.head_logits, targets);
    auto grads = bag_backward(model, fwd, ml.head_logit_grads);
    std::vector<double> flat;
    for (auto view : grad_views(grads))
      flat.insert(flat.end(), view.data, view.data + view.size);
    return flat;
  };

  auto report = grad_check(loss_fn, grad_fn, param_views(model));
  CHECK(report.checked == total_size(param_views(model)));
  CHECK(report.max_rel_err < 1e-4);
}

TEST_CASE("fit separates an easy binary problem") {
  auto bags = testutil::separable_bags(30, 16, 71);
  Rng rng(73);
  rng.shuffle(bags);

  std::vector<TrainExample> train, val;
  for (std::size_t i = 0; i < bags.size(); ++i) {
    TrainExample ex;
    ex.bag = &bags[i];
    ex.targets = {bags[i].label == SpecimenClass::MelHigh ? 1 : 0};
    (i % 5 == 0 ? val : train).push_back(ex);
  }

  BagModelConfig mcfg;
  mcfg.encoder_widths = {16, 8};
  mcfg.attention_dim = 8;
  mcfg.dropout_rate = 0.25;
  auto model = make_bag_model(16, mcfg, {{"task", {"neg", "pos"}}}, 79);
  FitConfig fit_cfg;
  fit_cfg.adam.lr = 1e-3;
  fit_cfg.max_epochs = 30;
  fit_cfg.patience = 30;
  fit_cfg.seed = 83;
  auto log = fit(model, train, val, fit_cfg);
  CHECK(log.best_epoch >= 0);
  CHECK(!log.epochs.empty());

  std::size_t correct = 0;
  for (const auto& ex : val) {
    auto fwd = bag_forward(model, *ex.bag, {}, 0);
    int pred = fwd.head_probs[0][1] >= 0.5 ? 1 : 0;
    correct += pred == *ex.targets[0];
  }
  CHECK(static_cast<double>(correct) / val.size() >= 0.95);
}

TEST_CASE("fit is deterministic in its seed") {
  auto bags = testutil::separable_bags(8, 10, 89);
  std::vector<TrainExample> train, val;
  for (std::size_t i = 0; i < bags.size(); ++i) {
    TrainExample ex;
    ex.bag = &bags[i];
    ex.targets = {bags[i].label == SpecimenClass::MelHigh ? 1 : 0};
    (i % 4 == 0 ? val : train).push_back(ex);
  }
  BagModelConfig mcfg;
  mcfg.encoder_widths = {8};
  mcfg.attention_dim = 4;
  FitConfig fit_cfg;
  fit_cfg.max_epochs = 5;
  fit_cfg.seed = 97;

  auto run = [&]() {
    auto m = make_bag_model(10, mcfg, {{"task", {"neg", "pos"}}}, 101);
    fit(m, train, val, fit_cfg);
    return m;
  };
  auto a = run();
  auto b = run();
  for (std::size_t li = 0; li < a.encoder.layers.size(); ++li)
    CHECK(a.encoder.layers[li].weight == b.encoder.layers[li].weight);
  CHECK(a.attention.v == b.attention.v);
  CHECK(a.heads[0].weight == b.heads[0].weight);
}

TEST_CASE("fit rejects target-degenerate training data") {
  auto bags = testutil::separable_bags(4, 8, 103);
  std::vector<TrainExample> train, val;
  for (auto& b : bags) {
    TrainExample ex;
    ex.bag = &b;
    ex.targets = {1};  // every example claims the same class
    train.push_back(ex);
  }
  val = {train.back()};
  BagModelConfig mcfg;
  mcfg.encoder_widths = {8};
  mcfg.attention_dim = 4;
  auto model = make_bag_model(8, mcfg, {{"task", {"neg", "pos"}}}, 107);
  FitConfig fit_cfg;
  fit_cfg.max_epochs = 2;
  CHECK_THROWS_AS(fit(model, train, val, fit_cfg), DegenerateLabelsError);
}

TEST_CASE("trained attention concentrates on the diagnostic tiles") {
  auto protos = make_prototypes(12, 2.0, 0.2, 109);
  GenParams gp;
  gp.n_min = 8;
  gp.n_max = 16;
  gp.frac_min = 0.15;
  gp.frac_max = 0.30;
  Rng rng(113);

  std::vector<SpecimenBag> bags;
  for (int i = 0; i < 40; ++i) {
    auto cls = i % 2 == 0 ? SpecimenClass::MelHigh : SpecimenClass::Basaloid;
    auto bag = gen_specimen(cls, protos, gp, rng);
    bag.specimen_id = "attn_" + std::to_string(i);
    bags.push_back(std::move(bag));
  }

  std::vector<TrainExample> train, val;
  for (std::size_t i = 0; i < bags.size(); ++i) {
    TrainExample ex;
    ex.bag = &bags[i];
    ex.targets = {bags[i].label == SpecimenClass::MelHigh ? 1 : 0};
    (i % 5 == 0 ? val : train).push_back(ex);
  }
  BagModelConfig mcfg;
  mcfg.encoder_widths = {12, 8};
  mcfg.attention_dim = 6;
  mcfg.dropout_rate = 0.25;
  auto model = make_bag_model(12, mcfg, {{"task", {"rest", "suspect"}}}, 127);
  FitConfig fit_cfg;
  fit_cfg.adam.lr = 1e-3;
  fit_cfg.max_epochs = 25;
  fit_cfg.patience = 25;
  fit_cfg.seed = 131;
  fit(model, train, val, fit_cfg);

  // Mean attention mass on diagnostic tiles must exceed their share of the
  // bag, i.e. the model looked at the evidence rather than pooling evenly.
  double mass = 0.0, share = 0.0;
  std::size_t counted = 0;
  for (const auto& bag : bags) {
    if (bag.diagnostic_tiles.empty()) continue;
    auto fwd = bag_forward(model, bag, {}, 0);
    double m = 0.0;
    for (auto idx : bag.diagnostic_tiles) m += fwd.attention_weights[idx];
    mass += m;
    share += static_cast<double>(bag.diagnostic_tiles.size()) / bag.n_tiles();
    ++counted;
  }
  REQUIRE(counted > 0);
  CHECK(mass / counted > share / counted);
}
