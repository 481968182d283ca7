// Microbenchmarks for the hot paths: the encoder matmul, attention pooling,
// MC-dropout confidence, and the tile-QC Laplacian.

#include <benchmark/benchmark.h>

#include "pdls/calibration.hpp"
#include "pdls/imaging.hpp"
#include "pdls/matrix.hpp"
#include "pdls/mil.hpp"
#include "pdls/nn.hpp"
#include "pdls/rng.hpp"

using namespace pdls;

namespace {

Matrix random_tiles(std::size_t n, std::size_t dim, std::uint64_t seed) {
  Rng rng(seed);
  Matrix m(n, dim);
  for (std::size_t i = 0; i < n * dim; ++i) m.data()[i] = rng.normal();
  return m;
}

BagModel bench_model(std::size_t dim) {
  BagModelConfig cfg;
  cfg.encoder_widths = {dim, dim / 2};
  cfg.attention_dim = dim / 4;
  cfg.dropout_rate = 0.25;
  return make_bag_model(dim, cfg, {{"suspect_vs_rest", {"rest", "suspect"}}}, 99);
}

void bm_matmul(benchmark::State& state) {
  const std::size_t n = std::size_t(state.range(0));
  const Matrix a = random_tiles(n, n, 1);
  const Matrix b = random_tiles(n, n, 2);
  for (auto _ : state) {
    Matrix c = matmul(a, b);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(int64_t(state.iterations()) * int64_t(n) * int64_t(n) *
                          int64_t(n));
}
BENCHMARK(bm_matmul)->Arg(64)->Arg(128)->Arg(256);

void bm_bag_forward(benchmark::State& state) {
  const std::size_t tiles = std::size_t(state.range(0));
  const std::size_t dim = 128;
  const BagModel model = bench_model(dim);
  const Matrix bag = random_tiles(tiles, dim, 3);
  for (auto _ : state) {
    BagForward fwd = bag_forward(model, bag, {}, 0);
    benchmark::DoNotOptimize(fwd.pooled.data());
  }
  state.SetItemsProcessed(int64_t(state.iterations()) * int64_t(tiles));
}
BENCHMARK(bm_bag_forward)->Arg(16)->Arg(64)->Arg(256);

void bm_mc_confidence(benchmark::State& state) {
  const int passes = int(state.range(0));
  const std::size_t dim = 128;
  const BagModel model = bench_model(dim);
  SpecimenBag bag;
  bag.specimen_id = "bench";
  bag.tiles = random_tiles(32, dim, 4);
  for (auto _ : state) {
    ConfidenceVector cv = mc_confidence(model, bag, passes, 7);
    benchmark::DoNotOptimize(cv.heads.data());
  }
  state.SetItemsProcessed(int64_t(state.iterations()) * int64_t(passes));
}
BENCHMARK(bm_mc_confidence)->Arg(10)->Arg(30)->Arg(100);

void bm_laplacian_variance(benchmark::State& state) {
  const std::size_t side = std::size_t(state.range(0));
  Rng rng(5);
  Image img(side, side);
  for (std::uint8_t& p : img.pixels) p = std::uint8_t(rng.uniform_int(256));
  for (auto _ : state) {
    double v = laplacian_variance(img);
    benchmark::DoNotOptimize(v);
  }
  state.SetItemsProcessed(int64_t(state.iterations()) * int64_t(side) * int64_t(side));
}
BENCHMARK(bm_laplacian_variance)->Arg(128)->Arg(512);

} // namespace

BENCHMARK_MAIN();
