#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "pdls/matrix.hpp"
#include "pdls/mil.hpp"
#include "pdls/rng.hpp"

namespace pdls {

/// 8-bit interleaved RGB raster.
struct Image {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> pixels; // row-major, 3 channels

  Image() = default;
  Image(std::size_t w, std::size_t h) : width(w), height(h), pixels(w * h * 3, 0) {}

  std::uint8_t& at(std::size_t y, std::size_t x, std::size_t ch) {
    return pixels[(y * width + x) * 3 + ch];
  }
  std::uint8_t at(std::size_t y, std::size_t x, std::size_t ch) const {
    return pixels[(y * width + x) * 3 + ch];
  }
};

/// Scanned slide at nominal 20X (0.24 um/pixel unless the sidecar says
/// otherwise). Minimum usable extent is 256x256.
struct SlideImage {
  Image image;
  std::string magnification = "20X";
  double um_per_pixel = 0.24;
};

inline constexpr std::size_t kTileSize = 128;

/// 128x128 patch at 10X; origin records the top-left corner in original
/// slide (20X) pixel coordinates.
struct Tile {
  Image image;
  std::size_t origin_x = 0;
  std::size_t origin_y = 0;
};

struct Mask {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> data; // 0 or 1

  Mask() = default;
  Mask(std::size_t w, std::size_t h) : width(w), height(h), data(w * h, 0) {}
  std::uint8_t& at(std::size_t y, std::size_t x) { return data[y * width + x]; }
  std::uint8_t at(std::size_t y, std::size_t x) const { return data[y * width + x]; }
  std::size_t count() const;
};

/// Per-channel mean/std over reference-lab tissue tiles; drives the color
/// adaptation of new-lab tiles.
struct RefColorStats {
  std::array<double, 3> mean{0.0, 0.0, 0.0};
  std::array<double, 3> stddev{1.0, 1.0, 1.0};
};

// --- image IO -----------------------------------------------------------------

Image read_ppm(const std::string& path);
void write_ppm(const std::string& path, const Image& img);
Image read_png(const std::string& path);
void write_png(const std::string& path, const Image& img);

/// Reads a slide image (PNG or binary PPM by extension) plus the optional
/// "<path>.meta" sidecar with "magnification=..." / "um_per_pixel=..."
/// lines.
SlideImage load_slide(const std::string& path);
void save_slide(const std::string& path, const SlideImage& slide);

// --- QC pipeline ----------------------------------------------------------------

/// Otsu threshold on the HSV saturation channel followed by one 3x3
/// morphological open+close; 1 marks tissue.
Mask segment_tissue(const SlideImage& slide);

Image downsample_2x(const Image& img);

/// Non-overlapping 128x128 grid over the 2x-downsampled (10X) slide; keeps
/// tiles covering at least 25% tissue in the 20X mask.
std::vector<Tile> tile_slide(const SlideImage& slide, const Mask& tissue);

/// Population variance of the 3x3 Laplacian response over the grayscale
/// tile (replicate borders).
double laplacian_variance(const Image& tile);

struct TileRejection {
  std::size_t index = 0; // position in the input list
  double score = 0.0;
};

struct FilterLog {
  std::vector<Tile> kept; // subsequence of the input order
  std::vector<TileRejection> rejected;
};

FilterLog blur_filter(const std::vector<Tile>& tiles, double threshold);

/// Blur threshold rule: 5th percentile of variances measured on known-sharp
/// tiles (nearest-rank).
double calibrate_blur_threshold(std::vector<double> sharp_variances);

/// 8x8x8 RGB occupancy histogram, normalized to sum 1 (512 features).
std::vector<double> ink_histogram_features(const Image& tile);

/// One row per tile: the square root of each histogram entry (Hellinger
/// mapping), so every row has unit L2 norm.
Matrix ink_feature_matrix(const std::vector<Tile>& tiles);

struct InkTrainConfig {
  BagModelConfig model{{64, 32}, 16, 0.25};
  FitConfig fit;
  double val_fraction = 0.25;
};

struct LabeledSlide {
  SlideImage slide;
  bool inked = false;
};

/// Weakly supervised ink detector: attention-MIL binary model over per-tile
/// color histograms, trained from slide-level labels only.
BagModel train_ink_detector(const std::vector<LabeledSlide>& slides,
                            const InkTrainConfig& cfg, std::uint64_t seed);

/// Per-tile ink score = the detector head's ink probability for that tile's
/// representation alone; drops tiles scoring above the cutoff.
FilterLog ink_filter(const std::vector<Tile>& tiles, const BagModel& detector,
                     double cutoff = 0.5);

RefColorStats compute_color_stats(const std::vector<Tile>& tiles);

struct AdaptResult {
  std::vector<Tile> tiles;
  std::vector<std::string> warnings;
};

/// Per-channel affine map bringing the tile population's mean/std onto the
/// reference stats; zero-variance input channels pass through unchanged
/// with a warning.
AdaptResult adapt_colors(const std::vector<Tile>& tiles, const RefColorStats& ref);

struct AugmentParams {
  double brightness = 0.15; // multiplicative, uniform in +-range
  double hue = 0.15;        // fraction of a full hue rotation
  double contrast = 0.15;
  double saturation = 0.15;
  double noise_var = 0.001; // additive Gaussian on the [0,1] scale
  bool rotate = true;       // 90-degree rotations drawn from {0,90,180,270}
};

Tile augment(const Tile& tile, const AugmentParams& params, Rng& rng);

// --- embedding -------------------------------------------------------------------

inline constexpr std::size_t kDefaultEmbeddingDim = 1024;

class Embedder {
public:
  virtual ~Embedder() = default;
  virtual std::size_t dim() const = 0;
  virtual std::vector<double> embed(const Tile& tile, const std::string& specimen_id,
                                    std::size_t tile_index) const = 0;
};

/// Seeded random projection of the flattened, mean/std-normalized tile,
/// followed by tanh. Rows are N(0,1)/sqrt(D) streams regenerated on the
/// fly, so the embedder is pure and carries no weight storage.
class BuiltinEmbedder final : public Embedder {
public:
  explicit BuiltinEmbedder(std::size_t dim = kDefaultEmbeddingDim, std::uint64_t seed = 0);
  std::size_t dim() const override { return dim_; }
  std::vector<double> embed(const Tile& tile, const std::string& specimen_id,
                            std::size_t tile_index) const override;

private:
  std::size_t dim_;
  std::uint64_t seed_;
};

/// Serves precomputed embeddings keyed by specimen id and tile index.
class ExternalEmbedder final : public Embedder {
public:
  explicit ExternalEmbedder(std::map<std::string, Matrix> embeddings);
  std::size_t dim() const override { return dim_; }
  std::vector<double> embed(const Tile& tile, const std::string& specimen_id,
                            std::size_t tile_index) const override;

private:
  std::map<std::string, Matrix> embeddings_;
  std::size_t dim_ = 0;
};

Matrix embed_tiles(const std::vector<Tile>& tiles, const Embedder& embedder,
                   const std::string& specimen_id);

} // namespace pdls
