#include "pdls/imaging.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "pdls/errors.hpp"

namespace pdls {

std::size_t Mask::count() const {
  return std::size_t(std::count(data.begin(), data.end(), std::uint8_t(1)));
}

namespace {

// HSV saturation in [0,255]: (max-min)/max, 0 for black pixels.
std::uint8_t saturation_u8(std::uint8_t r, std::uint8_t g, std::uint8_t b) {
  const int mx = std::max({int(r), int(g), int(b)});
  const int mn = std::min({int(r), int(g), int(b)});
  if (mx == 0) return 0;
  return std::uint8_t((255 * (mx - mn) + mx / 2) / mx);
}

// Classic Otsu threshold over a 256-bin histogram; returns the level t that
// maximizes between-class variance (lowest t on ties). Pixels > t count as
// foreground.
int otsu_threshold(const std::array<std::uint64_t, 256>& hist) {
  std::uint64_t total = 0;
  double sum_all = 0.0;
  for (int i = 0; i < 256; ++i) {
    total += hist[i];
    sum_all += double(i) * double(hist[i]);
  }
  if (total == 0) return 0;

  double best_var = -1.0;
  int best_t = 0;
  std::uint64_t w0 = 0;
  double sum0 = 0.0;
  for (int t = 0; t < 256; ++t) {
    w0 += hist[t];
    sum0 += double(t) * double(hist[t]);
    const std::uint64_t w1 = total - w0;
    if (w0 == 0 || w1 == 0) continue;
    const double m0 = sum0 / double(w0);
    const double m1 = (sum_all - sum0) / double(w1);
    const double between = double(w0) * double(w1) * (m0 - m1) * (m0 - m1);
    if (between > best_var) {
      best_var = between;
      best_t = t;
    }
  }
  return best_t;
}

Mask erode3(const Mask& m) {
  Mask out(m.width, m.height);
  for (std::size_t y = 0; y < m.height; ++y) {
    for (std::size_t x = 0; x < m.width; ++x) {
      std::uint8_t v = 1;
      for (int dy = -1; dy <= 1 && v; ++dy) {
        for (int dx = -1; dx <= 1 && v; ++dx) {
          const long yy = long(y) + dy;
          const long xx = long(x) + dx;
          if (yy < 0 || xx < 0 || yy >= long(m.height) || xx >= long(m.width) ||
              m.at(std::size_t(yy), std::size_t(xx)) == 0)
            v = 0;
        }
      }
      out.at(y, x) = v;
    }
  }
  return out;
}

Mask dilate3(const Mask& m) {
  Mask out(m.width, m.height);
  for (std::size_t y = 0; y < m.height; ++y) {
    for (std::size_t x = 0; x < m.width; ++x) {
      std::uint8_t v = 0;
      for (int dy = -1; dy <= 1 && !v; ++dy) {
        for (int dx = -1; dx <= 1 && !v; ++dx) {
          const long yy = long(y) + dy;
          const long xx = long(x) + dx;
          if (yy >= 0 && xx >= 0 && yy < long(m.height) && xx < long(m.width) &&
              m.at(std::size_t(yy), std::size_t(xx)) == 1)
            v = 1;
        }
      }
      out.at(y, x) = v;
    }
  }
  return out;
}

} // namespace

Mask segment_tissue(const SlideImage& slide) {
  const Image& img = slide.image;
  if (img.width == 0 || img.height == 0) throw InvalidInputError("empty slide image");

  std::vector<std::uint8_t> sat(img.width * img.height);
  std::array<std::uint64_t, 256> hist{};
  for (std::size_t y = 0; y < img.height; ++y) {
    for (std::size_t x = 0; x < img.width; ++x) {
      const std::uint8_t s = saturation_u8(img.at(y, x, 0), img.at(y, x, 1), img.at(y, x, 2));
      sat[y * img.width + x] = s;
      ++hist[s];
    }
  }
  const int thr = otsu_threshold(hist);

  Mask mask(img.width, img.height);
  for (std::size_t i = 0; i < sat.size(); ++i) mask.data[i] = sat[i] > thr ? 1 : 0;
  // One opening then one closing (3x3) to drop speckles and seal pinholes.
  mask = dilate3(erode3(mask));
  mask = erode3(dilate3(mask));
  return mask;
}

Image downsample_2x(const Image& img) {
  const std::size_t w = img.width / 2;
  const std::size_t h = img.height / 2;
  if (w == 0 || h == 0) throw InvalidInputError("image too small to downsample");
  Image out(w, h);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      for (std::size_t ch = 0; ch < 3; ++ch) {
        const unsigned sum = unsigned(img.at(2 * y, 2 * x, ch)) +
                             unsigned(img.at(2 * y, 2 * x + 1, ch)) +
                             unsigned(img.at(2 * y + 1, 2 * x, ch)) +
                             unsigned(img.at(2 * y + 1, 2 * x + 1, ch));
        out.at(y, x, ch) = std::uint8_t((sum + 2) / 4);
      }
    }
  }
  return out;
}

std::vector<Tile> tile_slide(const SlideImage& slide, const Mask& tissue) {
  const Image& img = slide.image;
  if (tissue.width != img.width || tissue.height != img.height)
    throw ShapeError("tissue mask does not match slide size");

  Image ds = downsample_2x(img);
  const std::size_t grid_x = ds.width / kTileSize;
  const std::size_t grid_y = ds.height / kTileSize;
  const std::size_t src = kTileSize * 2; // tile footprint at 20X

  std::vector<Tile> tiles;
  for (std::size_t ty = 0; ty < grid_y; ++ty) {
    for (std::size_t tx = 0; tx < grid_x; ++tx) {
      const std::size_t oy = ty * src;
      const std::size_t ox = tx * src;
      std::size_t on = 0;
      for (std::size_t y = 0; y < src; ++y)
        for (std::size_t x = 0; x < src; ++x)
          if (tissue.at(oy + y, ox + x)) ++on;
      if (double(on) < 0.25 * double(src * src)) continue;

      Tile tile;
      tile.origin_x = ox;
      tile.origin_y = oy;
      tile.image = Image(kTileSize, kTileSize);
      for (std::size_t y = 0; y < kTileSize; ++y)
        for (std::size_t x = 0; x < kTileSize; ++x)
          for (std::size_t ch = 0; ch < 3; ++ch)
            tile.image.at(y, x, ch) = ds.at(ty * kTileSize + y, tx * kTileSize + x, ch);
      tiles.push_back(std::move(tile));
    }
  }
  return tiles;
}

double laplacian_variance(const Image& tile) {
  if (tile.width == 0 || tile.height == 0) throw InvalidInputError("empty tile");
  const std::size_t w = tile.width;
  const std::size_t h = tile.height;
  std::vector<double> gray(w * h);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      gray[y * w + x] = 0.299 * tile.at(y, x, 0) + 0.587 * tile.at(y, x, 1) +
                        0.114 * tile.at(y, x, 2);

  auto g = [&](long y, long x) {
    y = std::clamp(y, 0L, long(h) - 1); // replicate borders
    x = std::clamp(x, 0L, long(w) - 1);
    return gray[std::size_t(y) * w + std::size_t(x)];
  };

  double sum = 0.0;
  double sumsq = 0.0;
  for (long y = 0; y < long(h); ++y) {
    for (long x = 0; x < long(w); ++x) {
      const double r =
          g(y - 1, x) + g(y + 1, x) + g(y, x - 1) + g(y, x + 1) - 4.0 * g(y, x);
      sum += r;
      sumsq += r * r;
    }
  }
  const double n = double(w * h);
  const double mean = sum / n;
  return std::max(0.0, sumsq / n - mean * mean);
}

FilterLog blur_filter(const std::vector<Tile>& tiles, double threshold) {
  if (threshold < 0.0) throw InvalidInputError("blur threshold must be non-negative");
  FilterLog log;
  for (std::size_t i = 0; i < tiles.size(); ++i) {
    const double lv = laplacian_variance(tiles[i].image);
    if (lv >= threshold) {
      log.kept.push_back(tiles[i]);
    } else {
      log.rejected.push_back({i, lv});
    }
  }
  return log;
}

double calibrate_blur_threshold(std::vector<double> sharp_variances) {
  if (sharp_variances.empty())
    throw InvalidInputError("need at least one sharp variance to calibrate");
  std::sort(sharp_variances.begin(), sharp_variances.end());
  // Nearest-rank 5th percentile.
  const std::size_t rank =
      std::size_t(std::ceil(0.05 * double(sharp_variances.size())));
  return sharp_variances[rank == 0 ? 0 : rank - 1];
}

std::vector<double> ink_histogram_features(const Image& tile) {
  std::vector<double> hist(512, 0.0);
  const std::size_t n = tile.width * tile.height;
  if (n == 0) throw InvalidInputError("empty tile");
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t r = tile.pixels[i * 3 + 0] >> 5;
    const std::size_t g = tile.pixels[i * 3 + 1] >> 5;
    const std::size_t b = tile.pixels[i * 3 + 2] >> 5;
    hist[r * 64 + g * 8 + b] += 1.0;
  }
  for (double& v : hist) v /= double(n);
  return hist;
}

Matrix ink_feature_matrix(const std::vector<Tile>& tiles) {
  Matrix m(tiles.size(), 512);
  for (std::size_t i = 0; i < tiles.size(); ++i) {
    const std::vector<double> f = ink_histogram_features(tiles[i].image);
    // Hellinger mapping: unit-norm rows with O(0.1) entries train far better
    // than raw occupancy fractions, whose 1/512 scale starves the gradients.
    double* row = m.row(i);
    for (std::size_t j = 0; j < f.size(); ++j) row[j] = std::sqrt(f[j]);
  }
  return m;
}

BagModel train_ink_detector(const std::vector<LabeledSlide>& slides,
                            const InkTrainConfig& cfg, std::uint64_t seed) {
  if (slides.empty()) throw InvalidInputError("no slides for ink training");

  std::vector<SpecimenBag> bags;
  std::vector<int> labels;
  for (std::size_t i = 0; i < slides.size(); ++i) {
    Mask mask = segment_tissue(slides[i].slide);
    std::vector<Tile> tiles = tile_slide(slides[i].slide, mask);
    if (tiles.empty()) continue; // nothing to learn from a tissue-free slide
    SpecimenBag bag;
    bag.specimen_id = "ink-slide-" + std::to_string(i);
    bag.tiles = ink_feature_matrix(tiles);
    bags.push_back(std::move(bag));
    labels.push_back(slides[i].inked ? 1 : 0);
  }
  if (bags.empty()) throw InvalidInputError("no tissue tiles across ink training slides");

  const bool has_pos = std::find(labels.begin(), labels.end(), 1) != labels.end();
  const bool has_neg = std::find(labels.begin(), labels.end(), 0) != labels.end();
  if (!has_pos || !has_neg)
    throw DegenerateLabelsError("ink training needs both inked and clean slides");

  // Stratified train/val split so both labels appear on each side.
  std::vector<std::size_t> pos;
  std::vector<std::size_t> neg;
  for (std::size_t i = 0; i < bags.size(); ++i) (labels[i] ? pos : neg).push_back(i);
  Rng rng(derive_seed(seed, "ink-split"));
  rng.shuffle(pos);
  rng.shuffle(neg);
  auto carve = [&](std::vector<std::size_t>& group) {
    const std::size_t n_val =
        std::max<std::size_t>(1, std::size_t(std::lround(cfg.val_fraction * double(group.size()))));
    if (n_val >= group.size())
      throw InvalidInputError("too few slides per label for an ink validation split");
    return n_val;
  };
  const std::size_t val_pos = carve(pos);
  const std::size_t val_neg = carve(neg);

  std::vector<TrainExample> train;
  std::vector<TrainExample> val;
  for (std::size_t i = 0; i < pos.size(); ++i)
    (i < val_pos ? val : train).push_back({&bags[pos[i]], {labels[pos[i]]}});
  for (std::size_t i = 0; i < neg.size(); ++i)
    (i < val_neg ? val : train).push_back({&bags[neg[i]], {labels[neg[i]]}});

  BagModel model = make_bag_model(512, cfg.model, {{"ink", {"clean", "ink"}}},
                                  derive_seed(seed, "ink-model"));
  FitConfig fit_cfg = cfg.fit;
  fit_cfg.seed = derive_seed(seed, "ink-fit");
  fit(model, train, val, fit_cfg);
  return model;
}

FilterLog ink_filter(const std::vector<Tile>& tiles, const BagModel& detector,
                     double cutoff) {
  detector.validate();
  if (cutoff < 0.0 || cutoff > 1.0) throw InvalidInputError("ink cutoff must lie in [0,1]");
  FilterLog log;
  if (tiles.empty()) return log;

  // Score each tile on its own: encoder output through the binary head,
  // which equals the bag probability of that tile as a one-tile bag.
  Matrix features = ink_feature_matrix(tiles);
  MlpForwardResult enc =
      mlp_forward(detector.encoder, features, {detector.dropout_rate, DropoutMode::Off}, 0);
  const TaskHead& head = detector.head("ink");
  const std::size_t ink_idx = head.class_index("ink");
  for (std::size_t i = 0; i < tiles.size(); ++i) {
    Matrix z(1, head.classes());
    for (std::size_t c = 0; c < head.classes(); ++c) {
      const double* wrow = head.weight.row(c);
      double acc = 0.0;
      for (std::size_t j = 0; j < head.weight.cols(); ++j)
        acc += wrow[j] * enc.output.at(i, j);
      z.at(0, c) = acc + head.bias[c];
    }
    const double score = softmax_rows(z).at(0, ink_idx);
    if (score > cutoff) {
      log.rejected.push_back({i, score});
    } else {
      log.kept.push_back(tiles[i]);
    }
  }
  return log;
}

RefColorStats compute_color_stats(const std::vector<Tile>& tiles) {
  if (tiles.empty()) throw InvalidInputError("no tiles to compute color stats from");
  RefColorStats stats;
  std::array<double, 3> sum{0, 0, 0};
  std::array<double, 3> sumsq{0, 0, 0};
  std::size_t n = 0;
  for (const Tile& t : tiles) {
    const std::size_t pixels = t.image.width * t.image.height;
    for (std::size_t i = 0; i < pixels; ++i) {
      for (std::size_t ch = 0; ch < 3; ++ch) {
        const double v = t.image.pixels[i * 3 + ch];
        sum[ch] += v;
        sumsq[ch] += v * v;
      }
    }
    n += pixels;
  }
  for (std::size_t ch = 0; ch < 3; ++ch) {
    stats.mean[ch] = sum[ch] / double(n);
    stats.stddev[ch] =
        std::sqrt(std::max(0.0, sumsq[ch] / double(n) - stats.mean[ch] * stats.mean[ch]));
  }
  return stats;
}

AdaptResult adapt_colors(const std::vector<Tile>& tiles, const RefColorStats& ref) {
  for (double s : ref.stddev)
    if (!(s > 0.0)) throw InvalidInputError("reference color stddev must be positive");
  AdaptResult out;
  if (tiles.empty()) return out;

  const RefColorStats in = compute_color_stats(tiles);
  std::array<double, 3> scale{1, 1, 1};
  std::array<double, 3> shift{0, 0, 0};
  for (std::size_t ch = 0; ch < 3; ++ch) {
    if (in.stddev[ch] == 0.0) {
      out.warnings.push_back("channel " + std::to_string(ch) +
                             " has zero variance; left unchanged");
      continue;
    }
    scale[ch] = ref.stddev[ch] / in.stddev[ch];
    shift[ch] = ref.mean[ch] - in.mean[ch] * scale[ch];
  }

  out.tiles = tiles;
  for (Tile& t : out.tiles) {
    const std::size_t pixels = t.image.width * t.image.height;
    for (std::size_t i = 0; i < pixels; ++i) {
      for (std::size_t ch = 0; ch < 3; ++ch) {
        const double v = scale[ch] * double(t.image.pixels[i * 3 + ch]) + shift[ch];
        t.image.pixels[i * 3 + ch] =
            std::uint8_t(std::clamp(std::lround(v), 0L, 255L));
      }
    }
  }
  return out;
}

namespace {

void rgb_to_hsv(double r, double g, double b, double& h, double& s, double& v) {
  const double mx = std::max({r, g, b});
  const double mn = std::min({r, g, b});
  const double d = mx - mn;
  v = mx;
  s = mx == 0.0 ? 0.0 : d / mx;
  if (d == 0.0) {
    h = 0.0;
  } else if (mx == r) {
    h = 60.0 * std::fmod((g - b) / d, 6.0);
  } else if (mx == g) {
    h = 60.0 * ((b - r) / d + 2.0);
  } else {
    h = 60.0 * ((r - g) / d + 4.0);
  }
  if (h < 0.0) h += 360.0;
}

void hsv_to_rgb(double h, double s, double v, double& r, double& g, double& b) {
  const double c = v * s;
  const double hp = h / 60.0;
  const double x = c * (1.0 - std::fabs(std::fmod(hp, 2.0) - 1.0));
  double r1 = 0, g1 = 0, b1 = 0;
  if (hp < 1) {
    r1 = c; g1 = x;
  } else if (hp < 2) {
    r1 = x; g1 = c;
  } else if (hp < 3) {
    g1 = c; b1 = x;
  } else if (hp < 4) {
    g1 = x; b1 = c;
  } else if (hp < 5) {
    r1 = x; b1 = c;
  } else {
    r1 = c; b1 = x;
  }
  const double m = v - c;
  r = r1 + m;
  g = g1 + m;
  b = b1 + m;
}

Image rotate90(const Image& img, int quarter_turns) {
  const int k = ((quarter_turns % 4) + 4) % 4;
  if (k == 0) return img;
  const std::size_t w = img.width;
  const std::size_t h = img.height;
  Image out = (k == 2) ? Image(w, h) : Image(h, w);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      std::size_t ny = 0;
      std::size_t nx = 0;
      if (k == 1) { // 90 degrees counterclockwise... row y col x -> row (w-1-x) col y
        ny = w - 1 - x;
        nx = y;
      } else if (k == 2) {
        ny = h - 1 - y;
        nx = w - 1 - x;
      } else {
        ny = x;
        nx = h - 1 - y;
      }
      for (std::size_t ch = 0; ch < 3; ++ch) out.at(ny, nx, ch) = img.at(y, x, ch);
    }
  }
  return out;
}

} // namespace

Tile augment(const Tile& tile, const AugmentParams& params, Rng& rng) {
  const std::size_t w = tile.image.width;
  const std::size_t h = tile.image.height;
  const std::size_t n = w * h;
  if (n == 0) throw InvalidInputError("empty tile");

  // Fixed draw order keeps augmentation reproducible from the rng state:
  // brightness, hue, contrast, saturation, then per-pixel noise, rotation.
  const double brightness = 1.0 + rng.uniform(-params.brightness, params.brightness);
  const double hue_shift = rng.uniform(-params.hue, params.hue) * 360.0;
  const double contrast = 1.0 + rng.uniform(-params.contrast, params.contrast);
  const double saturation = 1.0 + rng.uniform(-params.saturation, params.saturation);

  std::vector<double> px(n * 3);
  for (std::size_t i = 0; i < n * 3; ++i) px[i] = tile.image.pixels[i] / 255.0;

  for (std::size_t i = 0; i < n; ++i) {
    double r = px[i * 3] * brightness;
    double g = px[i * 3 + 1] * brightness;
    double b = px[i * 3 + 2] * brightness;
    if (hue_shift != 0.0) {
      double hh, ss, vv;
      rgb_to_hsv(std::clamp(r, 0.0, 1.0), std::clamp(g, 0.0, 1.0), std::clamp(b, 0.0, 1.0),
                 hh, ss, vv);
      hh = std::fmod(hh + hue_shift + 360.0, 360.0);
      hsv_to_rgb(hh, ss, vv, r, g, b);
    }
    px[i * 3] = r;
    px[i * 3 + 1] = g;
    px[i * 3 + 2] = b;
  }

  double mean = 0.0;
  for (double v : px) mean += v;
  mean /= double(px.size());
  for (double& v : px) v = mean + (v - mean) * contrast;

  for (std::size_t i = 0; i < n; ++i) {
    const double gray =
        0.299 * px[i * 3] + 0.587 * px[i * 3 + 1] + 0.114 * px[i * 3 + 2];
    for (std::size_t ch = 0; ch < 3; ++ch)
      px[i * 3 + ch] = gray + (px[i * 3 + ch] - gray) * saturation;
  }

  if (params.noise_var > 0.0) {
    const double sigma = std::sqrt(params.noise_var);
    for (double& v : px) v += sigma * rng.normal();
  }

  Tile out;
  out.origin_x = tile.origin_x;
  out.origin_y = tile.origin_y;
  out.image = Image(w, h);
  for (std::size_t i = 0; i < n * 3; ++i)
    out.image.pixels[i] =
        std::uint8_t(std::clamp(std::lround(px[i] * 255.0), 0L, 255L));
  if (params.rotate) out.image = rotate90(out.image, int(rng.uniform_int(4)));
  return out;
}

// --- embedding -------------------------------------------------------------------

BuiltinEmbedder::BuiltinEmbedder(std::size_t dim, std::uint64_t seed)
    : dim_(dim), seed_(seed) {
  if (dim == 0) throw InvalidInputError("embedding width must be positive");
}

std::vector<double> BuiltinEmbedder::embed(const Tile& tile, const std::string&,
                                           std::size_t) const {
  const std::size_t d_in = tile.image.pixels.size();
  if (d_in == 0) throw InvalidInputError("empty tile");

  // A flat tile carries no signal; bail out before standardization turns
  // accumulated rounding error into spurious +-1 features.
  const auto [mn, mx] =
      std::minmax_element(tile.image.pixels.begin(), tile.image.pixels.end());
  if (*mn == *mx) return std::vector<double>(dim_, 0.0);

  std::vector<double> z(d_in);
  double mean = 0.0;
  for (std::size_t i = 0; i < d_in; ++i) {
    z[i] = tile.image.pixels[i] / 255.0;
    mean += z[i];
  }
  mean /= double(d_in);
  double var = 0.0;
  for (double v : z) var += (v - mean) * (v - mean);
  var /= double(d_in);
  const double sd = std::sqrt(var);
  for (double& v : z) v = sd > 0.0 ? (v - mean) / sd : 0.0;

  const double inv_sqrt_d = 1.0 / std::sqrt(double(d_in));
  const std::uint64_t row_base = derive_seed(seed_, "projection-row");
  std::vector<double> out(dim_);
  for (std::size_t r = 0; r < dim_; ++r) {
    Rng rng(derive_seed(row_base, std::uint64_t(r)));
    double acc = 0.0;
    for (std::size_t i = 0; i < d_in; ++i) acc += rng.normal() * inv_sqrt_d * z[i];
    out[r] = std::tanh(acc);
  }
  return out;
}

ExternalEmbedder::ExternalEmbedder(std::map<std::string, Matrix> embeddings)
    : embeddings_(std::move(embeddings)) {
  if (embeddings_.empty()) throw InvalidInputError("external embedding table is empty");
  dim_ = embeddings_.begin()->second.cols();
  for (const auto& [id, m] : embeddings_)
    if (m.cols() != dim_)
      throw ShapeError("embedding width differs for specimen " + id);
}

std::vector<double> ExternalEmbedder::embed(const Tile&, const std::string& specimen_id,
                                            std::size_t tile_index) const {
  auto it = embeddings_.find(specimen_id);
  if (it == embeddings_.end())
    throw DataError("embedding file has no specimen " + specimen_id);
  if (tile_index >= it->second.rows())
    throw DataError("embedding file missing tile " + std::to_string(tile_index) +
                    " of specimen " + specimen_id);
  const double* row = it->second.row(tile_index);
  return {row, row + dim_};
}

Matrix embed_tiles(const std::vector<Tile>& tiles, const Embedder& embedder,
                   const std::string& specimen_id) {
  if (tiles.empty()) throw InvalidInputError("no tiles to embed");
  Matrix out(tiles.size(), embedder.dim());
  for (std::size_t i = 0; i < tiles.size(); ++i) {
    const std::vector<double> e = embedder.embed(tiles[i], specimen_id, i);
    if (e.size() != embedder.dim()) throw ShapeError("embedder returned wrong width");
    std::copy(e.begin(), e.end(), out.row(i));
  }
  return out;
}

} // namespace pdls
