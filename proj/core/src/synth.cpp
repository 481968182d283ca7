#include "pdls/synth.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "pdls/errors.hpp"

namespace pdls {

namespace {

std::vector<double> random_unit(std::size_t dim, Rng& rng) {
  std::vector<double> v(dim);
  double norm = 0.0;
  do {
    norm = 0.0;
    for (double& x : v) {
      x = rng.normal();
      norm += x * x;
    }
  } while (norm == 0.0);
  norm = std::sqrt(norm);
  for (double& x : v) x /= norm;
  return v;
}

std::vector<double> normalized(std::vector<double> v) {
  double norm = 0.0;
  for (double x : v) norm += x * x;
  if (norm == 0.0) throw InvalidInputError("cannot normalize a zero vector");
  norm = std::sqrt(norm);
  for (double& x : v) x /= norm;
  return v;
}

std::vector<double> axpy(const std::vector<double>& a, double s,
                         const std::vector<double>& d) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + s * d[i];
  return out;
}

} // namespace

void PrototypeSet::validate() const {
  if (dim == 0) throw InvalidInputError("prototype dimension must be positive");
  for (const auto& m : mu)
    if (m.size() != dim) throw ShapeError("prototype width mismatch");
  if (mu_bg.size() != dim || direction.size() != dim)
    throw ShapeError("prototype width mismatch");
  if (!(delta > 0.0)) throw InvalidInputError("delta must be positive");
  if (sigma_e < 0.0) throw InvalidInputError("sigma_e must be non-negative");
}

PrototypeSet make_prototypes(std::size_t dim, double delta, double sigma_e,
                             std::uint64_t seed) {
  if (dim == 0) throw InvalidInputError("prototype dimension must be positive");
  if (!(delta > 0.0)) throw InvalidInputError("delta must be positive");
  if (sigma_e < 0.0) throw InvalidInputError("sigma_e must be non-negative");

  PrototypeSet p;
  p.dim = dim;
  p.delta = delta;
  p.sigma_e = sigma_e;
  p.seed = seed;

  Rng rng(derive_seed(seed, "prototypes"));
  p.mu[int(SpecimenClass::Basaloid)] = random_unit(dim, rng);
  p.mu[int(SpecimenClass::Squamous)] = random_unit(dim, rng);
  p.mu[int(SpecimenClass::Other)] = random_unit(dim, rng);
  p.mu_bg = random_unit(dim, rng);
  p.mu[int(SpecimenClass::MelLow)] = random_unit(dim, rng);
  p.direction = random_unit(dim, rng);
  p.mu[int(SpecimenClass::MelInt)] =
      normalized(axpy(p.mu[int(SpecimenClass::MelLow)], delta, p.direction));
  p.mu[int(SpecimenClass::MelHigh)] =
      normalized(axpy(p.mu[int(SpecimenClass::MelLow)], 2.0 * delta, p.direction));
  p.validate();
  return p;
}

PrototypeSet shift_prototypes(const PrototypeSet& ref, double magnitude,
                              std::uint64_t seed) {
  ref.validate();
  if (magnitude < 0.0) throw InvalidInputError("shift magnitude must be non-negative");

  Rng rng(derive_seed(seed, "shift"));
  auto drift = [&](const std::vector<double>& v) {
    std::vector<double> out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] + magnitude * rng.normal();
    return normalized(std::move(out));
  };

  PrototypeSet p = ref;
  p.seed = seed;
  p.mu[int(SpecimenClass::Basaloid)] = drift(ref.mu[int(SpecimenClass::Basaloid)]);
  p.mu[int(SpecimenClass::Squamous)] = drift(ref.mu[int(SpecimenClass::Squamous)]);
  p.mu[int(SpecimenClass::Other)] = drift(ref.mu[int(SpecimenClass::Other)]);
  p.mu_bg = drift(ref.mu_bg);
  p.mu[int(SpecimenClass::MelLow)] = drift(ref.mu[int(SpecimenClass::MelLow)]);
  p.direction = drift(ref.direction);
  p.mu[int(SpecimenClass::MelInt)] =
      normalized(axpy(p.mu[int(SpecimenClass::MelLow)], p.delta, p.direction));
  p.mu[int(SpecimenClass::MelHigh)] =
      normalized(axpy(p.mu[int(SpecimenClass::MelLow)], 2.0 * p.delta, p.direction));
  p.validate();
  return p;
}

void GenParams::validate() const {
  if (n_min < 1 || n_max < n_min) throw InvalidInputError("bad tile count range");
  if (!(frac_min > 0.0) || frac_max < frac_min || frac_max > 1.0)
    throw InvalidInputError("bad diagnostic fraction range");
}

SpecimenBag gen_specimen(SpecimenClass cls, const PrototypeSet& protos,
                         const GenParams& params, Rng& rng) {
  protos.validate();
  params.validate();

  const std::size_t n =
      params.n_min + rng.uniform_int(params.n_max - params.n_min + 1);
  const double frac = rng.uniform(params.frac_min, params.frac_max);
  const std::size_t n_diag =
      std::clamp<std::size_t>(std::size_t(std::lround(frac * double(n))), 1, n);

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng.shuffle(order);
  std::vector<std::size_t> diag(order.begin(), order.begin() + std::ptrdiff_t(n_diag));
  std::sort(diag.begin(), diag.end());

  SpecimenBag bag;
  bag.label = cls;
  bag.tiles = Matrix(n, protos.dim);
  bag.diagnostic_tiles = diag;

  std::size_t next_diag = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const bool is_diag = next_diag < diag.size() && diag[next_diag] == i;
    if (is_diag) ++next_diag;
    const std::vector<double>& center = is_diag ? protos.mu[int(cls)] : protos.mu_bg;
    double* row = bag.tiles.row(i);
    for (std::size_t j = 0; j < protos.dim; ++j)
      row[j] = center[j] + protos.sigma_e * rng.normal();
  }
  return bag;
}

namespace {

// Largest-remainder rounding of count into train/val/test quotas.
std::array<std::size_t, 3> split_quota(std::size_t count, const SplitFractions& f) {
  const std::array<double, 3> fr = {f.train, f.val, f.test};
  std::array<std::size_t, 3> quota{};
  std::array<double, 3> rem{};
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < 3; ++i) {
    const double exact = fr[i] * double(count);
    quota[i] = std::size_t(exact);
    rem[i] = exact - double(quota[i]);
    assigned += quota[i];
  }
  while (assigned < count) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < 3; ++i)
      if (rem[i] > rem[best]) best = i;
    ++quota[best];
    rem[best] = -1.0;
    ++assigned;
  }
  return quota;
}

} // namespace

std::vector<SpecimenBag> gen_dataset(const DatasetConfig& cfg, const PrototypeSet& protos,
                                     std::uint64_t seed) {
  protos.validate();
  cfg.params.validate();
  for (std::size_t c = 0; c < kNumClasses; ++c)
    if (cfg.counts[c] < 1)
      throw InvalidInputError("need at least one specimen per class (missing " +
                              std::string(class_id(kAllClasses[c])) + ")");
  const double frac_sum = cfg.fractions.train + cfg.fractions.val + cfg.fractions.test;
  if (!cfg.fixed_split && std::fabs(frac_sum - 1.0) > 1e-9)
    throw InvalidInputError("split fractions must sum to 1");
  if (cfg.fractions.train < 0 || cfg.fractions.val < 0 || cfg.fractions.test < 0)
    throw InvalidInputError("split fractions must be non-negative");

  std::vector<SpecimenBag> bags;
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    const SpecimenClass cls = kAllClasses[c];
    const std::size_t count = cfg.counts[c];
    const std::uint64_t class_seed = derive_seed(derive_seed(seed, "gen"), class_id(cls));

    std::vector<Split> assignment(count, Split::Train);
    if (cfg.fixed_split) {
      std::fill(assignment.begin(), assignment.end(), *cfg.fixed_split);
    } else {
      const auto quota = split_quota(count, cfg.fractions);
      std::vector<std::size_t> order(count);
      std::iota(order.begin(), order.end(), std::size_t{0});
      Rng split_rng(derive_seed(class_seed, "split"));
      split_rng.shuffle(order);
      for (std::size_t i = 0; i < count; ++i) {
        const Split s = i < quota[0]               ? Split::Train
                        : i < quota[0] + quota[1] ? Split::Val
                                                  : Split::Test;
        assignment[order[i]] = s;
      }
    }

    for (std::size_t i = 0; i < count; ++i) {
      Rng rng(derive_seed(class_seed, std::uint64_t(i)));
      SpecimenBag bag = gen_specimen(cls, protos, cfg.params, rng);
      bag.specimen_id = cfg.id_prefix + "-" + std::string(class_id(cls)) + "-" +
                        std::to_string(i);
      bag.lab_id = cfg.lab_id;
      bag.split = assignment[i];
      const std::vector<std::string> names = diagnoses_for_class(cls);
      if (!names.empty()) bag.diagnosis = names[rng.uniform_int(names.size())];
      bags.push_back(std::move(bag));
    }
  }
  return bags;
}

// --- reviewer simulation -----------------------------------------------------

void ReviewerKernel::validate() const {
  if (k.rows() != kNumClasses || k.cols() != kNumClasses)
    throw ShapeError("reviewer kernel must be 6x6");
  for (std::size_t r = 0; r < kNumClasses; ++r) {
    double sum = 0.0;
    for (std::size_t c = 0; c < kNumClasses; ++c) {
      if (k.at(r, c) < 0.0) throw InvalidInputError("reviewer kernel has negative entry");
      sum += k.at(r, c);
    }
    if (std::fabs(sum - 1.0) > 1e-9)
      throw InvalidInputError("reviewer kernel rows must sum to 1");
    if (k.at(r, r) < 0.5)
      throw InvalidInputError("reviewer kernel diagonal must be at least 0.5");
  }
}

double ReviewerKernel::at(SpecimenClass truth, SpecimenClass assigned) const {
  return k.at(std::size_t(int(truth)), std::size_t(int(assigned)));
}

ReviewerKernel identity_reviewer_kernel() {
  ReviewerKernel kernel;
  kernel.k = Matrix(kNumClasses, kNumClasses);
  for (std::size_t i = 0; i < kNumClasses; ++i) kernel.k.at(i, i) = 1.0;
  return kernel;
}

ReviewerKernel make_reviewer_kernel(double mel_low_diag, double mel_int_diag,
                                    double mel_high_diag, double non_mel_diag) {
  for (double d : {mel_low_diag, mel_int_diag, mel_high_diag, non_mel_diag})
    if (d <= 0.0 || d > 1.0)
      throw InvalidInputError("reviewer kernel diagonals must lie in (0,1]");
  ReviewerKernel kernel;
  kernel.k = Matrix(kNumClasses, kNumClasses);
  auto set = [&](SpecimenClass t, SpecimenClass a, double v) {
    kernel.k.at(std::size_t(int(t)), std::size_t(int(a))) = v;
  };
  using C = SpecimenClass;
  // Non-melanocytic reviewers are reliable; their rare misses read as Other
  // (or split across the carcinomas for true Other).
  set(C::Basaloid, C::Basaloid, non_mel_diag);
  set(C::Basaloid, C::Other, 1.0 - non_mel_diag);
  set(C::Squamous, C::Squamous, non_mel_diag);
  set(C::Squamous, C::Other, 1.0 - non_mel_diag);
  set(C::Other, C::Other, non_mel_diag);
  set(C::Other, C::Basaloid, 0.5 * (1.0 - non_mel_diag));
  set(C::Other, C::Squamous, 0.5 * (1.0 - non_mel_diag));
  // Melanocytic discordance concentrates on adjacent severities (80/20
  // adjacent/far for the continuum ends; Intermediate splits evenly).
  set(C::MelLow, C::MelLow, mel_low_diag);
  set(C::MelLow, C::MelInt, 0.8 * (1.0 - mel_low_diag));
  set(C::MelLow, C::MelHigh, 0.2 * (1.0 - mel_low_diag));
  set(C::MelInt, C::MelInt, mel_int_diag);
  set(C::MelInt, C::MelLow, 0.5 * (1.0 - mel_int_diag));
  set(C::MelInt, C::MelHigh, 0.5 * (1.0 - mel_int_diag));
  set(C::MelHigh, C::MelHigh, mel_high_diag);
  set(C::MelHigh, C::MelInt, 0.8 * (1.0 - mel_high_diag));
  set(C::MelHigh, C::MelLow, 0.2 * (1.0 - mel_high_diag));
  kernel.validate();
  return kernel;
}

ReviewerKernel default_reviewer_kernel() {
  return make_reviewer_kernel(0.80, 0.65, 0.85, 0.95);
}

namespace {

SpecimenClass draw_review(SpecimenClass truth, const ReviewerKernel& kernel, Rng& rng) {
  const double u = rng.uniform01();
  double cum = 0.0;
  for (SpecimenClass c : kAllClasses) {
    cum += kernel.at(truth, c);
    if (u < cum) return c;
  }
  return kAllClasses.back(); // u landed in the rounding slack of the row sum
}

} // namespace

std::vector<SpecimenClass> simulate_reviews(SpecimenClass truth, const ReviewerKernel& kernel,
                                            int n_reviewers, Rng& rng) {
  if (n_reviewers != 3 && n_reviewers != 5)
    throw InvalidInputError("reviews come in panels of 3 or 5");
  kernel.validate();

  std::vector<SpecimenClass> out;
  out.reserve(std::size_t(n_reviewers));
  for (int i = 0; i < n_reviewers; ++i) out.push_back(draw_review(truth, kernel, rng));
  return out;
}

namespace {

// 2-vs-1 panels consult the two extra reviewers; unanimity and three-way
// splits do not.
bool needs_extras(const std::array<SpecimenClass, 3>& first_three) {
  const bool all_same = first_three[0] == first_three[1] &&
                        first_three[1] == first_three[2];
  const bool all_distinct = first_three[0] != first_three[1] &&
                            first_three[1] != first_three[2] &&
                            first_three[0] != first_three[2];
  return !all_same && !all_distinct;
}

} // namespace

std::vector<ReviewedBag> simulate_dataset_reviews(const std::vector<SpecimenBag>& bags,
                                                  const ReviewerKernel& kernel,
                                                  std::uint64_t seed) {
  kernel.validate();
  std::vector<ReviewedBag> out;
  out.reserve(bags.size());
  const std::uint64_t base = derive_seed(seed, "reviews");
  for (const SpecimenBag& bag : bags) {
    ReviewedBag rb;
    rb.bag = bag;
    if (is_melanocytic(bag.label)) {
      Rng rng(derive_seed(base, bag.specimen_id));
      ReviewRecord rec;
      for (SpecimenClass& r : rec.first_three) r = draw_review(bag.label, kernel, rng);
      if (needs_extras(rec.first_three))
        rec.extra_two = {draw_review(bag.label, kernel, rng),
                         draw_review(bag.label, kernel, rng)};
      rb.reviews = rec;
    }
    out.push_back(std::move(rb));
  }
  return out;
}

ConsensusSplit apply_consensus_filter(const std::vector<ReviewedBag>& bags) {
  ConsensusSplit out;
  for (const ReviewedBag& rb : bags) {
    if (!rb.reviews.has_value()) {
      if (is_melanocytic(rb.bag.label))
        throw IncompleteReviewError("melanocytic specimen " + rb.bag.specimen_id +
                                    " has no reviews");
      out.consensus.push_back(rb.bag);
      continue;
    }
    const ConsensusDecision decision =
        consensus(rb.reviews->first_three, rb.reviews->extra_two);
    SpecimenBag bag = rb.bag;
    if (decision.outcome.has_value()) {
      bag.label = *decision.outcome;
      out.consensus.push_back(std::move(bag));
    } else {
      bag.label = rb.reviews->first_three[0];
      out.non_consensus.push_back(std::move(bag));
    }
  }
  return out;
}

// --- synthetic slides -----------------------------------------------------------

namespace {

struct Blob {
  double cy, cx, ry, rx, angle;
};

void box_blur_region(Image& img, std::size_t x0, int radius) {
  // Three box passes approximate a Gaussian; only x >= x0 is rewritten.
  for (int pass = 0; pass < 3; ++pass) {
    Image src = img;
    for (std::size_t y = 0; y < img.height; ++y) {
      for (std::size_t x = x0; x < img.width; ++x) {
        for (std::size_t ch = 0; ch < 3; ++ch) {
          long sum = 0;
          long count = 0;
          for (int dy = -radius; dy <= radius; ++dy) {
            for (int dx = -radius; dx <= radius; ++dx) {
              const long yy = long(y) + dy;
              const long xx = long(x) + dx;
              if (yy < 0 || xx < 0 || yy >= long(img.height) || xx >= long(img.width))
                continue;
              sum += src.at(std::size_t(yy), std::size_t(xx), ch);
              ++count;
            }
          }
          img.at(y, x, ch) = std::uint8_t((sum + count / 2) / count);
        }
      }
    }
  }
}

} // namespace

SyntheticSlide gen_synthetic_slide(SpecimenClass cls, const SlideOptions& opts, Rng& rng) {
  if (opts.width < 256 || opts.height < 256)
    throw InvalidInputError("synthetic slides must be at least 256x256");

  SyntheticSlide out;
  Image& img = out.slide.image;
  img = Image(opts.width, opts.height);
  out.tissue = Mask(opts.width, opts.height);
  out.ink = Mask(opts.width, opts.height);
  out.blur = Mask(opts.width, opts.height);

  // Near-white scanner background.
  for (std::size_t i = 0; i < img.pixels.size(); ++i)
    img.pixels[i] = std::uint8_t(248 + rng.uniform_int(8));

  // Two to four elliptical tissue blobs; the tint wobbles between eosin
  // pink and hematoxylin purple, nudged by class so labs are not clones.
  const std::size_t n_blobs = 2 + rng.uniform_int(3);
  std::vector<Blob> blobs;
  for (std::size_t b = 0; b < n_blobs; ++b) {
    Blob blob;
    blob.cy = rng.uniform(0.25, 0.75) * double(opts.height);
    blob.cx = rng.uniform(0.25, 0.75) * double(opts.width);
    blob.ry = rng.uniform(0.12, 0.30) * double(opts.height);
    blob.rx = rng.uniform(0.12, 0.30) * double(opts.width);
    blob.angle = rng.uniform(0.0, 3.14159265358979323846);
    blobs.push_back(blob);
  }

  const double mix = rng.uniform(0.0, 1.0);
  const double class_tint = double(int(cls)) / double(kNumClasses - 1);
  const std::array<double, 3> pink = {231, 170, 192};
  const std::array<double, 3> purple = {148, 104, 166};
  std::array<double, 3> base{};
  for (std::size_t ch = 0; ch < 3; ++ch)
    base[ch] = pink[ch] + (purple[ch] - pink[ch]) * (0.65 * mix + 0.35 * class_tint);

  for (std::size_t y = 0; y < opts.height; ++y) {
    for (std::size_t x = 0; x < opts.width; ++x) {
      bool inside = false;
      for (const Blob& b : blobs) {
        const double dy = double(y) - b.cy;
        const double dx = double(x) - b.cx;
        const double ca = std::cos(b.angle);
        const double sa = std::sin(b.angle);
        const double u = (dx * ca + dy * sa) / b.rx;
        const double v = (-dx * sa + dy * ca) / b.ry;
        if (u * u + v * v <= 1.0) {
          inside = true;
          break;
        }
      }
      if (!inside) continue;
      out.tissue.at(y, x) = 1;
      for (std::size_t ch = 0; ch < 3; ++ch) {
        const double v = base[ch] + rng.uniform(-18.0, 18.0);
        img.at(y, x, ch) = std::uint8_t(std::clamp(std::lround(v), 0L, 255L));
      }
    }
  }

  if (opts.blur) {
    const std::size_t x0 = opts.width / 2;
    box_blur_region(img, x0, 2);
    for (std::size_t y = 0; y < opts.height; ++y)
      for (std::size_t x = x0; x < opts.width; ++x) out.blur.at(y, x) = 1;
  }

  if (opts.ink) {
    static constexpr std::array<std::array<std::uint8_t, 3>, 3> inks = {
        {{20, 24, 208}, {18, 158, 48}, {12, 12, 12}}};
    const std::size_t n_strokes = 1 + rng.uniform_int(3);
    for (std::size_t s = 0; s < n_strokes; ++s) {
      const auto& color = inks[rng.uniform_int(inks.size())];
      const double y0 = rng.uniform(0.1, 0.9) * double(opts.height);
      const double x0 = rng.uniform(0.1, 0.9) * double(opts.width);
      const double y1 = rng.uniform(0.1, 0.9) * double(opts.height);
      const double x1 = rng.uniform(0.1, 0.9) * double(opts.width);
      const double radius = rng.uniform(4.0, 9.0);
      const double len = std::hypot(y1 - y0, x1 - x0);
      const std::size_t steps = std::size_t(len) + 1;
      for (std::size_t t = 0; t <= steps; ++t) {
        const double f = double(t) / double(steps);
        const double cy = y0 + (y1 - y0) * f;
        const double cx = x0 + (x1 - x0) * f;
        const long lo_y = std::max(0L, long(cy - radius));
        const long hi_y = std::min(long(opts.height) - 1, long(cy + radius));
        const long lo_x = std::max(0L, long(cx - radius));
        const long hi_x = std::min(long(opts.width) - 1, long(cx + radius));
        for (long y = lo_y; y <= hi_y; ++y) {
          for (long x = lo_x; x <= hi_x; ++x) {
            const double d = std::hypot(double(y) - cy, double(x) - cx);
            if (d > radius) continue;
            for (std::size_t ch = 0; ch < 3; ++ch)
              img.at(std::size_t(y), std::size_t(x), ch) = color[ch];
            out.ink.at(std::size_t(y), std::size_t(x)) = 1;
          }
        }
      }
    }
  }
  return out;
}

} // namespace pdls
