// pdls: command-line front end for the specimen triage pipeline.
//
// Subcommands mirror the workflow: synth-gen makes a labeled dataset, qc
// turns slide images into one, train/calibrate/finetune produce models,
// infer/evaluate/triage-sim/ablation produce reports. Every subcommand
// reads a config file, honors --seed and writes artifacts under --out.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "pdls/calibration.hpp"
#include "pdls/config.hpp"
#include "pdls/errors.hpp"
#include "pdls/evaluation.hpp"
#include "pdls/hierarchy.hpp"
#include "pdls/imaging.hpp"
#include "pdls/persistence.hpp"
#include "pdls/rng.hpp"
#include "pdls/synth.hpp"

namespace fs = std::filesystem;
using namespace pdls;

namespace {

struct Common {
  std::string config_path;
  std::string out_dir = ".";
  std::uint64_t seed = 0;
  std::string model_name = "model_calibrated.pdls";
  bool no_timestamp = false;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config_path, "config file (TOML-style sections)")
      ->required();
  cmd->add_option("--seed", c.seed, "base RNG seed (default 0)");
  cmd->add_option("--out", c.out_dir, "artifact directory (default .)");
  cmd->add_flag("--no-timestamp", c.no_timestamp,
                "omit the generated-at comment so reruns are byte-identical");
}

std::string resolve(const Common& c, const std::string& name) {
  fs::path p(name);
  if (p.is_absolute()) return name;
  return (fs::path(c.out_dir) / p).string();
}

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

Config read_config(const Common& c) {
  fs::create_directories(c.out_dir);
  return load_config(c.config_path);
}

std::vector<SpecimenBag> read_dataset(const Common& c, const Config& cfg) {
  return load_dataset(resolve(c, cfg.data.manifest), resolve(c, cfg.data.embeddings));
}

HierarchyTrainConfig hier_config(const Config& cfg, std::uint64_t seed) {
  HierarchyTrainConfig h;
  h.model.encoder_widths = cfg.train.encoder_widths;
  h.model.attention_dim = cfg.train.attention_dim;
  h.model.dropout_rate = cfg.train.dropout;
  h.fit.adam.lr = cfg.train.lr;
  h.fit.max_epochs = cfg.train.max_epochs;
  h.fit.patience = cfg.train.patience;
  h.fit.bag_batch = int(cfg.train.bag_batch);
  h.seed = seed;
  return h;
}

McConfig mc_config(const Config& cfg, std::uint64_t seed) {
  McConfig mc;
  mc.passes = cfg.mc.passes;
  mc.seed = derive_seed(seed, "mc");
  return mc;
}

CalibrationTargets targets_config(const Config& cfg) {
  CalibrationTargets t;
  t.accuracy = cfg.thresholds.accuracy;
  t.ppv = cfg.thresholds.ppv;
  return t;
}

std::vector<SpecimenBag> take_split(const std::vector<SpecimenBag>& bags, Split s) {
  std::vector<SpecimenBag> out;
  for (const SpecimenBag& b : bags)
    if (b.split == s) out.push_back(b);
  return out;
}

void print_dataset_summary(const std::vector<SpecimenBag>& bags, const std::string& what) {
  std::map<std::string, std::size_t> per_class;
  std::map<std::string, std::size_t> per_split;
  for (const SpecimenBag& b : bags) {
    ++per_class[std::string(class_id(b.label))];
    ++per_split[std::string(split_id(b.split))];
  }
  std::cout << what << ": " << bags.size() << " specimens\n";
  for (const auto& [k, v] : per_class) std::cout << "  class " << k << ": " << v << "\n";
  for (const auto& [k, v] : per_split) std::cout << "  split " << k << ": " << v << "\n";
}

// --- report writers ---------------------------------------------------------

const std::vector<std::pair<std::string, std::string>> kConfidenceColumns = {
    {std::string(kUpstreamHead), "suspect"}, {"high_vs_int", "mel_high"},
    {"high_vs_rest", "mel_high"},            {"int_vs_rest", "mel_int"},
    {std::string(kRestHead), "basaloid"},    {std::string(kRestHead), "squamous"},
    {std::string(kRestHead), "mel_low"},     {std::string(kRestHead), "other"},
};

void write_predictions(const Common& c, const std::vector<Prediction>& preds) {
  CsvReport rep;
  rep.timestamp = !c.no_timestamp;
  rep.header = {"specimen_id", "final_label", "low_confidence", "branch"};
  for (const auto& [head, cls] : kConfidenceColumns)
    rep.header.push_back("conf_" + head + "_" + cls);
  for (const Prediction& p : preds) {
    std::vector<std::string> row = {p.specimen_id, std::string(final_class_id(p.final.cls)),
                                    p.final.low_confidence ? "1" : "0",
                                    std::string(branch_id(p.branch))};
    for (const auto& [head, cls] : kConfidenceColumns) {
      const auto it = std::find_if(p.confidences.heads.begin(), p.confidences.heads.end(),
                                   [&](const HeadConfidence& h) { return h.head == head; });
      row.push_back(it == p.confidences.heads.end() ? "" : num(it->prob(cls)));
    }
    rep.rows.push_back(std::move(row));
  }
  write_csv(resolve(c, "predictions.csv"), rep);
}

void append_metric_rows(CsvReport& rep, const std::string& mode,
                        const std::vector<MetricsRow>& rows) {
  for (const MetricsRow& r : rows)
    rep.rows.push_back({mode, r.label, num(r.ppv), num(r.sensitivity), num(r.f1),
                        num(r.balanced_accuracy), std::to_string(r.support)});
}

void write_thresholds(const Common& c, const ThresholdSet& t, const std::string& name) {
  CsvReport rep;
  rep.timestamp = !c.no_timestamp;
  rep.comments.push_back("target_accuracy=" + num(t.target_accuracy.empty()
                                                      ? 0.0
                                                      : t.target_accuracy.begin()->second));
  rep.comments.push_back("target_ppv=" + num(t.target_ppv));
  for (const std::string& w : t.warnings) rep.comments.push_back("warning: " + w);
  rep.header = {"kind", "class", "threshold"};
  for (const auto& [cls, v] : t.accuracy)
    rep.rows.push_back({"accuracy", std::string(class_id(cls)), num(v)});
  rep.rows.push_back({"ppv", std::string(class_id(SpecimenClass::MelHigh)),
                      num(t.ppv_mel_high)});
  write_csv(resolve(c, name), rep);
}

// --- subcommands --------------------------------------------------------------

void run_synth_gen(const Common& c) {
  const Config cfg = read_config(c);
  PrototypeSet protos = make_prototypes(cfg.synth.dim, cfg.synth.delta, cfg.synth.sigma_e,
                                        derive_seed(c.seed, "prototypes"));
  if (cfg.synth.lab_shift > 0.0)
    protos = shift_prototypes(protos, cfg.synth.lab_shift, derive_seed(c.seed, "lab-shift"));

  DatasetConfig dc;
  dc.counts = cfg.synth.counts;
  dc.fractions = {cfg.synth.train_frac, cfg.synth.val_frac, cfg.synth.test_frac};
  dc.params = {cfg.synth.n_min, cfg.synth.n_max, cfg.synth.frac_min, cfg.synth.frac_max};
  dc.lab_id = cfg.synth.lab_id;
  dc.id_prefix = cfg.synth.id_prefix;
  std::vector<SpecimenBag> bags = gen_dataset(dc, protos, derive_seed(c.seed, "dataset"));

  if (cfg.synth.reviews) {
    const ReviewerKernel kernel =
        make_reviewer_kernel(cfg.synth.kernel_mel_low, cfg.synth.kernel_mel_int,
                             cfg.synth.kernel_mel_high, cfg.synth.kernel_non_mel);
    const std::vector<ReviewedBag> reviewed =
        simulate_dataset_reviews(bags, kernel, derive_seed(c.seed, "reviews"));
    const ConsensusSplit split = apply_consensus_filter(reviewed);
    save_dataset(split.consensus, resolve(c, cfg.data.manifest),
                 resolve(c, cfg.data.embeddings));
    const fs::path man(cfg.data.manifest);
    const fs::path emb(cfg.data.embeddings);
    const std::string nc_manifest =
        (man.parent_path() / ("non_consensus_" + man.filename().string())).string();
    const std::string nc_embeddings =
        (emb.parent_path() / ("non_consensus_" + emb.filename().string())).string();
    save_dataset(split.non_consensus, resolve(c, nc_manifest), resolve(c, nc_embeddings));
    print_dataset_summary(split.consensus, "consensus dataset");
    print_dataset_summary(split.non_consensus, "non-consensus dataset");
    std::cout << "excluded by consensus: "
              << (bags.size() - split.consensus.size()) << " specimens\n";
  } else {
    save_dataset(bags, resolve(c, cfg.data.manifest), resolve(c, cfg.data.embeddings));
    print_dataset_summary(bags, "dataset");
  }
}

struct QcOpts {
  std::string slides_dir;
  std::string labels_csv;
};

void run_qc(const Common& c, const QcOpts& opts) {
  const Config cfg = read_config(c);

  struct SlideMeta {
    SpecimenClass label = SpecimenClass::Other;
    std::string lab_id;
    std::string diagnosis;
    Split split = Split::Train;
  };
  std::map<std::string, SlideMeta> meta;
  if (!opts.labels_csv.empty()) {
    std::ifstream in(opts.labels_csv);
    if (!in) throw DataError("cannot open labels file " + opts.labels_csv);
    std::string line;
    bool header = true;
    while (std::getline(in, line)) {
      if (line.empty() || line[0] == '#') continue;
      if (header) {
        header = false;
        continue;
      }
      const std::vector<std::string> f = csv_split(line);
      if (f.size() != 5)
        throw DataError("labels file needs specimen_id,class,lab_id,diagnosis,split");
      meta[f[0]] = {class_from_id(f[1]), f[2], f[3], split_from_id(f[4])};
    }
  }

  std::vector<fs::path> slide_paths;
  for (const fs::directory_entry& e : fs::directory_iterator(opts.slides_dir)) {
    if (!e.is_regular_file()) continue;
    const std::string ext = e.path().extension().string();
    if (ext == ".png" || ext == ".ppm") slide_paths.push_back(e.path());
  }
  std::sort(slide_paths.begin(), slide_paths.end());
  if (slide_paths.empty()) throw DataError("no .png/.ppm slides in " + opts.slides_dir);

  const BuiltinEmbedder embedder(cfg.qc.embed_dim, derive_seed(c.seed, "embedder"));
  CsvReport qc_log;
  qc_log.timestamp = !c.no_timestamp;
  qc_log.header = {"specimen_id", "tiles_total", "tiles_blurred", "tiles_kept"};

  std::vector<SpecimenBag> bags;
  for (const fs::path& path : slide_paths) {
    const std::string id = path.stem().string();
    const SlideImage slide = load_slide(path.string());
    const Mask tissue = segment_tissue(slide);
    std::vector<Tile> tiles = tile_slide(slide, tissue);
    const std::size_t total = tiles.size();
    std::size_t blurred = 0;
    if (cfg.qc.blur_threshold > 0.0) {
      FilterLog log = blur_filter(tiles, cfg.qc.blur_threshold);
      blurred = log.rejected.size();
      tiles = std::move(log.kept);
    }
    if (tiles.empty()) {
      std::cout << "skipping " << id << ": no usable tissue tiles\n";
      qc_log.rows.push_back({id, std::to_string(total), std::to_string(blurred), "0"});
      continue;
    }
    SpecimenBag bag;
    bag.specimen_id = id;
    bag.tiles = embed_tiles(tiles, embedder, id);
    const auto it = meta.find(id);
    if (it != meta.end()) {
      bag.label = it->second.label;
      bag.lab_id = it->second.lab_id;
      bag.diagnosis = it->second.diagnosis;
      bag.split = it->second.split;
    } else {
      bag.lab_id = cfg.synth.lab_id;
    }
    bags.push_back(std::move(bag));
    qc_log.rows.push_back(
        {id, std::to_string(total), std::to_string(blurred), std::to_string(tiles.size())});
  }
  if (bags.empty()) throw DataError("every slide was rejected by QC");
  save_dataset(bags, resolve(c, cfg.data.manifest), resolve(c, cfg.data.embeddings));
  write_csv(resolve(c, "qc_log.csv"), qc_log);
  print_dataset_summary(bags, "qc dataset");
}

void run_train(const Common& c) {
  const Config cfg = read_config(c);
  const std::vector<SpecimenBag> bags = read_dataset(c, cfg);
  const PdlsModel model = train_hierarchy(bags, hier_config(cfg, c.seed));
  save_model(model, resolve(c, "model.pdls"));
  std::cout << "trained on " << take_split(bags, Split::Train).size() << " specimens, wrote "
            << resolve(c, "model.pdls") << "\n";
}

void run_calibrate(const Common& c) {
  const Config cfg = read_config(c);
  const std::vector<SpecimenBag> bags = read_dataset(c, cfg);
  PdlsModel model = load_model(resolve(c, "model.pdls"));
  const std::vector<SpecimenBag> val = take_split(bags, Split::Val);
  if (val.empty()) throw DataError("no validation-split specimens to calibrate on");
  model.thresholds =
      calibrate_all(model, val, targets_config(cfg), mc_config(cfg, c.seed));
  save_model(model, resolve(c, c.model_name));
  write_thresholds(c, *model.thresholds, "thresholds.csv");
  std::cout << "calibrated on " << val.size() << " specimens, wrote "
            << resolve(c, c.model_name) << "\n";
  for (const std::string& w : model.thresholds->warnings) std::cout << "warning: " << w << "\n";
}

void run_finetune(const Common& c) {
  const Config cfg = read_config(c);
  const std::vector<SpecimenBag> bags = read_dataset(c, cfg);
  const PdlsModel base = load_model(resolve(c, c.model_name));
  FinetuneConfig fc;
  fc.train_count = int(cfg.train.finetune_train);
  fc.val_count = int(cfg.train.finetune_val);
  fc.fit.adam.lr = cfg.train.lr;
  fc.fit.max_epochs = cfg.train.max_epochs;
  fc.fit.patience = cfg.train.patience;
  fc.fit.bag_batch = int(cfg.train.bag_batch);
  fc.targets = targets_config(cfg);
  fc.mc = mc_config(cfg, c.seed);
  fc.seed = derive_seed(c.seed, "finetune");
  const PdlsModel tuned = finetune(base, bags, fc);
  save_model(tuned, resolve(c, "model_finetuned.pdls"));
  write_thresholds(c, *tuned.thresholds, "thresholds_finetuned.csv");
  std::cout << "finetuned on " << bags.size() << " calibration specimens, wrote "
            << resolve(c, "model_finetuned.pdls") << "\n";
}

void run_infer(const Common& c) {
  const Config cfg = read_config(c);
  const std::vector<SpecimenBag> bags = read_dataset(c, cfg);
  const PdlsModel model = load_model(resolve(c, c.model_name));
  const McConfig mc = mc_config(cfg, c.seed);
  std::vector<Prediction> preds;
  preds.reserve(bags.size());
  for (const SpecimenBag& b : bags) preds.push_back(infer_specimen(model, b, mc));
  write_predictions(c, preds);
  std::cout << "wrote " << preds.size() << " predictions to "
            << resolve(c, "predictions.csv") << "\n";
}

void run_evaluate(const Common& c) {
  const Config cfg = read_config(c);
  const std::vector<SpecimenBag> bags = read_dataset(c, cfg);
  const std::vector<SpecimenBag> test = take_split(bags, Split::Test);
  if (test.empty()) throw DataError("no test-split specimens to evaluate");
  const PdlsModel model = load_model(resolve(c, c.model_name));
  const McConfig mc = mc_config(cfg, c.seed);

  std::vector<Prediction> preds;
  std::vector<FinalLabel> finals;
  std::vector<SpecimenClass> truths;
  std::vector<ConfidenceVector> all_heads;
  std::vector<DiagnosisCase> diag_cases;
  bool any_diagnosis = false;
  for (const SpecimenBag& b : test) {
    preds.push_back(infer_specimen(model, b, mc));
    finals.push_back(preds.back().final);
    truths.push_back(b.label);
    all_heads.push_back(infer_all_heads(model, b, mc));
    diag_cases.push_back({preds.back().final, b.label, b.diagnosis});
    any_diagnosis = any_diagnosis || !b.diagnosis.empty();
  }
  write_predictions(c, preds);

  CsvReport metrics;
  metrics.timestamp = !c.no_timestamp;
  metrics.header = {"mode", "label", "ppv", "sensitivity", "f1", "balanced_accuracy",
                    "support"};
  append_metric_rows(metrics, "strict", confusion_metrics(finals, truths, MetricMode::Strict));
  append_metric_rows(metrics, "suspect_credit",
                     confusion_metrics(finals, truths, MetricMode::SuspectCredit));
  write_csv(resolve(c, "metrics.csv"), metrics);

  const std::map<std::string, ROCCurve> curves = hierarchy_roc(all_heads, truths);
  CsvReport auc;
  auc.timestamp = !c.no_timestamp;
  auc.header = {"class", "auc"};
  CsvReport points;
  points.timestamp = !c.no_timestamp;
  points.header = {"class", "fpr", "tpr"};
  for (const auto& [cls, curve] : curves) {
    auc.rows.push_back({cls, num(curve.auc)});
    for (const ROCPoint& p : curve.points)
      points.rows.push_back({cls, num(p.fpr), num(p.tpr)});
  }
  write_csv(resolve(c, "roc_auc.csv"), auc);
  write_csv(resolve(c, "roc_points.csv"), points);

  if (any_diagnosis) {
    CsvReport diag;
    diag.timestamp = !c.no_timestamp;
    diag.header = {"diagnosis", "ppv", "sensitivity", "f1", "balanced_accuracy", "support"};
    for (const MetricsRow& r : diagnosis_report(diag_cases))
      diag.rows.push_back({r.label, num(r.ppv), num(r.sensitivity), num(r.f1),
                           num(r.balanced_accuracy), std::to_string(r.support)});
    write_csv(resolve(c, "diagnosis_metrics.csv"), diag);
  }
  std::cout << "evaluated " << test.size() << " test specimens; reports in " << c.out_dir
            << "\n";
}

void run_triage_sim(const Common& c, int sims, std::size_t caseload) {
  const Config cfg = read_config(c);
  const std::vector<SpecimenBag> bags = read_dataset(c, cfg);
  const std::vector<SpecimenBag> test = take_split(bags, Split::Test);
  if (test.empty()) throw DataError("no test-split specimens for the triage pool");
  const PdlsModel model = load_model(resolve(c, c.model_name));
  const McConfig mc = mc_config(cfg, c.seed);

  std::vector<TriageInput> pool;
  pool.reserve(test.size());
  for (const SpecimenBag& b : test) {
    const RawInference raw = infer_raw(model, b, mc);
    pool.push_back({b.specimen_id, raw.upstream_suspect_confidence,
                    suspect_grouping(b.label) == SuspectGroup::Suspect});
  }

  const TriageCurve curve = triage_simulation(pool, sims, caseload,
                                              default_triage_fractions(),
                                              derive_seed(c.seed, "triage"));
  CsvReport rep;
  rep.timestamp = !c.no_timestamp;
  rep.comments.push_back("S=" + std::to_string(curve.simulations));
  rep.comments.push_back("caseload=" + std::to_string(curve.caseload));
  for (const std::string& w : curve.warnings) rep.comments.push_back("warning: " + w);
  rep.header = {"fraction_reviewed", "mean_sensitivity", "std_sensitivity"};
  for (std::size_t i = 0; i < curve.fractions.size(); ++i)
    rep.rows.push_back({num(curve.fractions[i]), num(curve.mean_sensitivity[i]),
                        num(curve.std_sensitivity[i])});
  write_csv(resolve(c, "triage.csv"), rep);
  std::cout << "simulated " << curve.simulations << " caseloads of " << curve.caseload
            << ", wrote " << resolve(c, "triage.csv") << "\n";
}

struct AblationOpts {
  std::string nc_manifest;
  std::string nc_embeddings;
  int n_seeds = 3;
};

void run_ablation(const Common& c, const AblationOpts& opts) {
  const Config cfg = read_config(c);
  const std::vector<SpecimenBag> consensus = read_dataset(c, cfg);
  const std::vector<SpecimenBag> non_consensus =
      load_dataset(resolve(c, opts.nc_manifest), resolve(c, opts.nc_embeddings));
  if (opts.n_seeds < 1) throw UsageError("--n-seeds must be positive");

  const std::vector<SpecimenBag> test = take_split(consensus, Split::Test);
  std::vector<SpecimenBag> variant_a;
  for (const SpecimenBag& b : consensus)
    if (b.split != Split::Test) variant_a.push_back(b);
  // The second variant trains on the same data plus the non-consensus pool;
  // the shared test set stays consensus-only, so pool members that drew the
  // test split go to training instead of idling.
  std::vector<SpecimenBag> variant_b = variant_a;
  for (SpecimenBag b : non_consensus) {
    if (b.split == Split::Test) b.split = Split::Train;
    variant_b.push_back(std::move(b));
  }

  std::vector<std::uint64_t> seeds(std::size_t(opts.n_seeds));
  for (int i = 0; i < opts.n_seeds; ++i) seeds[std::size_t(i)] = c.seed + std::uint64_t(i);

  AblationConfig acfg;
  acfg.train = hier_config(cfg, c.seed);
  acfg.targets = targets_config(cfg);
  acfg.mc = mc_config(cfg, c.seed);
  const AblationReport report = ablation_run(variant_a, variant_b, test, seeds, acfg);

  CsvReport runs;
  runs.timestamp = !c.no_timestamp;
  runs.header = {"seed", "variant", "metric", "value"};
  auto emit_runs = [&](const std::vector<AblationVariantRun>& rs, const std::string& name) {
    for (const AblationVariantRun& r : rs) {
      runs.rows.push_back({std::to_string(r.seed), name, "suspect_sensitivity",
                           num(r.suspect_sensitivity)});
      runs.rows.push_back({std::to_string(r.seed), name, "high_ppv", num(r.high_ppv)});
      for (const auto& [cls, v] : r.class_sensitivity)
        runs.rows.push_back({std::to_string(r.seed), name, "sensitivity_" + cls, num(v)});
    }
  };
  emit_runs(report.consensus_runs, "consensus");
  emit_runs(report.non_consensus_runs, "non_consensus");
  write_csv(resolve(c, "ablation_runs.csv"), runs);

  CsvReport summary;
  summary.timestamp = !c.no_timestamp;
  summary.comments.push_back("delta = consensus - non_consensus, over " +
                             std::to_string(opts.n_seeds) + " seeds");
  summary.header = {"metric", "delta_mean", "delta_std"};
  summary.rows.push_back({"suspect_sensitivity", num(report.suspect_sensitivity_delta_mean),
                          num(report.suspect_sensitivity_delta_std)});
  summary.rows.push_back(
      {"high_ppv", num(report.high_ppv_delta_mean), num(report.high_ppv_delta_std)});
  for (const auto& [cls, mean] : report.class_sensitivity_delta_mean)
    summary.rows.push_back({"sensitivity_" + cls, num(mean),
                            num(report.class_sensitivity_delta_std.at(cls))});
  write_csv(resolve(c, "ablation_summary.csv"), summary);
  std::cout << "suspect sensitivity delta: " << num(report.suspect_sensitivity_delta_mean)
            << " +- " << num(report.suspect_sensitivity_delta_std) << "\n";
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"pdls: hierarchical dermatopathology specimen triage"};
  app.require_subcommand(1);

  Common common;
  QcOpts qc_opts;
  AblationOpts ab_opts;
  int sims = 1000;
  std::size_t caseload = 0;

  CLI::App* synth_gen = app.add_subcommand("synth-gen", "generate a synthetic dataset");
  add_common(synth_gen, common);

  CLI::App* qc = app.add_subcommand("qc", "slide QC: segment, tile, filter, embed");
  add_common(qc, common);
  qc->add_option("--slides", qc_opts.slides_dir, "directory of .png/.ppm slides")
      ->required();
  qc->add_option("--labels", qc_opts.labels_csv,
                 "CSV of specimen_id,class,lab_id,diagnosis,split");

  CLI::App* train = app.add_subcommand("train", "train the three-model hierarchy");
  add_common(train, common);

  CLI::App* calibrate = app.add_subcommand("calibrate", "calibrate confidence thresholds");
  add_common(calibrate, common);

  CLI::App* finetune_cmd = app.add_subcommand("finetune", "adapt a model to a new lab");
  add_common(finetune_cmd, common);
  finetune_cmd->add_option("--model", common.model_name, "input model file name");

  CLI::App* infer = app.add_subcommand("infer", "predict final labels for a dataset");
  add_common(infer, common);
  infer->add_option("--model", common.model_name, "model file name");

  CLI::App* evaluate = app.add_subcommand("evaluate", "metrics + ROC on the test split");
  add_common(evaluate, common);
  evaluate->add_option("--model", common.model_name, "model file name");

  CLI::App* triage = app.add_subcommand("triage-sim", "bootstrap worklist simulation");
  add_common(triage, common);
  triage->add_option("--model", common.model_name, "model file name");
  triage->add_option("--sims", sims, "number of simulated caseloads (default 1000)");
  triage->add_option("--caseload", caseload, "specimens per caseload (0 = pool size)");

  CLI::App* ablation = app.add_subcommand("ablation", "consensus vs non-consensus labels");
  add_common(ablation, common);
  ablation->add_option("--nc-manifest", ab_opts.nc_manifest,
                       "manifest of the non-consensus variant")->required();
  ablation->add_option("--nc-embeddings", ab_opts.nc_embeddings,
                       "embeddings of the non-consensus variant")->required();
  ablation->add_option("--n-seeds", ab_opts.n_seeds, "training repetitions (default 3)");

  try {
    app.parse(argc, argv);
    if (synth_gen->parsed()) run_synth_gen(common);
    if (qc->parsed()) run_qc(common, qc_opts);
    if (train->parsed()) run_train(common);
    if (calibrate->parsed()) run_calibrate(common);
    if (finetune_cmd->parsed()) run_finetune(common);
    if (infer->parsed()) run_infer(common);
    if (evaluate->parsed()) run_evaluate(common);
    if (triage->parsed()) run_triage_sim(common, sims, caseload);
    if (ablation->parsed()) run_ablation(common, ab_opts);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
