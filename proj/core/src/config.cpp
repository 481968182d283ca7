#include "pdls/config.hpp"

#include <cctype>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "pdls/errors.hpp"

namespace pdls {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && std::isspace(std::uint8_t(s[b]))) ++b;
  while (e > b && std::isspace(std::uint8_t(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

[[noreturn]] void bad(const std::string& where, const std::string& what) {
  throw UsageError("config: " + where + ": " + what);
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double x = std::stod(v, &used);
    if (used != v.size()) bad(key, "trailing characters after number '" + v + "'");
    return x;
  } catch (const UsageError&) {
    throw;
  } catch (const std::exception&) {
    bad(key, "expected a number, got '" + v + "'");
  }
}

long long parse_int(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const long long x = std::stoll(v, &used);
    if (used != v.size()) bad(key, "trailing characters after integer '" + v + "'");
    return x;
  } catch (const UsageError&) {
    throw;
  } catch (const std::exception&) {
    bad(key, "expected an integer, got '" + v + "'");
  }
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true") return true;
  if (v == "false") return false;
  bad(key, "expected true or false, got '" + v + "'");
}

std::string parse_string(const std::string& key, const std::string& v) {
  if (v.size() < 2 || v.front() != '"' || v.back() != '"')
    bad(key, "expected a double-quoted string, got '" + v + "'");
  return v.substr(1, v.size() - 2);
}

std::vector<std::string> parse_list(const std::string& key, const std::string& v) {
  if (v.size() < 2 || v.front() != '[' || v.back() != ']')
    bad(key, "expected a bracketed list, got '" + v + "'");
  std::vector<std::string> items;
  std::string body = v.substr(1, v.size() - 2);
  std::istringstream ss(body);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) bad(key, "empty list element");
    items.push_back(item);
  }
  return items;
}

// One setter per known key; lookups double as the unknown-key check.
using Setter = std::function<void(Config&, const std::string&, const std::string&)>;

std::map<std::string, Setter> key_table() {
  std::map<std::string, Setter> t;
  auto str = [](std::string Config::Data::* f) {
    return [f](Config& c, const std::string& k, const std::string& v) {
      c.data.*f = parse_string(k, v);
    };
  };
  t["data.manifest"] = str(&Config::Data::manifest);
  t["data.embeddings"] = str(&Config::Data::embeddings);

  t["train.encoder_widths"] = [](Config& c, const std::string& k, const std::string& v) {
    c.train.encoder_widths.clear();
    for (const std::string& item : parse_list(k, v)) {
      const long long w = parse_int(k, item);
      if (w < 1) bad(k, "layer widths must be positive");
      c.train.encoder_widths.push_back(std::size_t(w));
    }
    if (c.train.encoder_widths.empty()) bad(k, "needs at least one layer width");
  };
  auto size_field = [](std::size_t Config::Train::* f) {
    return [f](Config& c, const std::string& k, const std::string& v) {
      const long long x = parse_int(k, v);
      if (x < 0) bad(k, "must be non-negative");
      c.train.*f = std::size_t(x);
    };
  };
  t["train.attention_dim"] = size_field(&Config::Train::attention_dim);
  t["train.bag_batch"] = size_field(&Config::Train::bag_batch);
  t["train.finetune_train"] = size_field(&Config::Train::finetune_train);
  t["train.finetune_val"] = size_field(&Config::Train::finetune_val);
  t["train.dropout"] = [](Config& c, const std::string& k, const std::string& v) {
    c.train.dropout = parse_double(k, v);
  };
  t["train.lr"] = [](Config& c, const std::string& k, const std::string& v) {
    c.train.lr = parse_double(k, v);
  };
  t["train.max_epochs"] = [](Config& c, const std::string& k, const std::string& v) {
    c.train.max_epochs = int(parse_int(k, v));
  };
  t["train.patience"] = [](Config& c, const std::string& k, const std::string& v) {
    c.train.patience = int(parse_int(k, v));
  };

  t["mc.passes"] = [](Config& c, const std::string& k, const std::string& v) {
    const long long x = parse_int(k, v);
    if (x < 1) bad(k, "needs at least one pass");
    c.mc.passes = int(x);
  };

  t["thresholds.accuracy"] = [](Config& c, const std::string& k, const std::string& v) {
    c.thresholds.accuracy = parse_double(k, v);
  };
  t["thresholds.ppv"] = [](Config& c, const std::string& k, const std::string& v) {
    c.thresholds.ppv = parse_double(k, v);
  };

  auto synth_double = [](double Config::Synth::* f) {
    return [f](Config& c, const std::string& k, const std::string& v) {
      c.synth.*f = parse_double(k, v);
    };
  };
  auto synth_size = [](std::size_t Config::Synth::* f) {
    return [f](Config& c, const std::string& k, const std::string& v) {
      const long long x = parse_int(k, v);
      if (x < 0) bad(k, "must be non-negative");
      c.synth.*f = std::size_t(x);
    };
  };
  auto synth_str = [](std::string Config::Synth::* f) {
    return [f](Config& c, const std::string& k, const std::string& v) {
      c.synth.*f = parse_string(k, v);
    };
  };
  t["synth.dim"] = synth_size(&Config::Synth::dim);
  t["synth.counts"] = [](Config& c, const std::string& k, const std::string& v) {
    const std::vector<std::string> items = parse_list(k, v);
    if (items.size() != kNumClasses)
      bad(k, "expected " + std::to_string(kNumClasses) + " per-class counts");
    for (std::size_t i = 0; i < kNumClasses; ++i) {
      const long long x = parse_int(k, items[i]);
      if (x < 0) bad(k, "counts must be non-negative");
      c.synth.counts[i] = std::size_t(x);
    }
  };
  t["synth.n_min"] = synth_size(&Config::Synth::n_min);
  t["synth.n_max"] = synth_size(&Config::Synth::n_max);
  t["synth.frac_min"] = synth_double(&Config::Synth::frac_min);
  t["synth.frac_max"] = synth_double(&Config::Synth::frac_max);
  t["synth.delta"] = synth_double(&Config::Synth::delta);
  t["synth.sigma_e"] = synth_double(&Config::Synth::sigma_e);
  t["synth.train_frac"] = synth_double(&Config::Synth::train_frac);
  t["synth.val_frac"] = synth_double(&Config::Synth::val_frac);
  t["synth.test_frac"] = synth_double(&Config::Synth::test_frac);
  t["synth.lab_id"] = synth_str(&Config::Synth::lab_id);
  t["synth.id_prefix"] = synth_str(&Config::Synth::id_prefix);
  t["synth.lab_shift"] = synth_double(&Config::Synth::lab_shift);
  t["synth.reviews"] = [](Config& c, const std::string& k, const std::string& v) {
    c.synth.reviews = parse_bool(k, v);
  };
  t["synth.kernel_mel_low"] = synth_double(&Config::Synth::kernel_mel_low);
  t["synth.kernel_mel_int"] = synth_double(&Config::Synth::kernel_mel_int);
  t["synth.kernel_mel_high"] = synth_double(&Config::Synth::kernel_mel_high);
  t["synth.kernel_non_mel"] = synth_double(&Config::Synth::kernel_non_mel);

  t["qc.blur_threshold"] = [](Config& c, const std::string& k, const std::string& v) {
    c.qc.blur_threshold = parse_double(k, v);
  };
  t["qc.ink_cutoff"] = [](Config& c, const std::string& k, const std::string& v) {
    c.qc.ink_cutoff = parse_double(k, v);
  };
  t["qc.embed_dim"] = [](Config& c, const std::string& k, const std::string& v) {
    const long long x = parse_int(k, v);
    if (x < 1) bad(k, "embedding width must be positive");
    c.qc.embed_dim = std::size_t(x);
  };
  return t;
}

} // namespace

Config parse_config(const std::string& text) {
  static const std::map<std::string, Setter> table = key_table();
  Config cfg;
  std::istringstream lines(text);
  std::string line;
  std::string section;
  int lineno = 0;
  while (std::getline(lines, line)) {
    ++lineno;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') bad("line " + std::to_string(lineno), "unterminated section header");
      section = trim(line.substr(1, line.size() - 2));
      if (section != "data" && section != "train" && section != "mc" &&
          section != "thresholds" && section != "synth" && section != "qc")
        bad("line " + std::to_string(lineno), "unknown section [" + section + "]");
      continue;
    }
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      bad("line " + std::to_string(lineno), "expected key = value");
    if (section.empty())
      bad("line " + std::to_string(lineno), "key outside any [section]");
    const std::string key = section + "." + trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const auto it = table.find(key);
    if (it == table.end()) bad(key, "unknown key");
    it->second(cfg, key, value);
  }
  return cfg;
}

Config load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("config: cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(std::move(ss).str());
}

namespace {

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

} // namespace

std::string config_to_string(const Config& cfg) {
  std::ostringstream out;
  out << "[data]\n";
  out << "manifest = \"" << cfg.data.manifest << "\"\n";
  out << "embeddings = \"" << cfg.data.embeddings << "\"\n";

  out << "\n[train]\n";
  out << "encoder_widths = [";
  for (std::size_t i = 0; i < cfg.train.encoder_widths.size(); ++i)
    out << (i ? ", " : "") << cfg.train.encoder_widths[i];
  out << "]\n";
  out << "attention_dim = " << cfg.train.attention_dim << "\n";
  out << "dropout = " << fmt_double(cfg.train.dropout) << "\n";
  out << "lr = " << fmt_double(cfg.train.lr) << "\n";
  out << "max_epochs = " << cfg.train.max_epochs << "\n";
  out << "patience = " << cfg.train.patience << "\n";
  out << "bag_batch = " << cfg.train.bag_batch << "\n";
  out << "finetune_train = " << cfg.train.finetune_train << "\n";
  out << "finetune_val = " << cfg.train.finetune_val << "\n";

  out << "\n[mc]\n";
  out << "passes = " << cfg.mc.passes << "\n";

  out << "\n[thresholds]\n";
  out << "accuracy = " << fmt_double(cfg.thresholds.accuracy) << "\n";
  out << "ppv = " << fmt_double(cfg.thresholds.ppv) << "\n";

  out << "\n[synth]\n";
  out << "dim = " << cfg.synth.dim << "\n";
  out << "counts = [";
  for (std::size_t i = 0; i < kNumClasses; ++i) out << (i ? ", " : "") << cfg.synth.counts[i];
  out << "]\n";
  out << "n_min = " << cfg.synth.n_min << "\n";
  out << "n_max = " << cfg.synth.n_max << "\n";
  out << "frac_min = " << fmt_double(cfg.synth.frac_min) << "\n";
  out << "frac_max = " << fmt_double(cfg.synth.frac_max) << "\n";
  out << "delta = " << fmt_double(cfg.synth.delta) << "\n";
  out << "sigma_e = " << fmt_double(cfg.synth.sigma_e) << "\n";
  out << "train_frac = " << fmt_double(cfg.synth.train_frac) << "\n";
  out << "val_frac = " << fmt_double(cfg.synth.val_frac) << "\n";
  out << "test_frac = " << fmt_double(cfg.synth.test_frac) << "\n";
  out << "lab_id = \"" << cfg.synth.lab_id << "\"\n";
  out << "id_prefix = \"" << cfg.synth.id_prefix << "\"\n";
  out << "lab_shift = " << fmt_double(cfg.synth.lab_shift) << "\n";
  out << "reviews = " << (cfg.synth.reviews ? "true" : "false") << "\n";
  out << "kernel_mel_low = " << fmt_double(cfg.synth.kernel_mel_low) << "\n";
  out << "kernel_mel_int = " << fmt_double(cfg.synth.kernel_mel_int) << "\n";
  out << "kernel_mel_high = " << fmt_double(cfg.synth.kernel_mel_high) << "\n";
  out << "kernel_non_mel = " << fmt_double(cfg.synth.kernel_non_mel) << "\n";

  out << "\n[qc]\n";
  out << "blur_threshold = " << fmt_double(cfg.qc.blur_threshold) << "\n";
  out << "ink_cutoff = " << fmt_double(cfg.qc.ink_cutoff) << "\n";
  out << "embed_dim = " << cfg.qc.embed_dim << "\n";
  return std::move(out).str();
}

} // namespace pdls
