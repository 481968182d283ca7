#include "pdls/persistence.hpp"

#include <bit>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "pdls/errors.hpp"
#include "pdls/rng.hpp"

namespace pdls {

namespace {

constexpr std::string_view kModelMagic = "PDLSMDL1";
constexpr std::string_view kEmbMagic = "PDLSEMB1";

// --- little-endian primitives ----------------------------------------------

void put_u16(std::string& out, std::uint16_t v) {
  out.push_back(char(v & 0xff));
  out.push_back(char((v >> 8) & 0xff));
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(char((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(char((v >> (8 * i)) & 0xff));
}

void put_f64(std::string& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }

void put_f32(std::string& out, float v) { put_u32(out, std::bit_cast<std::uint32_t>(v)); }

void put_str16(std::string& out, const std::string& s) {
  if (s.size() > 0xffff) throw InvalidInputError("string too long to serialize: " + s.substr(0, 32));
  put_u16(out, std::uint16_t(s.size()));
  out.append(s);
}

void put_str32(std::string& out, const std::string& s) {
  put_u32(out, std::uint32_t(s.size()));
  out.append(s);
}

/// Bounds-checked cursor over a byte buffer. `what` labels the error type:
/// model files raise corrupt-model errors, dataset files raise data errors.
struct Reader {
  const std::string& buf;
  std::size_t pos = 0;
  bool model = true;

  [[noreturn]] void fail(const std::string& msg) const {
    if (model) throw CorruptModelError(msg);
    throw DataError(msg);
  }

  void need(std::size_t n) const {
    if (pos + n > buf.size()) fail("truncated file: needed " + std::to_string(n) +
                                   " bytes at offset " + std::to_string(pos));
  }

  std::uint16_t u16() {
    need(2);
    std::uint16_t v = std::uint16_t(std::uint8_t(buf[pos])) |
                      std::uint16_t(std::uint8_t(buf[pos + 1])) << 8;
    pos += 2;
    return v;
  }

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t(std::uint8_t(buf[pos + i])) << (8 * i);
    pos += 4;
    return v;
  }

  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t(std::uint8_t(buf[pos + i])) << (8 * i);
    pos += 8;
    return v;
  }

  double f64() { return std::bit_cast<double>(u64()); }
  float f32() { return std::bit_cast<float>(u32()); }

  std::string str16() {
    const std::uint16_t n = u16();
    need(n);
    std::string s = buf.substr(pos, n);
    pos += n;
    return s;
  }

  std::string str32() {
    const std::uint32_t n = u32();
    need(n);
    std::string s = buf.substr(pos, n);
    pos += n;
    return s;
  }
};

// --- model payload -----------------------------------------------------------

void put_matrix(std::string& out, const Matrix& m) {
  put_u32(out, std::uint32_t(m.rows()));
  put_u32(out, std::uint32_t(m.cols()));
  for (std::size_t i = 0; i < m.rows() * m.cols(); ++i) put_f64(out, m.data()[i]);
}

Matrix read_matrix(Reader& r) {
  const std::uint32_t rows = r.u32();
  const std::uint32_t cols = r.u32();
  if (rows == 0 || cols == 0 || std::uint64_t(rows) * cols > (1u << 28))
    r.fail("implausible matrix shape " + std::to_string(rows) + "x" + std::to_string(cols));
  Matrix m(rows, cols);
  for (std::size_t i = 0; i < m.rows() * m.cols(); ++i) m.data()[i] = r.f64();
  return m;
}

void put_vec(std::string& out, const std::vector<double>& v) {
  put_u32(out, std::uint32_t(v.size()));
  for (double x : v) put_f64(out, x);
}

std::vector<double> read_vec(Reader& r) {
  const std::uint32_t n = r.u32();
  if (n > (1u << 26)) r.fail("implausible vector length " + std::to_string(n));
  std::vector<double> v(n);
  for (double& x : v) x = r.f64();
  return v;
}

void put_bag_model(std::string& out, const BagModel& m) {
  put_u32(out, std::uint32_t(m.encoder.layers.size()));
  for (const DenseLayer& layer : m.encoder.layers) {
    put_matrix(out, layer.weight);
    put_vec(out, layer.bias);
    out.push_back(layer.activation == Activation::Relu ? 1 : 0);
  }
  put_matrix(out, m.attention.v);
  put_matrix(out, m.attention.u);
  put_vec(out, m.attention.w);
  put_f64(out, m.dropout_rate);
  put_u32(out, std::uint32_t(m.heads.size()));
  for (const TaskHead& h : m.heads) {
    put_str16(out, h.name);
    put_u32(out, std::uint32_t(h.class_names.size()));
    for (const std::string& c : h.class_names) put_str16(out, c);
    put_matrix(out, h.weight);
    put_vec(out, h.bias);
  }
}

BagModel read_bag_model(Reader& r) {
  BagModel m;
  const std::uint32_t n_layers = r.u32();
  if (n_layers == 0 || n_layers > 64) r.fail("implausible layer count");
  for (std::uint32_t i = 0; i < n_layers; ++i) {
    DenseLayer layer;
    layer.weight = read_matrix(r);
    layer.bias = read_vec(r);
    r.need(1);
    layer.activation = r.buf[r.pos++] ? Activation::Relu : Activation::None;
    m.encoder.layers.push_back(std::move(layer));
  }
  m.attention.v = read_matrix(r);
  m.attention.u = read_matrix(r);
  m.attention.w = read_vec(r);
  m.dropout_rate = r.f64();
  const std::uint32_t n_heads = r.u32();
  if (n_heads == 0 || n_heads > 64) r.fail("implausible head count");
  for (std::uint32_t i = 0; i < n_heads; ++i) {
    TaskHead h;
    h.name = r.str16();
    const std::uint32_t n_classes = r.u32();
    if (n_classes == 0 || n_classes > 256) r.fail("implausible class count");
    for (std::uint32_t c = 0; c < n_classes; ++c) h.class_names.push_back(r.str16());
    h.weight = read_matrix(r);
    h.bias = read_vec(r);
    m.heads.push_back(std::move(h));
  }
  return m;
}

void put_class_map(std::string& out, const std::map<SpecimenClass, double>& m) {
  put_u32(out, std::uint32_t(m.size()));
  for (const auto& [cls, v] : m) {
    put_str16(out, std::string(class_id(cls)));
    put_f64(out, v);
  }
}

std::map<SpecimenClass, double> read_class_map(Reader& r) {
  std::map<SpecimenClass, double> m;
  const std::uint32_t n = r.u32();
  if (n > 64) r.fail("implausible threshold count");
  for (std::uint32_t i = 0; i < n; ++i) {
    std::string id = r.str16();
    SpecimenClass cls;
    try {
      cls = class_from_id(id);
    } catch (const Error&) {
      r.fail("unknown class id in thresholds: " + id);
    }
    m[cls] = r.f64();
  }
  return m;
}

// --- CSV --------------------------------------------------------------------

std::string timestamp_line() {
  std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[64];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return std::string("# generated ") + buf;
}

std::string read_file(const std::string& path, bool model) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    if (model) throw CorruptModelError("cannot open " + path);
    throw DataError("cannot open " + path);
  }
  std::ostringstream ss;
  ss << in.rdbuf();
  return std::move(ss).str();
}

} // namespace

void atomic_write(const std::string& path, const std::string& bytes) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open " + tmp + " for writing");
    out.write(bytes.data(), std::streamsize(bytes.size()));
    out.flush();
    if (!out) throw DataError("short write to " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) {
    std::remove(tmp.c_str());
    throw DataError("cannot rename " + tmp + " over " + path);
  }
}

void save_model(const PdlsModel& model, const std::string& path) {
  model.validate();
  std::string payload;
  put_bag_model(payload, model.upstream);
  put_bag_model(payload, model.suspect_sub);
  put_bag_model(payload, model.rest_sub);

  payload.push_back(model.thresholds ? 1 : 0);
  if (model.thresholds) {
    const ThresholdSet& t = *model.thresholds;
    put_class_map(payload, t.accuracy);
    put_f64(payload, t.ppv_mel_high);
    put_class_map(payload, t.target_accuracy);
    put_f64(payload, t.target_ppv);
    put_u32(payload, std::uint32_t(t.warnings.size()));
    for (const std::string& w : t.warnings) put_str32(payload, w);
  }
  payload.push_back(model.reference_colors ? 1 : 0);
  if (model.reference_colors) {
    for (double v : model.reference_colors->mean) put_f64(payload, v);
    for (double v : model.reference_colors->stddev) put_f64(payload, v);
  }

  std::string file;
  file.reserve(payload.size() + 24);
  file.append(kModelMagic);
  put_u32(file, kModelFormatVersion);
  file.append(payload);
  put_u64(file, fnv1a64(payload));
  atomic_write(path, file);
}

PdlsModel load_model(const std::string& path) {
  const std::string file = read_file(path, /*model=*/true);
  if (file.size() < kModelMagic.size() + 4 + 8)
    throw CorruptModelError(path + ": file too short to hold a model");
  if (file.compare(0, kModelMagic.size(), kModelMagic) != 0)
    throw CorruptModelError(path + ": bad magic");

  Reader header{file, kModelMagic.size(), /*model=*/true};
  const std::uint32_t version = header.u32();
  if (version != kModelFormatVersion)
    throw CorruptModelError(path + ": unsupported format version " + std::to_string(version));

  const std::size_t payload_begin = header.pos;
  const std::size_t payload_end = file.size() - 8;
  const std::string payload = file.substr(payload_begin, payload_end - payload_begin);
  Reader tail{file, payload_end, /*model=*/true};
  if (tail.u64() != fnv1a64(payload))
    throw CorruptModelError(path + ": checksum mismatch");

  Reader r{payload, 0, /*model=*/true};
  PdlsModel model;
  model.upstream = read_bag_model(r);
  model.suspect_sub = read_bag_model(r);
  model.rest_sub = read_bag_model(r);

  r.need(1);
  if (payload[r.pos++]) {
    ThresholdSet t;
    t.accuracy = read_class_map(r);
    t.ppv_mel_high = r.f64();
    t.target_accuracy = read_class_map(r);
    t.target_ppv = r.f64();
    const std::uint32_t n_warn = r.u32();
    if (n_warn > 4096) r.fail("implausible warning count");
    for (std::uint32_t i = 0; i < n_warn; ++i) t.warnings.push_back(r.str32());
    model.thresholds = std::move(t);
  }
  r.need(1);
  if (payload[r.pos++]) {
    RefColorStats c;
    for (double& v : c.mean) v = r.f64();
    for (double& v : c.stddev) v = r.f64();
    model.reference_colors = c;
  }
  if (r.pos != payload.size())
    throw CorruptModelError(path + ": trailing bytes after model payload");
  model.validate();
  return model;
}

std::string csv_escape(const std::string& field) {
  if (field.find_first_of(",\"\n") == std::string::npos) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

std::vector<std::string> csv_split(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  fields.push_back(std::move(cur));
  return fields;
}

void write_csv(const std::string& path, const CsvReport& report) {
  std::string out;
  if (report.timestamp) {
    out += timestamp_line();
    out += '\n';
  }
  for (const std::string& c : report.comments) {
    out += "# ";
    out += c;
    out += '\n';
  }
  for (std::size_t i = 0; i < report.header.size(); ++i) {
    if (i) out += ',';
    out += csv_escape(report.header[i]);
  }
  out += '\n';
  for (const std::vector<std::string>& row : report.rows) {
    if (row.size() != report.header.size())
      throw InvalidInputError("CSV row width does not match header");
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) out += ',';
      out += csv_escape(row[i]);
    }
    out += '\n';
  }
  atomic_write(path, out);
}

void save_dataset(const std::vector<SpecimenBag>& bags, const std::string& manifest_path,
                  const std::string& embeddings_path) {
  std::set<std::string> seen;
  for (const SpecimenBag& b : bags) {
    if (b.n_tiles() == 0) throw InvalidInputError("specimen " + b.specimen_id + " has no tiles");
    if (!seen.insert(b.specimen_id).second)
      throw InvalidInputError("duplicate specimen_id " + b.specimen_id);
  }

  std::string emb;
  emb.append(kEmbMagic);
  put_u32(emb, std::uint32_t(bags.size()));

  CsvReport manifest;
  manifest.timestamp = false;
  manifest.header = {"specimen_id", "lab_id",  "class",
                     "diagnosis",   "split",   "n_tiles",
                     "embedding_offset"};
  for (const SpecimenBag& b : bags) {
    const std::size_t offset = emb.size();
    put_str16(emb, b.specimen_id);
    put_u32(emb, std::uint32_t(b.n_tiles()));
    put_u32(emb, std::uint32_t(b.dim()));
    for (std::size_t i = 0; i < b.n_tiles() * b.dim(); ++i)
      put_f32(emb, float(b.tiles.data()[i]));
    manifest.rows.push_back({b.specimen_id, b.lab_id, std::string(class_id(b.label)),
                             b.diagnosis, std::string(split_id(b.split)),
                             std::to_string(b.n_tiles()), std::to_string(offset)});
  }
  write_csv(manifest_path, manifest);
  atomic_write(embeddings_path, emb);
}

std::vector<SpecimenBag> load_dataset(const std::string& manifest_path,
                                      const std::string& embeddings_path) {
  const std::string emb = read_file(embeddings_path, /*model=*/false);
  if (emb.size() < kEmbMagic.size() + 4 || emb.compare(0, kEmbMagic.size(), kEmbMagic) != 0)
    throw DataError(embeddings_path + ": bad embeddings magic");

  struct Record {
    std::size_t offset;
    Matrix tiles;
  };
  Reader r{emb, kEmbMagic.size(), /*model=*/false};
  const std::uint32_t count = r.u32();
  std::map<std::string, Record> records;
  std::size_t shared_dim = 0;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::size_t offset = r.pos;
    std::string id = r.str16();
    const std::uint32_t n_tiles = r.u32();
    const std::uint32_t dim = r.u32();
    if (n_tiles == 0 || dim == 0)
      throw DataError(embeddings_path + ": empty record for specimen " + id);
    if (shared_dim == 0) shared_dim = dim;
    if (dim != shared_dim)
      throw DataError("embedding dim mismatch for specimen " + id + ": expected " +
                      std::to_string(shared_dim) + ", found " + std::to_string(dim));
    Matrix tiles(n_tiles, dim);
    for (std::size_t k = 0; k < tiles.rows() * tiles.cols(); ++k)
      tiles.data()[k] = double(r.f32());
    records.emplace(std::move(id), Record{offset, std::move(tiles)});
  }
  if (r.pos != emb.size())
    throw DataError(embeddings_path + ": trailing bytes after embedding records");

  const std::string text = read_file(manifest_path, /*model=*/false);
  std::istringstream lines(text);
  std::string line;
  bool saw_header = false;
  std::vector<SpecimenBag> bags;
  std::set<std::string> seen;
  while (std::getline(lines, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (!saw_header) {
      saw_header = true;
      continue;
    }
    const std::vector<std::string> f = csv_split(line);
    if (f.size() != 7)
      throw DataError(manifest_path + ": expected 7 manifest columns, found " +
                      std::to_string(f.size()));
    SpecimenBag bag;
    bag.specimen_id = f[0];
    bag.lab_id = f[1];
    bag.label = class_from_id(f[2]);
    bag.diagnosis = f[3];
    bag.split = split_from_id(f[4]);
    if (!seen.insert(bag.specimen_id).second)
      throw DataError("duplicate manifest specimen_id " + bag.specimen_id);

    const auto it = records.find(bag.specimen_id);
    if (it == records.end())
      throw DataError("manifest specimen " + bag.specimen_id + " has no embedding record");
    const std::size_t n_tiles = std::stoull(f[5]);
    const std::size_t offset = std::stoull(f[6]);
    if (it->second.tiles.rows() != n_tiles)
      throw DataError("tile count mismatch for specimen " + bag.specimen_id + ": manifest " +
                      f[5] + ", embeddings " + std::to_string(it->second.tiles.rows()));
    if (it->second.offset != offset)
      throw DataError("embedding offset mismatch for specimen " + bag.specimen_id);
    bag.tiles = std::move(it->second.tiles);
    records.erase(it);
    bags.push_back(std::move(bag));
  }
  if (!saw_header) throw DataError(manifest_path + ": missing manifest header");
  if (!records.empty())
    throw DataError("embedding record for specimen " + records.begin()->first +
                    " has no manifest row");
  return bags;
}

} // namespace pdls
