#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pdls/hierarchy.hpp"
#include "pdls/mil.hpp"

namespace pdls {

inline constexpr std::uint32_t kModelFormatVersion = 1;

/// "PDLSMDL1" container: u32 format version, little-endian payload (three
/// bag models, optional thresholds, optional reference colors), trailing
/// 64-bit FNV-1a checksum of the payload. Loading a saved model reproduces
/// inference bit for bit.
void save_model(const PdlsModel& model, const std::string& path);
PdlsModel load_model(const std::string& path);

/// Manifest CSV (specimen_id,lab_id,class,diagnosis,split,n_tiles,
/// embedding_offset) plus a "PDLSEMB1" binary of f32 tile embeddings.
/// Tiles move through f32 storage, so a round-trip is exact to f32
/// precision. Mismatched or missing records raise a data error naming the
/// offending specimen.
void save_dataset(const std::vector<SpecimenBag>& bags, const std::string& manifest_path,
                  const std::string& embeddings_path);
std::vector<SpecimenBag> load_dataset(const std::string& manifest_path,
                                      const std::string& embeddings_path);

/// Replaces `path` by writing a sibling temp file and renaming it over the
/// target, so readers never observe a half-written file.
void atomic_write(const std::string& path, const std::string& bytes);

/// Tabular report. Comments become "# ..." lines above the header; the
/// timestamp line can be suppressed so reruns with one config + seed are
/// byte-identical.
struct CsvReport {
  std::vector<std::string> comments;
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  bool timestamp = true;
};

void write_csv(const std::string& path, const CsvReport& report);

std::string csv_escape(const std::string& field);
std::vector<std::string> csv_split(const std::string& line);

} // namespace pdls
