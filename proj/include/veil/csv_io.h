#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace veil {

/// A CSV file with one leading metadata comment line.
struct CsvTable {
  std::string comment;  // without the leading "# "
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  /// Column index by name; throws EvaluationError if absent.
  size_t column(const std::string& name) const;
  std::vector<double> numbers(const std::string& name) const;
  std::string str() const;
};

/// "seed=<seed> version=<version>"
std::string csv_comment(uint64_t seed);

std::string format_number(double v);
void write_text_atomic(const std::filesystem::path& path, const std::string& text);
void write_csv(const std::filesystem::path& path, const CsvTable& table);
/// Comment lines ("# ...") are collected into `comment`; the first other line
/// is the header. Throws EvaluationError on ragged rows.
CsvTable read_csv(const std::filesystem::path& path);
CsvTable parse_csv(const std::string& text);

/// One row of the SNR x capacity-ratio sweep.
struct SweepRow {
  int64_t video = 0;
  double snr_db = 0;
  double capacity_ratio = 0;
  double cover_psnr = 0, cover_ssim = 0, cover_fvd_lite = 0;
  double secret_psnr = 0, secret_ssim = 0, secret_fvd_lite = 0;
};

CsvTable sweep_table(const std::vector<SweepRow>& rows, uint64_t seed);

}  // namespace veil
