#include "veil/csv_io.h"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "veil/errors.h"
#include "veil/version.h"

namespace veil {

size_t CsvTable::column(const std::string& name) const {
  for (size_t i = 0; i < header.size(); ++i)
    if (header[i] == name) return i;
  throw EvaluationError("CSV has no column '" + name + "'");
}

std::vector<double> CsvTable::numbers(const std::string& name) const {
  const auto c = column(name);
  std::vector<double> out;
  out.reserve(rows.size());
  for (const auto& r : rows) {
    const auto& cell = r[c];
    if (cell == "inf") out.push_back(INFINITY);
    else if (cell == "nan" || cell.empty()) out.push_back(NAN);
    else out.push_back(std::stod(cell));
  }
  return out;
}

std::string CsvTable::str() const {
  std::ostringstream os;
  if (!comment.empty()) os << "# " << comment << "\n";
  auto line = [&](const std::vector<std::string>& cells) {
    for (size_t i = 0; i < cells.size(); ++i) os << (i ? "," : "") << cells[i];
    os << "\n";
  };
  line(header);
  for (const auto& r : rows) line(r);
  return os.str();
}

std::string csv_comment(uint64_t seed) {
  return "seed=" + std::to_string(seed) + " version=" + std::string(kVersionString);
}

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  std::ostringstream os;
  os << std::setprecision(10) << v;
  return os.str();
}

void write_text_atomic(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << text;
    if (!out) throw std::runtime_error("short write to " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

void write_csv(const std::filesystem::path& path, const CsvTable& table) { write_text_atomic(path, table.str()); }

CsvTable parse_csv(const std::string& text) {
  CsvTable t;
  std::istringstream in(text);
  std::string line;
  bool have_header = false;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      if (t.comment.empty()) t.comment = line.substr(line.rfind("# ", 0) == 0 ? 2 : 1);
      continue;
    }
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (line.back() == ',') cells.emplace_back();
    if (!have_header) {
      t.header = std::move(cells);
      have_header = true;
    } else {
      if (cells.size() != t.header.size()) {
        throw EvaluationError("CSV row has " + std::to_string(cells.size()) + " cells, header has " +
                              std::to_string(t.header.size()));
      }
      t.rows.push_back(std::move(cells));
    }
  }
  if (!have_header) throw EvaluationError("CSV has no header row");
  return t;
}

CsvTable read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw EvaluationError("cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_csv(ss.str());
}

CsvTable sweep_table(const std::vector<SweepRow>& rows, uint64_t seed) {
  CsvTable t;
  t.comment = csv_comment(seed);
  t.header = {"video",       "snr_db",         "capacity_ratio", "cover_psnr",     "cover_ssim",
              "cover_fvd_lite", "secret_psnr", "secret_ssim",    "secret_fvd_lite"};
  for (const auto& r : rows) {
    t.rows.push_back({std::to_string(r.video), format_number(r.snr_db), format_number(r.capacity_ratio),
                      format_number(r.cover_psnr), format_number(r.cover_ssim), format_number(r.cover_fvd_lite),
                      format_number(r.secret_psnr), format_number(r.secret_ssim),
                      format_number(r.secret_fvd_lite)});
  }
  return t;
}

}  // namespace veil
