#pragma once

// Tables as CSV files, flat key=value summaries, and plain-text rendering.

#include "rmpc/types.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

namespace rmpc {

struct Table {
  std::string name;  // file stem
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  void add(std::vector<std::string> row) {
    require(row.size() == header.size(), "Table::add: row width differs from header");
    rows.push_back(std::move(row));
  }
};

inline std::string cell(double v) { return fmt_double(v); }
inline std::string cell(int v) { return std::to_string(v); }
inline std::string cell(long long v) { return std::to_string(v); }
inline std::string cell(bool v) { return v ? "1" : "0"; }
inline std::string cell(const std::string& v) { return v; }
inline std::string cell(const char* v) { return v; }

inline std::string csv_text(const Table& t) {
  auto join = [](const std::vector<std::string>& xs) {
    std::string s;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      require(xs[i].find_first_of(",\n\"") == std::string::npos, "csv: cell contains a separator");
      s += (i ? "," : "") + xs[i];
    }
    return s + "\n";
  };
  std::string out = join(t.header);
  for (const auto& r : t.rows) out += join(r);
  return out;
}

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

inline void write_csv(const std::filesystem::path& dir, const Table& t) {
  write_text_file(dir / (t.name + ".csv"), csv_text(t));
}

class CsvError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline Table read_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CsvError("cannot open " + path.string());
  Table t;
  t.name = path.stem().string();
  std::string line;
  int line_no = 0;
  auto split = [](const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(item);
    if (!s.empty() && s.back() == ',') out.emplace_back();
    return out;
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (line_no == 1) {
      t.header = split(line);
      if (t.header.empty()) throw CsvError(path.filename().string() + ": empty header");
      continue;
    }
    auto row = split(line);
    if (row.size() != t.header.size())
      throw CsvError(path.filename().string() + ": line " + std::to_string(line_no) + " has " +
                     std::to_string(row.size()) + " fields, header has " + std::to_string(t.header.size()));
    t.rows.push_back(std::move(row));
  }
  if (line_no == 0) throw CsvError(path.filename().string() + ": empty file");
  return t;
}

// Fixed-width text rendering.
inline std::string render_table(const Table& t) {
  std::vector<std::size_t> w(t.header.size());
  for (std::size_t j = 0; j < w.size(); ++j) {
    w[j] = t.header[j].size();
    for (const auto& r : t.rows) w[j] = std::max(w[j], r[j].size());
  }
  auto line = [&](const std::vector<std::string>& xs) {
    std::string s;
    for (std::size_t j = 0; j < xs.size(); ++j) {
      s += (j ? "  " : "") + xs[j] + std::string(w[j] - xs[j].size(), ' ');
    }
    while (!s.empty() && s.back() == ' ') s.pop_back();
    return s + "\n";
  };
  std::string out = line(t.header);
  std::size_t total = 0;
  for (std::size_t j = 0; j < w.size(); ++j) total += w[j] + (j ? 2 : 0);
  out += std::string(total, '-') + "\n";
  for (const auto& r : t.rows) out += line(r);
  return out;
}

using KeyValues = std::map<std::string, std::string>;

inline std::string kv_text(const KeyValues& kv) {
  std::string s;
  for (const auto& [k, v] : kv) s += k + "=" + v + "\n";
  return s;
}

inline KeyValues read_kv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  KeyValues kv;
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    if (eq != std::string::npos) kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return kv;
}

}  // namespace rmpc
