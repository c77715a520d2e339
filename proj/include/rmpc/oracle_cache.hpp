#pragma once

// On-disk cache of oracle solutions. One text record per solved instance,
// appended to a single file; the index (key -> record) is rebuilt in memory
// when the file is opened. Keys are a 128-bit hash of a canonical string
// covering model parameters, utility weights, solver options and the
// instance, with every double written in hex so keys are exact.

#include "rmpc/oracle.hpp"

#include <filesystem>
#include <fstream>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_map>

namespace rmpc {

inline std::string model_key(const SystemModel& model) {
  std::string s = model.kind();
  for (const auto& [k, v] : model.parameters()) s += " " + k + "=" + hex_double(v);
  if (const auto* lin = dynamic_cast<const LinearModel*>(&model))
    s += " A=" + hex_join(lin->a().reshaped()) + " B=" + hex_join(lin->b().reshaped());
  return s;
}

inline std::string shooting_key(const ShootingOptions& o) {
  return "shooting restarts=" + std::to_string(o.restarts) + " iters=" + std::to_string(o.iterations) +
         " step=" + hex_double(o.step) + " polish=" + std::to_string(o.polish ? o.polish_iterations : 0) +
         " agree=" + hex_double(o.agree_tol) + " seed=" + std::to_string(o.seed);
}

inline std::string instance_key(const Vec& x0, const RefTraj& r, int horizon) {
  return "x0=" + hex_join(x0) + " r=" + hex_join(r.leftCols(horizon).reshaped()) + " N=" + std::to_string(horizon);
}

inline std::string hash128(const std::string& canonical) {
  char buf[33];
  std::snprintf(buf, sizeof buf, "%016llx%016llx", static_cast<unsigned long long>(fnv1a64(canonical)),
                static_cast<unsigned long long>(fnv1a64(canonical, 0x84222325cbf29ce4ULL)));
  return buf;
}

struct CachedRecord {
  OracleStatus status = OracleStatus::optimal;
  Mat controls;
};

class OracleCache {
 public:
  static constexpr const char* kHeader = "RMPC-ORACLE-CACHE 1";
  static constexpr const char* kFileName = "oracle-cache.txt";

  // dir is created if missing. An empty dir gives a memory-only cache.
  explicit OracleCache(const std::filesystem::path& dir = {}) {
    if (dir.empty()) return;
    std::filesystem::create_directories(dir);
    path_ = dir / kFileName;
    load();
  }

  std::optional<CachedRecord> find(const std::string& key) const {
    std::lock_guard lock(mu_);
    auto it = records_.find(key);
    if (it == records_.end()) return std::nullopt;
    return it->second;
  }

  void insert(const std::string& key, const CachedRecord& rec) {
    std::lock_guard lock(mu_);
    if (!records_.emplace(key, rec).second) return;
    if (path_.empty()) return;
    std::ofstream out(path_, std::ios::app | std::ios::binary);
    if (!out) throw std::runtime_error("oracle cache: cannot append to " + path_.string());
    out << key << ' ' << to_string(rec.status) << ' ' << rec.controls.rows() << ' ' << rec.controls.cols();
    for (Eigen::Index i = 0; i < rec.controls.size(); ++i) out << ' ' << hex_double(rec.controls.data()[i]);
    out << '\n';
  }

  std::size_t size() const {
    std::lock_guard lock(mu_);
    return records_.size();
  }
  // Malformed lines skipped while loading (e.g. a record cut off by a crash).
  int skipped() const { return skipped_; }
  const std::filesystem::path& path() const { return path_; }

 private:
  void load() {
    if (!std::filesystem::exists(path_)) {
      std::ofstream out(path_, std::ios::binary);
      out << kHeader << '\n';
      return;
    }
    std::ifstream in(path_, std::ios::binary);
    std::string line;
    if (!std::getline(in, line) || line != kHeader)
      throw ConfigError("oracle cache: " + path_.string() + " has no '" + kHeader + "' header");
    while (std::getline(in, line)) {
      std::istringstream ls(line);
      std::string key, status;
      Eigen::Index rows = 0, cols = 0;
      if (!(ls >> key >> status >> rows >> cols) || key.size() != 32 || rows < 1 || cols < 1) {
        ++skipped_;
        continue;
      }
      CachedRecord rec;
      try {
        rec.status = parse_oracle_status(status);
      } catch (const ConfigError&) {
        ++skipped_;
        continue;
      }
      rec.controls.resize(rows, cols);
      bool ok = true;
      for (Eigen::Index i = 0; i < rows * cols && ok; ++i) {
        std::string tok;
        ok = static_cast<bool>(ls >> tok);
        if (ok) {
          char* end = nullptr;
          rec.controls.data()[i] = std::strtod(tok.c_str(), &end);
          ok = end && *end == '\0';
        }
      }
      std::string extra;
      if (!ok || (ls >> extra)) {
        ++skipped_;
        continue;
      }
      records_.emplace(key, std::move(rec));
    }
  }

  std::filesystem::path path_;
  mutable std::mutex mu_;
  std::unordered_map<std::string, CachedRecord> records_;
  int skipped_ = 0;
};

// Wraps an oracle so solved instances are looked up before solving. The
// solver tag must identify the solver and all its options.
inline OracleFn with_cache(OracleCache& cache, const std::string& solver_tag, ModelPtr model,
                           UtilityPtr utility, OracleFn oracle) {
  const std::string prefix = solver_tag + " | " + model_key(*model) + " | " + utility->describe() + " | ";
  return [&cache, prefix, model, utility, oracle = std::move(oracle)](const Vec& x0, const RefTraj& r,
                                                                      int horizon) {
    const std::string key = hash128(prefix + instance_key(x0, r, horizon));
    if (auto hit = cache.find(key)) {
      return make_solution(*model, *utility, x0, r, hit->controls, hit->status);
    }
    OracleSolution sol = oracle(x0, r, horizon);
    cache.insert(key, {sol.status, sol.controls});
    return sol;
  };
}

}  // namespace rmpc
