#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "xmal/util/csv.hpp"
#include "xmal/util/error.hpp"

namespace xmal {

// One loss record; split is "train" (per step) or "valid" (per epoch).
struct HistoryRow {
  int64_t step = 0;
  int64_t epoch = 0;
  double lr = 0.0;
  double ce = 0.0;
  double l2 = 0.0;
  double total = 0.0;
  std::string split = "train";
};

using History = std::vector<HistoryRow>;

inline void write_history_csv(const History& history, const std::string& path) {
  CsvWriter out(path, {"step", "lr", "ce", "l2", "total", "split"});
  char buf[64];
  auto fmt = [&](double v) {
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return std::string(buf);
  };
  for (const auto& r : history)
    out.write_row({std::to_string(r.step), fmt(r.lr), fmt(r.ce), fmt(r.l2), fmt(r.total), r.split});
}

inline History read_history_csv(const std::string& path) {
  auto rows = read_csv(path);
  check(!rows.empty(), cat("history: empty file ", path));
  History out;
  for (size_t i = 1; i < rows.size(); ++i) {
    const auto& r = rows[i];
    check(r.size() == 6, cat("history: malformed row in ", path));
    out.push_back(
        {std::stoll(r[0]), 0, std::stod(r[1]), std::stod(r[2]), std::stod(r[3]), std::stod(r[4]), r[5]});
  }
  return out;
}

}  // namespace xmal
