#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <string>
#include <vector>

#include "xmal/models/checkpoint.hpp"
#include "xmal/train/joint.hpp"
#include "xmal/util/threadpool.hpp"

namespace xmal {

struct MatrixCellResult {
  std::string scenario_id;
  uint64_t seed = 0;
  bool ok = false;
  std::string error;
  EpochLosses best;
  EpochLosses at_init;
  std::string run_dir;
};

struct MatrixReport {
  std::vector<MatrixCellResult> cells;
};

// Persists one finished run under runs/<scenario>/<seed>/: canonical config,
// history.csv, best.ckpt, final.ckpt.
inline std::string persist_run(const std::string& out_root, const TrainScenario& scenario,
                               const ConfigText& full_cfg, const JointTrainResult& result) {
  namespace fs = std::filesystem;
  const std::string dir =
      out_root + "/runs/" + scenario.id + "/" + std::to_string(scenario.seed);
  fs::create_directories(dir);
  ConfigText cfg = full_cfg;
  scenario.to_config(cfg);
  cfg.set("checkpoint", "best_epoch", std::to_string(result.best.epoch));
  {
    std::ofstream out(dir + "/config");
    out << cfg.emit();
  }
  write_history_csv(result.history, dir + "/history.csv");
  save_checkpoint(dir + "/best.ckpt", cfg.emit(), result.best_params);
  save_checkpoint(dir + "/final.ckpt", cfg.emit(), result.bundle.all_params());
  return dir;
}

// Runs every (scenario, seed) cell; cells are independent and may execute on
// several threads. A failing cell is marked in the report and does not abort
// the rest.
inline MatrixReport run_matrix(const std::vector<std::string>& scenario_ids,
                               const std::vector<uint64_t>& seeds, const PairedCorpus& corpus,
                               const ModelConfigs& model_cfg,
                               const std::vector<Param>& teacher_params,
                               const std::vector<Param>& asr_params, const std::string& out_root,
                               const ConfigText& full_cfg, int n_threads,
                               const TrainScenario* scenario_overrides = nullptr) {
  struct Cell {
    std::string id;
    uint64_t seed;
  };
  std::vector<Cell> cells;
  for (const auto& id : scenario_ids) {
    for (uint64_t s : seeds) {
      for (const auto& c : cells)
        check(!(c.id == id && c.seed == s), cat("matrix: duplicate cell ", id, "/", s));
      cells.push_back({id, s});
    }
  }

  MatrixReport report;
  report.cells.resize(cells.size());
  parallel_for(static_cast<int64_t>(cells.size()), n_threads, [&](int64_t i) {
    const Cell& cell = cells[static_cast<size_t>(i)];
    MatrixCellResult& out = report.cells[static_cast<size_t>(i)];
    out.scenario_id = cell.id;
    out.seed = cell.seed;
    try {
      TrainScenario scenario = scenario_from_id(cell.id, cell.seed);
      if (scenario_overrides) {
        scenario.epochs = scenario.id == "G" || scenario.id == "H" ? 0 : scenario_overrides->epochs;
        scenario.batch_size = scenario_overrides->batch_size;
        scenario.schedule = scenario_overrides->schedule;
        scenario.augment = scenario_overrides->augment;
        scenario.time_mask_max = scenario_overrides->time_mask_max;
        scenario.channel_mask_max = scenario_overrides->channel_mask_max;
      }
      JointTrainResult result =
          train_joint(scenario, corpus, model_cfg, teacher_params, &asr_params);
      out.best = result.best;
      out.at_init = result.at_init;
      out.run_dir = persist_run(out_root, scenario, full_cfg, result);
      out.ok = true;
    } catch (const std::exception& e) {
      out.ok = false;
      out.error = e.what();
    }
  });
  return report;
}

inline void write_matrix_report(const MatrixReport& report, const std::string& path) {
  CsvWriter out(path, {"scenario", "seed", "status", "error", "best_epoch", "valid_ce", "valid_l2",
                       "valid_total", "init_valid_total", "run_dir"});
  for (const auto& c : report.cells) {
    std::string err = c.error;
    for (char& ch : err)
      if (ch == ',' || ch == '\n') ch = ';';
    out.write_row({c.scenario_id, std::to_string(c.seed), c.ok ? "ok" : "failed", err,
                   std::to_string(c.best.epoch), format_double(c.best.ce), format_double(c.best.l2),
                   format_double(c.best.total), format_double(c.at_init.total), c.run_dir});
  }
}

}  // namespace xmal
