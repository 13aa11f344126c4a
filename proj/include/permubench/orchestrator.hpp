// Copyright (c) the permubench authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#pragma once

// Experiment matrix: train every (model, dataset, seed) run once, evaluate
// the requested regimes on the test split, persist one record per setting,
// and turn a record store (or injected cell means) into report files.
//
// Store layout under out_dir:
//   records.csv       MetricRecords, canonical order after every run_matrix
//   records.index     one "dataset,model,seed,regime" line per finished cell
//   checkpoints/<dataset>/<model>/seed<k>.params   trained weights
//   checkpoints/<dataset>/<model>/seed<k>.jsonl    per-epoch training log
//   cell_means.csv    written by inject() for aggregation-only use
//
// A cell's records count only once its index line exists, so an
// interrupted run resumes by redoing unfinished cells, and a finished
// checkpoint is reused instead of retraining.

#include <filesystem>
#include <iosfwd>
#include <mutex>
#include <set>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "permubench/aggregate.hpp"
#include "permubench/corruptions.hpp"
#include "permubench/trainer.hpp"

namespace permubench {

struct RunConfig {
  std::filesystem::path data_dir;
  std::filesystem::path out_dir = "permubench_out";
  std::vector<std::string> models;    // arch ids; default all four
  std::vector<std::string> datasets;  // catalog ids; default all seven
  std::vector<int> seeds = {3, 5, 7, 11, 13};
  std::vector<Regime> regimes = {Regime::kClean, Regime::kCorruption, Regime::kFgsm,
                                 Regime::kPgd};
  TrainConfig train;
  SeverityTable severity;
  std::vector<double> attack_epsilons = {1 / 255.0, 2 / 255.0, 4 / 255.0, 8 / 255.0};
  int jobs = 1;

  RunConfig();

  // Throws ConfigError for unknown models/datasets/regimes, empty lists,
  // duplicate entries, jobs < 1 or invalid training/severity/epsilon values.
  void validate() const;

  // Settings every run produces under this config.
  SettingGrid grid() const;
  std::size_t records_per_run() const;
};

// JSON document with optional keys data_dir, out_dir, models, datasets,
// seeds, regimes, jobs, attack_epsilons, train {per_class, batch_size,
// epochs, lr, beta1, beta2, adam_eps, optimizer, selection ("last_epoch" |
// "best_val"), binary_metric ("auc" | "accuracy@0.5"), log_val_metric} and
// severity {noise_sigma, blur_sigma, contrast, brightness, jpeg_quality,
// cutout_side} (three values each). Keys absent from the document keep the
// values of `base`; unknown keys are a ConfigError.
RunConfig config_from_json(std::string_view text, const RunConfig& base = RunConfig());
RunConfig load_config(const std::filesystem::path& path, const RunConfig& base = RunConfig());
std::string config_to_json(const RunConfig& cfg);

// data_dir if set, else $PERMUBENCH_DATA_DIR, else "data".
std::filesystem::path resolve_data_dir(const RunConfig& cfg);

class RecordStore {
 public:
  // Creates out_dir if needed and loads finished cells; records of
  // unfinished cells are dropped.
  explicit RecordStore(std::filesystem::path out_dir);

  using Cell = std::tuple<std::string, std::string, int, Regime>;

  bool finished(const Cell& cell) const;
  // Appends the records of one cell, then its index line; thread-safe.
  void commit(const Cell& cell, const std::vector<MetricRecord>& records);
  // Rewrites records.csv and records.index in canonical order.
  void canonicalize();

  std::vector<MetricRecord> records() const;
  const std::filesystem::path& dir() const { return dir_; }

 private:
  std::filesystem::path dir_;
  mutable std::mutex mu_;
  std::vector<MetricRecord> records_;
  std::set<Cell> finished_;
};

std::filesystem::path checkpoint_path(const std::filesystem::path& out_dir,
                                      const std::string& dataset, const std::string& model,
                                      int seed);

// Evaluates one trained model under one regime on `test`.
std::vector<MetricRecord> evaluate_regime(const RunConfig& cfg, const Dataset& ds,
                                          const std::string& dataset_id, const ModelSpec& spec,
                                          const ModelParams& params, int seed, Regime regime,
                                          const ImageBatch& test);

struct MatrixOutcome {
  int runs = 0;          // (model, dataset, seed) combinations in scope
  int trained = 0;       // runs that trained a model
  int reused = 0;        // runs that loaded a stored checkpoint
  int skipped = 0;       // runs whose every regime was already finished
  std::size_t new_records = 0;
  std::vector<std::string> failures;  // one message per failed run
};

// Failures of individual runs are collected, not thrown; configuration and
// data-loading problems throw.
MatrixOutcome run_matrix(const RunConfig& cfg, std::ostream* log = nullptr);

enum class ReportSource { kAuto, kRecords, kCellMeans };

struct ReportFiles {
  std::vector<std::filesystem::path> written;
};

// Reads records.csv (or cell_means.csv) from store_dir and writes
// clean_corruption.csv, attacks.csv, ranks.json, retention.json and
// severity_curves/<kind>.csv to report_dir. Tables cover the regimes present;
// everything is computed before the first file is written, so a
// CompletenessError leaves no partial output. `seeds` as in summarize().
// Severity curves need per-setting records and are skipped for cell means.
ReportFiles report(const std::filesystem::path& store_dir, const std::filesystem::path& report_dir,
                   ReportSource source = ReportSource::kAuto, const std::vector<int>& seeds = {},
                   const SettingGrid& grid = SettingGrid::standard());

// Validates a dataset,model,regime,mean,std CSV and stores it as
// out_dir/cell_means.csv in canonical order.
void inject(const std::filesystem::path& means_csv, const std::filesystem::path& out_dir);

// Table text exactly as report() writes it; exposed for tests.
std::string format_table(const SummaryTable& table, const std::vector<Regime>& regimes);

}  // namespace permubench
