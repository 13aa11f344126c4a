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

// Summaries over per-run metric records: per-seed regime means, mean and
// sample std across seeds, mean ranks across datasets and retention
// relative to clean performance. Missing records are always an error,
// never imputed.

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

namespace permubench {

enum class Regime { kClean, kCorruption, kFgsm, kPgd };

inline constexpr Regime kAllRegimes[] = {Regime::kClean, Regime::kCorruption, Regime::kFgsm,
                                         Regime::kPgd};

std::string_view regime_id(Regime regime);  // "clean", "corruption", "fgsm", "pgd"
Regime parse_regime(std::string_view text);  // throws ConfigError

struct MetricRecord {
  std::string dataset;  // catalog id, e.g. "breastmnist"
  std::string model;    // arch id, e.g. "zachvit"
  int seed = 0;
  Regime regime = Regime::kClean;
  std::string setting;  // empty for clean, "gaussian_noise:2", "fgsm:4/255"
  std::string metric;   // metric_id() of the evaluation
  double value = 0;

  bool operator==(const MetricRecord&) const = default;
};

// Settings each regime must cover. standard() is 15 corruption settings
// and the four epsilons per attack.
struct SettingGrid {
  std::vector<std::string> corruption, fgsm, pgd;

  static SettingGrid standard();
  const std::vector<std::string>& settings(Regime regime) const;  // clean -> {""}
};

inline constexpr std::string_view kRecordHeader =
    "dataset,model,seed,regime,setting,metric,value";

// One CSV line without trailing newline; values print with 17 significant
// digits so parsing restores them exactly.
std::string record_to_csv(const MetricRecord& record);
// Parses a whole CSV document (header required). Throws FormatError with
// the line number on malformed rows.
std::vector<MetricRecord> parse_records(std::string_view csv);
std::vector<MetricRecord> read_records(const std::filesystem::path& path);
void write_records(const std::filesystem::path& path, const std::vector<MetricRecord>& records);

// Sort key: catalog order of datasets, fixed model order, seed, regime,
// then grid order of settings (unknown names sort after known ones).
void sort_records(std::vector<MetricRecord>& records);

// Keyed view over records. Throws DataError when the same (dataset,
// model, seed, regime, setting) appears twice with different values.
class RecordIndex {
 public:
  explicit RecordIndex(const std::vector<MetricRecord>& records);

  const MetricRecord* find(const std::string& dataset, const std::string& model, int seed,
                           Regime regime, const std::string& setting) const;

  std::vector<std::string> datasets() const;  // canonical order
  std::vector<std::string> models() const;    // canonical order
  std::vector<int> seeds() const;             // ascending
  std::vector<Regime> regimes() const;        // kAllRegimes order

 private:
  using Key = std::tuple<std::string, std::string, int, Regime, std::string>;
  std::map<Key, MetricRecord> records_;
};

// Clean -> the single value; other regimes -> unweighted mean over the
// grid's settings. Throws CompletenessError listing every missing setting.
double regime_mean_per_seed(const RecordIndex& index, const std::string& dataset,
                            const std::string& model, int seed, Regime regime,
                            const SettingGrid& grid = SettingGrid::standard());

struct CellSummary {
  double mean = 0;
  double std = 0;  // sample (n - 1) std; 0 for a single seed
  int n = 0;

  bool operator==(const CellSummary&) const = default;
};

struct SummaryTable {
  std::vector<std::string> datasets;  // row order
  std::vector<std::string> models;    // column order
  std::vector<Regime> regimes;
  std::map<std::string, std::string> metric;  // per dataset
  std::map<std::tuple<std::string, std::string, Regime>, CellSummary> cells;

  bool has(const std::string& dataset, const std::string& model, Regime regime) const;
  // Throws CompletenessError naming the cell.
  const CellSummary& at(const std::string& dataset, const std::string& model,
                        Regime regime) const;

  bool operator==(const SummaryTable&) const = default;
};

// Every (dataset, model, regime) present in the records must have a
// complete grid for every seed in `seeds`. Empty `seeds` means the seeds
// present anywhere in the records. Throws CompletenessError listing the
// missing (seed, setting) pairs, or for an empty record set.
SummaryTable summarize(const std::vector<MetricRecord>& records,
                       const std::vector<int>& seeds = {},
                       const SettingGrid& grid = SettingGrid::standard());

// Cell means given directly: CSV with header dataset,model,regime,mean,std.
SummaryTable parse_cell_means(std::string_view csv);
std::string cell_means_to_csv(const SummaryTable& table);

// Descending average ranks: the largest value gets rank 1, ties share the
// mean of the ranks they span.
std::vector<double> average_ranks(const std::vector<double>& values);

// Per dataset rank the models by descending cell mean, then average over
// the table's datasets. Throws CompletenessError if any dataset x model
// cell of the regime is missing.
std::map<std::string, double> mean_ranks(const SummaryTable& table, Regime regime);

// Mean over datasets of regime_mean / clean_mean for one model. Throws
// MetricError when a clean mean is zero, CompletenessError when a cell is
// missing.
double retention(const SummaryTable& table, const std::string& model, Regime regime);

// Severity-plot rows for one corruption kind: per dataset, model and
// severity the mean and sample std over seeds.
struct SeverityPoint {
  std::string dataset, model;
  int severity = 0;
  double mean = 0, std = 0;
};
std::vector<SeverityPoint> severity_curve(const std::vector<MetricRecord>& records,
                                          std::string_view corruption_kind,
                                          const std::vector<int>& seeds = {});

}  // namespace permubench
