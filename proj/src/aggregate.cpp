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


#include "permubench/aggregate.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "permubench/attacks.hpp"
#include "permubench/corruptions.hpp"
#include "permubench/data.hpp"
#include "permubench/error.hpp"
#include "permubench/models.hpp"

namespace permubench {

namespace {

std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(sep, start);
    out.push_back(line.substr(start, pos == std::string_view::npos ? pos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

std::vector<std::string_view> lines_of(std::string_view text) {
  std::vector<std::string_view> lines;
  for (auto line : split(text, '\n')) {
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.push_back(line);
  }
  while (!lines.empty() && lines.back().empty()) lines.pop_back();
  return lines;
}

template <typename T>
bool parse_number(std::string_view text, T& out) {
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, out);
  return ec == std::errc() && ptr == end && !text.empty();
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Position in a canonical list, unknown names after all known ones.
int dataset_order(const std::string& id) {
  const auto catalog = dataset_catalog();
  for (std::size_t i = 0; i < catalog.size(); ++i) {
    if (catalog[i].id == id) return static_cast<int>(i);
  }
  return static_cast<int>(catalog.size());
}

int model_order(const std::string& id) {
  int i = 0;
  for (Arch a : kAllArchs) {
    if (arch_id(a) == id) return i;
    ++i;
  }
  return i;
}

int setting_order(Regime regime, const std::string& setting) {
  static const SettingGrid grid = SettingGrid::standard();
  const auto& list = grid.settings(regime);
  const auto it = std::find(list.begin(), list.end(), setting);
  return static_cast<int>(it - list.begin());
}

void sort_canonical(std::vector<std::string>& names, int (*order)(const std::string&)) {
  std::sort(names.begin(), names.end(), [order](const std::string& a, const std::string& b) {
    return std::make_pair(order(a), a) < std::make_pair(order(b), b);
  });
}

std::pair<double, double> mean_and_std(const std::vector<double>& v) {
  double sum = 0;
  for (double x : v) sum += x;
  const double mean = sum / static_cast<double>(v.size());
  if (v.size() < 2) return {mean, 0.0};
  double ss = 0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return {mean, std::sqrt(ss / static_cast<double>(v.size() - 1))};
}

std::string cell_name(const std::string& dataset, const std::string& model, Regime regime) {
  return dataset + "/" + model + "/" + std::string(regime_id(regime));
}

}  // namespace

std::string_view regime_id(Regime regime) {
  switch (regime) {
    case Regime::kClean: return "clean";
    case Regime::kCorruption: return "corruption";
    case Regime::kFgsm: return "fgsm";
    case Regime::kPgd: return "pgd";
  }
  return "unknown";
}

Regime parse_regime(std::string_view text) {
  for (Regime r : kAllRegimes) {
    if (regime_id(r) == text) return r;
  }
  throw ConfigError("unknown regime '" + std::string(text) + "'");
}

SettingGrid SettingGrid::standard() {
  SettingGrid grid;
  for (const auto& spec : corruption_grid()) grid.corruption.push_back(spec.setting());
  for (const auto& spec : attack_grid(AttackKind::kFgsm)) grid.fgsm.push_back(spec.setting());
  for (const auto& spec : attack_grid(AttackKind::kPgd)) grid.pgd.push_back(spec.setting());
  return grid;
}

const std::vector<std::string>& SettingGrid::settings(Regime regime) const {
  static const std::vector<std::string> kClean = {""};
  switch (regime) {
    case Regime::kClean: return kClean;
    case Regime::kCorruption: return corruption;
    case Regime::kFgsm: return fgsm;
    case Regime::kPgd: return pgd;
  }
  return kClean;
}

std::string record_to_csv(const MetricRecord& r) {
  return r.dataset + "," + r.model + "," + std::to_string(r.seed) + "," +
         std::string(regime_id(r.regime)) + "," + r.setting + "," + r.metric + "," +
         format_double(r.value);
}

std::vector<MetricRecord> parse_records(std::string_view csv) {
  const auto lines = lines_of(csv);
  if (lines.empty() || lines[0] != kRecordHeader) {
    throw FormatError("record CSV must start with header '" + std::string(kRecordHeader) + "'");
  }
  std::vector<MetricRecord> out;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto where = "record CSV line " + std::to_string(i + 1);
    const auto f = split(lines[i], ',');
    if (f.size() != 7) throw FormatError(where + ": expected 7 fields");
    MetricRecord r;
    r.dataset = f[0];
    r.model = f[1];
    if (!parse_number(f[2], r.seed)) throw FormatError(where + ": bad seed");
    try {
      r.regime = parse_regime(f[3]);
    } catch (const ConfigError&) {
      throw FormatError(where + ": unknown regime '" + std::string(f[3]) + "'");
    }
    r.setting = f[4];
    r.metric = f[5];
    if (!parse_number(f[6], r.value)) throw FormatError(where + ": bad value");
    if (r.dataset.empty() || r.model.empty()) throw FormatError(where + ": empty key field");
    if ((r.regime == Regime::kClean) != r.setting.empty()) {
      throw FormatError(where + ": clean records have no setting, others need one");
    }
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<MetricRecord> read_records(const std::filesystem::path& path) {
  return parse_records(read_file(path));
}

void write_records(const std::filesystem::path& path, const std::vector<MetricRecord>& records) {
  std::string text(kRecordHeader);
  text += "\n";
  for (const auto& r : records) text += record_to_csv(r) + "\n";
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot write " + tmp);
    out << text;
    if (!out) throw FormatError("cannot write " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

void sort_records(std::vector<MetricRecord>& records) {
  auto key = [](const MetricRecord& r) {
    return std::make_tuple(dataset_order(r.dataset), r.dataset, model_order(r.model), r.model,
                           r.seed, static_cast<int>(r.regime),
                           setting_order(r.regime, r.setting), r.setting);
  };
  std::stable_sort(records.begin(), records.end(),
                   [&](const MetricRecord& a, const MetricRecord& b) { return key(a) < key(b); });
}

RecordIndex::RecordIndex(const std::vector<MetricRecord>& records) {
  for (const auto& r : records) {
    Key key{r.dataset, r.model, r.seed, r.regime, r.setting};
    const auto [it, inserted] = records_.emplace(key, r);
    if (!inserted && it->second.value != r.value) {
      throw DataError("conflicting records for " + cell_name(r.dataset, r.model, r.regime) +
                      " seed " + std::to_string(r.seed) + " setting '" + r.setting + "'");
    }
  }
}

const MetricRecord* RecordIndex::find(const std::string& dataset, const std::string& model,
                                      int seed, Regime regime,
                                      const std::string& setting) const {
  const auto it = records_.find(Key{dataset, model, seed, regime, setting});
  return it == records_.end() ? nullptr : &it->second;
}

std::vector<std::string> RecordIndex::datasets() const {
  std::set<std::string> s;
  for (const auto& [k, r] : records_) s.insert(r.dataset);
  std::vector<std::string> v(s.begin(), s.end());
  sort_canonical(v, &dataset_order);
  return v;
}

std::vector<std::string> RecordIndex::models() const {
  std::set<std::string> s;
  for (const auto& [k, r] : records_) s.insert(r.model);
  std::vector<std::string> v(s.begin(), s.end());
  sort_canonical(v, &model_order);
  return v;
}

std::vector<int> RecordIndex::seeds() const {
  std::set<int> s;
  for (const auto& [k, r] : records_) s.insert(r.seed);
  return {s.begin(), s.end()};
}

std::vector<Regime> RecordIndex::regimes() const {
  std::vector<Regime> out;
  for (Regime regime : kAllRegimes) {
    for (const auto& [k, r] : records_) {
      if (r.regime == regime) {
        out.push_back(regime);
        break;
      }
    }
  }
  return out;
}

double regime_mean_per_seed(const RecordIndex& index, const std::string& dataset,
                            const std::string& model, int seed, Regime regime,
                            const SettingGrid& grid) {
  const auto& settings = grid.settings(regime);
  if (settings.empty()) {
    throw ConfigError("setting grid for " + std::string(regime_id(regime)) + " is empty");
  }
  double sum = 0;
  std::vector<std::string> missing;
  for (const auto& s : settings) {
    const MetricRecord* r = index.find(dataset, model, seed, regime, s);
    if (r) {
      sum += r->value;
    } else {
      missing.push_back(s.empty() ? "clean" : s);
    }
  }
  if (!missing.empty()) {
    std::string list;
    for (const auto& m : missing) list += (list.empty() ? "" : ", ") + m;
    throw CompletenessError(cell_name(dataset, model, regime) + " seed " +
                            std::to_string(seed) + " is missing " + list);
  }
  return sum / static_cast<double>(settings.size());
}

bool SummaryTable::has(const std::string& dataset, const std::string& model,
                       Regime regime) const {
  return cells.count({dataset, model, regime}) != 0;
}

const CellSummary& SummaryTable::at(const std::string& dataset, const std::string& model,
                                    Regime regime) const {
  const auto it = cells.find({dataset, model, regime});
  if (it == cells.end()) {
    throw CompletenessError("summary has no cell " + cell_name(dataset, model, regime));
  }
  return it->second;
}

SummaryTable summarize(const std::vector<MetricRecord>& records, const std::vector<int>& seeds,
                       const SettingGrid& grid) {
  if (records.empty()) throw CompletenessError("no records to summarize");
  const RecordIndex index(records);
  std::vector<int> use_seeds = seeds.empty() ? index.seeds() : seeds;
  std::sort(use_seeds.begin(), use_seeds.end());
  use_seeds.erase(std::unique(use_seeds.begin(), use_seeds.end()), use_seeds.end());

  SummaryTable table;
  table.datasets = index.datasets();
  table.models = index.models();
  table.regimes = index.regimes();
  for (const auto& r : records) {
    auto& metric = table.metric[r.dataset];
    if (metric.empty()) {
      metric = r.metric;
    } else if (metric != r.metric) {
      throw DataError("dataset " + r.dataset + " mixes metrics " + metric + " and " + r.metric);
    }
  }

  std::vector<std::string> problems;
  for (const auto& d : table.datasets) {
    for (const auto& m : table.models) {
      for (Regime regime : table.regimes) {
        // A (dataset, model, regime) with no record at all is simply out of
        // scope; mean_ranks and retention report it if they need it.
        bool any = false;
        for (int s : index.seeds()) {
          for (const auto& setting : grid.settings(regime)) {
            any = any || index.find(d, m, s, regime, setting) != nullptr;
          }
        }
        if (!any) continue;
        std::vector<double> per_seed;
        for (int s : use_seeds) {
          try {
            per_seed.push_back(regime_mean_per_seed(index, d, m, s, regime, grid));
          } catch (const CompletenessError& e) {
            problems.push_back(e.what());
          }
        }
        if (per_seed.size() != use_seeds.size()) continue;
        const auto [mean, std] = mean_and_std(per_seed);
        table.cells[{d, m, regime}] = {mean, std, static_cast<int>(per_seed.size())};
      }
    }
  }
  if (!problems.empty()) {
    std::string msg = "incomplete records (" + std::to_string(problems.size()) + " gaps):";
    for (const auto& p : problems) msg += "\n  " + p;
    throw CompletenessError(msg);
  }
  return table;
}

SummaryTable parse_cell_means(std::string_view csv) {
  const auto lines = lines_of(csv);
  if (lines.empty() || lines[0] != "dataset,model,regime,mean,std") {
    throw FormatError("cell-means CSV must start with header 'dataset,model,regime,mean,std'");
  }
  SummaryTable table;
  std::set<std::string> datasets, models;
  std::set<Regime> regimes;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto where = "cell-means CSV line " + std::to_string(i + 1);
    const auto f = split(lines[i], ',');
    if (f.size() != 5) throw FormatError(where + ": expected 5 fields");
    const std::string d(f[0]), m(f[1]);
    Regime regime;
    try {
      regime = parse_regime(f[2]);
    } catch (const ConfigError&) {
      throw FormatError(where + ": unknown regime '" + std::string(f[2]) + "'");
    }
    CellSummary cell;
    if (!parse_number(f[3], cell.mean) || !parse_number(f[4], cell.std)) {
      throw FormatError(where + ": bad number");
    }
    if (!table.cells.emplace(std::make_tuple(d, m, regime), cell).second) {
      throw FormatError(where + ": duplicate cell " + cell_name(d, m, regime));
    }
    datasets.insert(d);
    models.insert(m);
    regimes.insert(regime);
  }
  if (table.cells.empty()) throw CompletenessError("cell-means CSV has no cells");
  table.datasets.assign(datasets.begin(), datasets.end());
  sort_canonical(table.datasets, &dataset_order);
  table.models.assign(models.begin(), models.end());
  sort_canonical(table.models, &model_order);
  for (Regime r : kAllRegimes) {
    if (regimes.count(r)) table.regimes.push_back(r);
  }
  return table;
}

std::string cell_means_to_csv(const SummaryTable& table) {
  std::string out = "dataset,model,regime,mean,std\n";
  for (const auto& d : table.datasets) {
    for (Regime r : table.regimes) {
      for (const auto& m : table.models) {
        if (!table.has(d, m, r)) continue;
        const auto& c = table.at(d, m, r);
        out += d + "," + m + "," + std::string(regime_id(r)) + "," + format_double(c.mean) +
               "," + format_double(c.std) + "\n";
      }
    }
  }
  return out;
}

std::vector<double> average_ranks(const std::vector<double>& values) {
  std::vector<std::size_t> order(values.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] > values[b]; });
  std::vector<double> ranks(values.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && values[order[j + 1]] == values[order[i]]) ++j;
    // Positions i..j (0-based) share ranks i+1..j+1.
    const double rank = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = rank;
    i = j + 1;
  }
  return ranks;
}

std::map<std::string, double> mean_ranks(const SummaryTable& table, Regime regime) {
  if (table.datasets.empty() || table.models.empty()) {
    throw CompletenessError("cannot rank an empty table");
  }
  std::map<std::string, double> sums;
  for (const auto& d : table.datasets) {
    std::vector<double> values;
    for (const auto& m : table.models) values.push_back(table.at(d, m, regime).mean);
    const auto ranks = average_ranks(values);
    for (std::size_t i = 0; i < ranks.size(); ++i) sums[table.models[i]] += ranks[i];
  }
  for (auto& [m, s] : sums) s /= static_cast<double>(table.datasets.size());
  return sums;
}

double retention(const SummaryTable& table, const std::string& model, Regime regime) {
  if (table.datasets.empty()) throw CompletenessError("cannot compute retention on an empty table");
  double sum = 0;
  for (const auto& d : table.datasets) {
    const double clean = table.at(d, model, Regime::kClean).mean;
    if (clean == 0) {
      throw MetricError("retention undefined: clean mean of " + model + " on " + d + " is 0");
    }
    sum += table.at(d, model, regime).mean / clean;
  }
  return sum / static_cast<double>(table.datasets.size());
}

std::vector<SeverityPoint> severity_curve(const std::vector<MetricRecord>& records,
                                          std::string_view corruption_kind,
                                          const std::vector<int>& seeds) {
  const CorruptionKind kind = parse_corruption(corruption_kind);
  const RecordIndex index(records);
  const std::vector<int> use_seeds = seeds.empty() ? index.seeds() : seeds;
  std::vector<SeverityPoint> out;
  for (const auto& d : index.datasets()) {
    for (const auto& m : index.models()) {
      for (int severity = 1; severity <= 3; ++severity) {
        const std::string setting = CorruptionSpec{kind, severity, 0}.setting();
        std::vector<double> values;
        std::vector<int> missing;
        for (int s : use_seeds) {
          const MetricRecord* r = index.find(d, m, s, Regime::kCorruption, setting);
          if (r) {
            values.push_back(r->value);
          } else {
            missing.push_back(s);
          }
        }
        if (values.empty()) continue;
        if (!missing.empty()) {
          throw CompletenessError(cell_name(d, m, Regime::kCorruption) + " " + setting +
                                  " is missing seed " + std::to_string(missing.front()));
        }
        const auto [mean, std] = mean_and_std(values);
        out.push_back({d, m, severity, mean, std});
      }
    }
  }
  return out;
}

}  // namespace permubench
