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


#include "permubench/orchestrator.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>
#include <thread>

#include "json.hpp"

#include "permubench/attacks.hpp"
#include "permubench/data.hpp"
#include "permubench/error.hpp"
#include "permubench/metrics.hpp"

namespace permubench {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

template <typename T>
void reject_duplicates(const std::vector<T>& values, const char* what) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    for (std::size_t j = 0; j < i; ++j) {
      if (values[i] == values[j]) throw ConfigError(std::string("duplicate entry in ") + what);
    }
  }
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Writes via a temporary sibling so readers never see a half-written file.
void write_text_atomic(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + tmp.string());
    out << text;
    if (!out.flush()) throw DataError("write failed: " + tmp.string());
  }
  fs::rename(tmp, path);
}

const char* selection_id(Selection s) {
  return s == Selection::kBestVal ? "best_val" : "last_epoch";
}

Selection parse_selection(const std::string& text) {
  if (text == "last_epoch") return Selection::kLastEpoch;
  if (text == "best_val") return Selection::kBestVal;
  throw ConfigError("unknown selection '" + text + "'");
}

const char* binary_metric_id(BinaryMetric m) {
  return m == BinaryMetric::kRocAuc ? "auc" : "accuracy@0.5";
}

BinaryMetric parse_binary_metric(const std::string& text) {
  if (text == "auc") return BinaryMetric::kRocAuc;
  if (text == "accuracy@0.5") return BinaryMetric::kThresholdAccuracy;
  throw ConfigError("unknown binary_metric '" + text + "'");
}

void check_keys(const json& obj, std::initializer_list<std::string_view> allowed,
                const std::string& where) {
  if (!obj.is_object()) throw ConfigError(where + " must be a JSON object");
  for (const auto& item : obj.items()) {
    if (std::find(allowed.begin(), allowed.end(), item.key()) == allowed.end()) {
      throw ConfigError("unknown key '" + item.key() + "' in " + where);
    }
  }
}

template <typename T>
T get(const json& obj, const char* key, const std::string& where) {
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError("bad value for '" + std::string(key) + "' in " + where);
  }
}

template <typename T>
void read_triple(const json& obj, const char* key, std::array<T, 3>& out) {
  if (!obj.contains(key)) return;
  const auto v = get<std::vector<T>>(obj, key, "severity");
  if (v.size() != 3) throw ConfigError(std::string("severity.") + key + " needs three values");
  std::copy(v.begin(), v.end(), out.begin());
}

std::string cell_label(const RecordStore::Cell& c) {
  return std::get<0>(c) + "," + std::get<1>(c) + "," + std::to_string(std::get<2>(c)) + "," +
         std::string(regime_id(std::get<3>(c)));
}

std::size_t catalog_position(const std::string& id) {
  const auto cat = dataset_catalog();
  for (std::size_t i = 0; i < cat.size(); ++i) {
    if (cat[i].id == id) return i;
  }
  return cat.size();
}

std::size_t model_position(const std::string& id) {
  for (std::size_t i = 0; i < std::size(kAllArchs); ++i) {
    if (arch_id(kAllArchs[i]) == id) return i;
  }
  return std::size(kAllArchs);
}

bool cell_less(const RecordStore::Cell& a, const RecordStore::Cell& b) {
  const auto key = [](const RecordStore::Cell& c) {
    return std::make_tuple(catalog_position(std::get<0>(c)), std::get<0>(c),
                           model_position(std::get<1>(c)), std::get<1>(c), std::get<2>(c),
                           static_cast<int>(std::get<3>(c)));
  };
  return key(a) < key(b);
}

RecordStore::Cell parse_cell(const std::string& line, int lineno) {
  std::vector<std::string> parts;
  std::stringstream ss(line);
  std::string part;
  while (std::getline(ss, part, ',')) parts.push_back(part);
  if (parts.size() != 4) {
    throw FormatError("records.index line " + std::to_string(lineno) + ": expected 4 fields");
  }
  try {
    std::size_t used = 0;
    const int seed = std::stoi(parts[2], &used);
    if (used != parts[2].size()) throw std::invalid_argument("seed");
    return {parts[0], parts[1], seed, parse_regime(parts[3])};
  } catch (const std::exception&) {
    throw FormatError("records.index line " + std::to_string(lineno) + ": malformed cell");
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// RunConfig

RunConfig::RunConfig() {
  for (Arch a : kAllArchs) models.emplace_back(arch_id(a));
  for (const auto& info : dataset_catalog()) datasets.emplace_back(info.id);
}

void RunConfig::validate() const {
  if (models.empty()) throw ConfigError("no models selected");
  if (datasets.empty()) throw ConfigError("no datasets selected");
  if (seeds.empty()) throw ConfigError("no seeds selected");
  if (regimes.empty()) throw ConfigError("no regimes selected");
  for (const auto& m : models) {
    try {
      if (arch_id(parse_arch(m)) != m) throw SpecError(m);
    } catch (const Error&) {
      throw ConfigError("unknown model '" + m + "' (use an arch id such as zachvit)");
    }
  }
  for (const auto& d : datasets) {
    if (find_dataset(d).id != d) {
      throw ConfigError("dataset '" + d + "' must be given as its lowercase id");
    }
  }
  reject_duplicates(models, "models");
  reject_duplicates(datasets, "datasets");
  reject_duplicates(seeds, "seeds");
  reject_duplicates(regimes, "regimes");
  for (int s : seeds) {
    if (s < 0) throw ConfigError("seeds must be non-negative");
  }
  if (jobs < 1) throw ConfigError("jobs must be at least 1");
  if (attack_epsilons.empty()) throw ConfigError("attack_epsilons is empty");
  for (double e : attack_epsilons) {
    if (!(e > 0) || e > 1) throw ConfigError("attack epsilons must lie in (0, 1]");
  }
  reject_duplicates(attack_epsilons, "attack_epsilons");
  try {
    train.validate();
    severity.validate();
  } catch (const SpecError& e) {
    throw ConfigError(e.what());
  }
}

SettingGrid RunConfig::grid() const {
  SettingGrid g;
  for (const auto& c : corruption_grid()) g.corruption.push_back(c.setting());
  for (double e : attack_epsilons) {
    g.fgsm.push_back(AttackSpec::fgsm(e).setting());
    g.pgd.push_back(AttackSpec::pgd(e).setting());
  }
  return g;
}

std::size_t RunConfig::records_per_run() const {
  const SettingGrid g = grid();
  std::size_t n = 0;
  for (Regime r : regimes) n += g.settings(r).size();
  return n;
}

RunConfig config_from_json(std::string_view text, const RunConfig& base) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("run config is not valid JSON: ") + e.what());
  }
  check_keys(doc,
             {"data_dir", "out_dir", "models", "datasets", "seeds", "regimes", "jobs",
              "attack_epsilons", "train", "severity"},
             "run config");
  RunConfig cfg = base;
  const std::string where = "run config";
  if (doc.contains("data_dir")) cfg.data_dir = get<std::string>(doc, "data_dir", where);
  if (doc.contains("out_dir")) cfg.out_dir = get<std::string>(doc, "out_dir", where);
  if (doc.contains("models")) cfg.models = get<std::vector<std::string>>(doc, "models", where);
  if (doc.contains("datasets")) {
    cfg.datasets.clear();
    for (const auto& d : get<std::vector<std::string>>(doc, "datasets", where)) {
      cfg.datasets.emplace_back(find_dataset(d).id);
    }
  }
  if (doc.contains("seeds")) cfg.seeds = get<std::vector<int>>(doc, "seeds", where);
  if (doc.contains("regimes")) {
    cfg.regimes.clear();
    for (const auto& r : get<std::vector<std::string>>(doc, "regimes", where)) {
      cfg.regimes.push_back(parse_regime(r));
    }
  }
  if (doc.contains("jobs")) cfg.jobs = get<int>(doc, "jobs", where);
  if (doc.contains("attack_epsilons")) {
    cfg.attack_epsilons = get<std::vector<double>>(doc, "attack_epsilons", where);
  }
  if (doc.contains("train")) {
    const json& t = doc.at("train");
    check_keys(t,
               {"per_class", "batch_size", "epochs", "lr", "beta1", "beta2", "adam_eps",
                "optimizer", "selection", "binary_metric", "log_val_metric"},
               "train");
    TrainConfig& tc = cfg.train;
    if (t.contains("per_class")) tc.per_class = get<int>(t, "per_class", "train");
    if (t.contains("batch_size")) tc.batch_size = get<int>(t, "batch_size", "train");
    if (t.contains("epochs")) tc.epochs = get<int>(t, "epochs", "train");
    if (t.contains("lr")) tc.lr = get<double>(t, "lr", "train");
    if (t.contains("beta1")) tc.beta1 = get<double>(t, "beta1", "train");
    if (t.contains("beta2")) tc.beta2 = get<double>(t, "beta2", "train");
    if (t.contains("adam_eps")) tc.adam_eps = get<double>(t, "adam_eps", "train");
    if (t.contains("optimizer")) tc.optimizer = get<std::string>(t, "optimizer", "train");
    if (t.contains("selection")) {
      tc.selection = parse_selection(get<std::string>(t, "selection", "train"));
    }
    if (t.contains("binary_metric")) {
      tc.binary_metric = parse_binary_metric(get<std::string>(t, "binary_metric", "train"));
    }
    if (t.contains("log_val_metric")) {
      tc.log_val_metric = get<bool>(t, "log_val_metric", "train");
    }
  }
  if (doc.contains("severity")) {
    const json& s = doc.at("severity");
    check_keys(s,
               {"noise_sigma", "blur_sigma", "contrast", "brightness", "jpeg_quality",
                "cutout_side"},
               "severity");
    read_triple(s, "noise_sigma", cfg.severity.noise_sigma);
    read_triple(s, "blur_sigma", cfg.severity.blur_sigma);
    read_triple(s, "contrast", cfg.severity.contrast);
    read_triple(s, "brightness", cfg.severity.brightness);
    read_triple(s, "jpeg_quality", cfg.severity.jpeg_quality);
    read_triple(s, "cutout_side", cfg.severity.cutout_side);
  }
  return cfg;
}

RunConfig load_config(const fs::path& path, const RunConfig& base) {
  if (!fs::is_regular_file(path)) throw ConfigError("no config file " + path.string());
  return config_from_json(read_text(path), base);
}

std::string config_to_json(const RunConfig& cfg) {
  ordered_json doc;
  doc["data_dir"] = cfg.data_dir.string();
  doc["out_dir"] = cfg.out_dir.string();
  doc["models"] = cfg.models;
  doc["datasets"] = cfg.datasets;
  doc["seeds"] = cfg.seeds;
  auto& regimes = doc["regimes"] = ordered_json::array();
  for (Regime r : cfg.regimes) regimes.push_back(std::string(regime_id(r)));
  doc["jobs"] = cfg.jobs;
  doc["attack_epsilons"] = cfg.attack_epsilons;
  const TrainConfig& t = cfg.train;
  doc["train"] = {{"per_class", t.per_class},
                  {"batch_size", t.batch_size},
                  {"epochs", t.epochs},
                  {"lr", t.lr},
                  {"beta1", t.beta1},
                  {"beta2", t.beta2},
                  {"adam_eps", t.adam_eps},
                  {"optimizer", t.optimizer},
                  {"selection", selection_id(t.selection)},
                  {"binary_metric", binary_metric_id(t.binary_metric)},
                  {"log_val_metric", t.log_val_metric}};
  const SeverityTable& s = cfg.severity;
  doc["severity"] = {{"noise_sigma", s.noise_sigma}, {"blur_sigma", s.blur_sigma},
                     {"contrast", s.contrast},       {"brightness", s.brightness},
                     {"jpeg_quality", s.jpeg_quality}, {"cutout_side", s.cutout_side}};
  return doc.dump(2) + "\n";
}

fs::path resolve_data_dir(const RunConfig& cfg) {
  if (!cfg.data_dir.empty()) return cfg.data_dir;
  if (const char* env = std::getenv("PERMUBENCH_DATA_DIR"); env != nullptr && *env != '\0') {
    return env;
  }
  return "data";
}

// ---------------------------------------------------------------------------
// RecordStore

namespace {

// Text up to and including the last newline; a trailing partial line was
// cut off mid-write.
std::string complete_lines(std::string text) {
  if (!text.empty() && text.back() != '\n') {
    const auto nl = text.find_last_of('\n');
    text.erase(nl == std::string::npos ? 0 : nl + 1);
  }
  return text;
}

// Finished cells and their records. A cell counts only when it is in the
// index and has records; other records are ignored.
std::pair<std::set<RecordStore::Cell>, std::vector<MetricRecord>> read_store(const fs::path& dir) {
  std::set<RecordStore::Cell> indexed;
  if (fs::exists(dir / "records.index")) {
    std::istringstream lines(complete_lines(read_text(dir / "records.index")));
    std::string line;
    int lineno = 0;
    while (std::getline(lines, line)) {
      ++lineno;
      if (!line.empty()) indexed.insert(parse_cell(line, lineno));
    }
  }
  std::vector<MetricRecord> records;
  std::set<RecordStore::Cell> finished;
  if (fs::exists(dir / "records.csv")) {
    const std::string text = complete_lines(read_text(dir / "records.csv"));
    for (auto& r : text.empty() ? std::vector<MetricRecord>{} : parse_records(text)) {
      RecordStore::Cell cell{r.dataset, r.model, r.seed, r.regime};
      if (indexed.count(cell)) {
        finished.insert(std::move(cell));
        records.push_back(std::move(r));
      }
    }
  }
  return {std::move(finished), std::move(records)};
}

std::vector<MetricRecord> load_finished_records(const fs::path& dir) {
  return read_store(dir).second;
}

}  // namespace

RecordStore::RecordStore(fs::path out_dir) : dir_(std::move(out_dir)) {
  fs::create_directories(dir_);
  std::tie(finished_, records_) = read_store(dir_);
  // Rewrite so later appends start from a clean file.
  canonicalize();
}

bool RecordStore::finished(const Cell& cell) const {
  std::lock_guard lock(mu_);
  return finished_.count(cell) != 0;
}

void RecordStore::commit(const Cell& cell, const std::vector<MetricRecord>& records) {
  if (records.empty()) throw UsageError("commit of an empty cell " + cell_label(cell));
  for (const auto& r : records) {
    if (Cell{r.dataset, r.model, r.seed, r.regime} != cell) {
      throw UsageError("record does not belong to cell " + cell_label(cell));
    }
  }
  std::lock_guard lock(mu_);
  if (finished_.count(cell)) return;
  {
    std::ofstream out(dir_ / "records.csv", std::ios::binary | std::ios::app);
    for (const auto& r : records) out << record_to_csv(r) << '\n';
    if (!out.flush()) throw DataError("cannot append to " + (dir_ / "records.csv").string());
  }
  {
    std::ofstream out(dir_ / "records.index", std::ios::binary | std::ios::app);
    out << cell_label(cell) << '\n';
    if (!out.flush()) throw DataError("cannot append to " + (dir_ / "records.index").string());
  }
  records_.insert(records_.end(), records.begin(), records.end());
  finished_.insert(cell);
}

void RecordStore::canonicalize() {
  std::lock_guard lock(mu_);
  sort_records(records_);
  write_records(dir_ / "records.csv", records_);
  std::vector<Cell> cells(finished_.begin(), finished_.end());
  std::sort(cells.begin(), cells.end(), cell_less);
  std::string index;
  for (const auto& c : cells) index += cell_label(c) + "\n";
  write_text_atomic(dir_ / "records.index", index);
}

std::vector<MetricRecord> RecordStore::records() const {
  std::lock_guard lock(mu_);
  return records_;
}

fs::path checkpoint_path(const fs::path& out_dir, const std::string& dataset,
                         const std::string& model, int seed) {
  return out_dir / "checkpoints" / dataset / model / ("seed" + std::to_string(seed) + ".params");
}

// ---------------------------------------------------------------------------
// Matrix execution

std::vector<MetricRecord> evaluate_regime(const RunConfig& cfg, const Dataset& ds,
                                          const std::string& dataset_id, const ModelSpec& spec,
                                          const ModelParams& params, int seed, Regime regime,
                                          const ImageBatch& test) {
  std::vector<MetricRecord> out;
  const auto add = [&](const std::string& setting, const ImageBatch& batch) {
    const EvalResult r = evaluate(spec, params, batch, ds.num_classes, cfg.train.binary_metric);
    out.push_back({dataset_id, std::string(arch_id(spec.arch)), seed, regime, setting,
                   std::string(metric_id(r.metric)), r.value});
  };
  switch (regime) {
    case Regime::kClean:
      add("", test);
      break;
    case Regime::kCorruption:
      for (const auto& c : corruption_grid(static_cast<std::uint64_t>(seed))) {
        add(c.setting(), apply(c, test, cfg.severity));
      }
      break;
    case Regime::kFgsm:
    case Regime::kPgd: {
      const ForwardFn forward = model_forward(spec, params);
      for (double e : cfg.attack_epsilons) {
        const AttackSpec a = regime == Regime::kFgsm ? AttackSpec::fgsm(e) : AttackSpec::pgd(e);
        add(a.setting(), run_attack(a, forward, test));
      }
      break;
    }
  }
  return out;
}

namespace {

struct RunKey {
  std::string dataset, model;
  int seed;
};

// Loads a stored checkpoint when it matches the expected architecture;
// returns false when training is needed.
bool try_load_checkpoint(const fs::path& path, const ModelSpec& expected, ModelParams& params) {
  if (!fs::exists(path)) return false;
  try {
    auto [spec, loaded] = load_params(path);
    if (!(spec == expected)) return false;
    params = std::move(loaded);
    return true;
  } catch (const Error&) {
    return false;
  }
}

}  // namespace

MatrixOutcome run_matrix(const RunConfig& cfg, std::ostream* log) {
  cfg.validate();
  const fs::path data_dir = resolve_data_dir(cfg);

  std::vector<std::string> missing;
  for (const auto& d : cfg.datasets) {
    const fs::path p = dataset_path(data_dir, find_dataset(d));
    if (!fs::exists(p)) missing.push_back(p.string());
  }
  if (!missing.empty()) {
    std::string msg = "missing dataset files:";
    for (const auto& m : missing) msg += " " + m;
    throw DataError(msg);
  }

  RecordStore store(cfg.out_dir);
  std::vector<RunKey> runs;
  for (const auto& d : cfg.datasets) {
    for (const auto& m : cfg.models) {
      for (int s : cfg.seeds) runs.push_back({d, m, s});
    }
  }

  MatrixOutcome outcome;
  outcome.runs = static_cast<int>(runs.size());
  std::vector<const RunKey*> pending;
  for (const auto& run : runs) {
    const bool done = std::all_of(cfg.regimes.begin(), cfg.regimes.end(), [&](Regime r) {
      return store.finished({run.dataset, run.model, run.seed, r});
    });
    if (done) {
      ++outcome.skipped;
    } else {
      pending.push_back(&run);
    }
  }

  // Datasets are loaded once, before the workers start, and only read after.
  std::map<std::string, Dataset> data;
  for (const auto* run : pending) {
    if (!data.count(run->dataset)) {
      const DatasetInfo& info = find_dataset(run->dataset);
      data.emplace(run->dataset, load_npz(dataset_path(data_dir, info), info));
    }
  }

  std::mutex log_mu;
  const auto say = [&](const std::string& line) {
    if (log == nullptr) return;
    std::lock_guard lock(log_mu);
    *log << line << '\n' << std::flush;
  };

  std::atomic<std::size_t> next{0};
  std::atomic<int> trained{0}, reused{0};
  std::atomic<std::size_t> new_records{0};
  std::vector<std::string> failures(pending.size());

  const auto worker = [&] {
    for (std::size_t i = next++; i < pending.size(); i = next++) {
      const RunKey& run = *pending[i];
      const std::string label = run.dataset + "/" + run.model + "/seed " + std::to_string(run.seed);
      try {
        const Dataset& ds = data.at(run.dataset);
        const ModelSpec spec = default_spec(parse_arch(run.model), ds.num_classes);
        const fs::path ckpt = checkpoint_path(cfg.out_dir, run.dataset, run.model, run.seed);
        ModelParams params;
        if (try_load_checkpoint(ckpt, spec, params)) {
          ++reused;
          say(label + ": loaded checkpoint");
        } else {
          say(label + ": training");
          TrainResult result = train(spec, TrainingSplits::of(ds), cfg.train, run.seed);
          fs::create_directories(ckpt.parent_path());
          const fs::path tmp = ckpt.string() + ".tmp";
          save_params(tmp, spec, result.params);
          write_text_atomic(fs::path(ckpt).replace_extension(".jsonl"), result.log.to_jsonl());
          fs::rename(tmp, ckpt);
          params = std::move(result.params);
          ++trained;
        }
        for (Regime regime : cfg.regimes) {
          const RecordStore::Cell cell{run.dataset, run.model, run.seed, regime};
          if (store.finished(cell)) continue;
          auto records =
              evaluate_regime(cfg, ds, run.dataset, spec, params, run.seed, regime, ds.test);
          store.commit(cell, records);
          new_records += records.size();
          say(label + ": " + std::string(regime_id(regime)) + " done (" +
              std::to_string(records.size()) + " records)");
        }
      } catch (const std::exception& e) {
        failures[i] = label + ": " + e.what();
        say("FAILED " + failures[i]);
      }
    }
  };

  const int threads = std::min<int>(cfg.jobs, static_cast<int>(pending.size()));
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  store.canonicalize();

  outcome.trained = trained;
  outcome.reused = reused;
  outcome.new_records = new_records;
  for (auto& f : failures) {
    if (!f.empty()) outcome.failures.push_back(std::move(f));
  }
  return outcome;
}

// ---------------------------------------------------------------------------
// Reports

namespace {

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  // "-0.00" and "0.00" must print the same.
  if (std::string(buf).find_first_not_of("-0.") == std::string::npos && buf[0] == '-') {
    return std::string(buf + 1);
  }
  return buf;
}

std::string exact(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string display_dataset(const std::string& id) {
  try {
    return std::string(find_dataset(id).name);
  } catch (const Error&) {
    return id;
  }
}

std::string display_model(const std::string& id) {
  try {
    return std::string(arch_display_name(parse_arch(id)));
  } catch (const Error&) {
    return id;
  }
}

// Injected cell means carry no metric name; fall back to the task default.
std::string table_metric(const SummaryTable& table, const std::string& dataset) {
  if (const auto it = table.metric.find(dataset); it != table.metric.end()) return it->second;
  try {
    return find_dataset(dataset).task() == Task::kBinary ? "auc" : "macro_f1";
  } catch (const Error&) {
    return "";
  }
}

bool regime_complete(const SummaryTable& t, Regime r) {
  for (const auto& d : t.datasets) {
    for (const auto& m : t.models) {
      if (!t.has(d, m, r)) return false;
    }
  }
  return true;
}

}  // namespace

std::string format_table(const SummaryTable& table, const std::vector<Regime>& regimes) {
  std::string out = "dataset,metric";
  for (Regime r : regimes) {
    for (const auto& m : table.models) {
      out += "," + std::string(regime_id(r)) + ":" + display_model(m);
    }
  }
  out += "\n";
  for (const auto& d : table.datasets) {
    out += display_dataset(d) + "," + table_metric(table, d);
    for (Regime r : regimes) {
      for (const auto& m : table.models) {
        const CellSummary& c = table.at(d, m, r);
        out += "," + fixed(c.mean, 3) + " ± " + fixed(c.std, 3);
      }
    }
    out += "\n";
  }
  out += "Mean rank,";
  for (Regime r : regimes) {
    const auto ranks = mean_ranks(table, r);
    for (const auto& m : table.models) out += "," + fixed(ranks.at(m), 2);
  }
  out += "\n";
  return out;
}

ReportFiles report(const fs::path& store_dir, const fs::path& report_dir, ReportSource source,
                   const std::vector<int>& seeds, const SettingGrid& grid) {
  const fs::path records_path = store_dir / "records.csv";
  const fs::path means_path = store_dir / "cell_means.csv";
  if (source == ReportSource::kAuto) {
    source = fs::exists(means_path) && !fs::exists(records_path) ? ReportSource::kCellMeans
                                                                 : ReportSource::kRecords;
  }

  SummaryTable table;
  std::vector<MetricRecord> records;
  if (source == ReportSource::kCellMeans) {
    if (!fs::exists(means_path)) throw CompletenessError("no cell_means.csv in " + store_dir.string());
    table = parse_cell_means(read_text(means_path));
  } else {
    if (!fs::exists(records_path)) throw CompletenessError("no records.csv in " + store_dir.string());
    records = load_finished_records(store_dir);
    table = summarize(records, seeds, grid);
  }
  if (table.datasets.empty() || table.models.empty() || table.regimes.empty()) {
    throw CompletenessError("nothing to report in " + store_dir.string());
  }

  std::map<fs::path, std::string> files;
  const auto present = [&](Regime r) {
    return std::find(table.regimes.begin(), table.regimes.end(), r) != table.regimes.end();
  };
  for (Regime r : table.regimes) {
    if (!regime_complete(table, r)) {
      std::string missing;
      for (const auto& d : table.datasets) {
        for (const auto& m : table.models) {
          if (!table.has(d, m, r)) missing += " " + d + "/" + m;
        }
      }
      throw CompletenessError("regime " + std::string(regime_id(r)) + " lacks cells:" + missing);
    }
  }

  std::vector<Regime> first, second;
  for (Regime r : {Regime::kClean, Regime::kCorruption}) {
    if (present(r)) first.push_back(r);
  }
  for (Regime r : {Regime::kFgsm, Regime::kPgd}) {
    if (present(r)) second.push_back(r);
  }
  if (!first.empty()) files[report_dir / "clean_corruption.csv"] = format_table(table, first);
  if (!second.empty()) files[report_dir / "attacks.csv"] = format_table(table, second);

  ordered_json ranks = ordered_json::object();
  for (Regime r : table.regimes) {
    const auto mr = mean_ranks(table, r);
    ordered_json row = ordered_json::object();
    for (const auto& m : table.models) row[m] = mr.at(m);
    ranks[std::string(regime_id(r))] = row;
  }
  files[report_dir / "ranks.json"] = ranks.dump(2) + "\n";

  if (present(Regime::kClean) && table.regimes.size() > 1) {
    ordered_json ret = ordered_json::object();
    for (const auto& m : table.models) {
      ordered_json row = ordered_json::object();
      for (Regime r : table.regimes) {
        if (r != Regime::kClean) row[std::string(regime_id(r))] = retention(table, m, r);
      }
      ret[m] = row;
    }
    files[report_dir / "retention.json"] = ret.dump(2) + "\n";
  }

  if (source == ReportSource::kRecords && present(Regime::kCorruption)) {
    for (CorruptionKind kind : kAllCorruptionKinds) {
      const std::string id(corruption_id(kind));
      std::string csv = "dataset,model,severity,mean,std\n";
      for (const auto& p : severity_curve(records, id, seeds)) {
        csv += p.dataset + "," + p.model + "," + std::to_string(p.severity) + "," +
               exact(p.mean) + "," + exact(p.std) + "\n";
      }
      files[report_dir / "severity_curves" / (id + ".csv")] = csv;
    }
  }

  ReportFiles out;
  for (const auto& [path, text] : files) {
    write_text_atomic(path, text);
    out.written.push_back(path);
  }
  return out;
}

void inject(const fs::path& means_csv, const fs::path& out_dir) {
  const SummaryTable table = parse_cell_means(read_text(means_csv));
  if (table.cells.empty()) throw CompletenessError("no cell means in " + means_csv.string());
  fs::create_directories(out_dir);
  write_text_atomic(out_dir / "cell_means.csv", cell_means_to_csv(table));
}

}  // namespace permubench
