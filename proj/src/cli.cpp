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


#include "permubench/cli.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <ostream>

#include <unistd.h>

#include "CLI11.hpp"

#include "permubench/aggregate.hpp"
#include "permubench/attacks.hpp"
#include "permubench/corruptions.hpp"
#include "permubench/data.hpp"
#include "permubench/error.hpp"
#include "permubench/models.hpp"
#include "permubench/npz.hpp"
#include "permubench/orchestrator.hpp"
#include "permubench/rng.hpp"

namespace permubench {

namespace fs = std::filesystem;

namespace {

// Flags shared by the subcommands that select a slice of the matrix.
struct SliceFlags {
  std::string config, data_dir, out_dir;
  std::vector<std::string> models, datasets, regimes;
  std::vector<int> seeds;
  int jobs = 0;
};

void add_slice_flags(CLI::App* cmd, SliceFlags& f, bool with_jobs) {
  cmd->add_option("--config", f.config, "JSON run config; flags override its values");
  cmd->add_option("--data-dir", f.data_dir, "directory with <dataset>.npz archives");
  cmd->add_option("--out-dir", f.out_dir, "record store / output directory");
  cmd->add_option("--models", f.models, "arch ids, comma separated")->delimiter(',');
  cmd->add_option("--datasets", f.datasets, "dataset ids, comma separated")->delimiter(',');
  cmd->add_option("--seeds", f.seeds, "seeds, comma separated")->delimiter(',');
  cmd->add_option("--regimes", f.regimes, "clean,corruption,fgsm,pgd")->delimiter(',');
  if (with_jobs) cmd->add_option("--jobs", f.jobs, "parallel runs")->check(CLI::PositiveNumber);
}

// Defaults, then the config file, then explicit flags.
RunConfig resolve_config(const SliceFlags& f) {
  RunConfig cfg;
  if (!f.config.empty()) cfg = load_config(f.config, cfg);
  if (!f.data_dir.empty()) cfg.data_dir = f.data_dir;
  if (!f.out_dir.empty()) cfg.out_dir = f.out_dir;
  if (!f.models.empty()) {
    cfg.models.clear();
    for (const auto& m : f.models) {
      try {
        cfg.models.emplace_back(arch_id(parse_arch(m)));
      } catch (const SpecError&) {
        throw ConfigError("unknown model '" + m + "'");
      }
    }
  }
  if (!f.datasets.empty()) {
    cfg.datasets.clear();
    for (const auto& d : f.datasets) cfg.datasets.emplace_back(find_dataset(d).id);
  }
  if (!f.seeds.empty()) cfg.seeds = f.seeds;
  if (!f.regimes.empty()) {
    cfg.regimes.clear();
    for (const auto& r : f.regimes) cfg.regimes.push_back(parse_regime(r));
  }
  if (f.jobs > 0) cfg.jobs = f.jobs;
  cfg.validate();
  return cfg;
}

std::string file_stem_for(std::string setting) {
  std::replace(setting.begin(), setting.end(), ':', '_');
  std::replace(setting.begin(), setting.end(), '/', '-');
  return setting;
}

void dump_images(const fs::path& path, const ImageBatch& batch) {
  fs::create_directories(path.parent_path());
  const auto bytes = serialize_npy(NpyArray::from_f32(
      {batch.size(), kImageSize, kImageSize, kImageChannels}, batch.pixels));
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("cannot write " + path.string());
}

void dump_labels(const fs::path& path, const ImageBatch& batch) {
  std::vector<std::int64_t> labels(batch.labels.begin(), batch.labels.end());
  const auto bytes = serialize_npy(NpyArray::from_i64({batch.size()}, labels));
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("cannot write " + path.string());
}

const ImageBatch& pick_split(const Dataset& ds, const std::string& split) {
  if (split == "train") return ds.train;
  if (split == "val") return ds.val;
  if (split == "test") return ds.test;
  throw ConfigError("unknown split '" + split + "'");
}

ImageBatch first_images(const ImageBatch& batch, int count) {
  return batch.range(0, std::min<std::int64_t>(count, batch.size()));
}

int cmd_run(const SliceFlags& f, std::ostream& out, std::ostream& err) {
  const RunConfig cfg = resolve_config(f);
  const MatrixOutcome o = run_matrix(cfg, &out);
  out << "runs " << o.runs << ": trained " << o.trained << ", reused checkpoints " << o.reused
      << ", already complete " << o.skipped << ", new records " << o.new_records << "\n";
  for (const auto& failure : o.failures) err << "run failed: " << failure << "\n";
  return o.failures.empty() ? kExitOk : kExitFailure;
}

int cmd_report(const SliceFlags& f, const std::string& report_dir, const std::string& source,
               std::ostream& out) {
  const RunConfig cfg = resolve_config(f);
  ReportSource src = ReportSource::kAuto;
  if (source == "records") {
    src = ReportSource::kRecords;
  } else if (source == "cell_means") {
    src = ReportSource::kCellMeans;
  } else if (source != "auto") {
    throw ConfigError("unknown --source '" + source + "'");
  }
  const fs::path dest = report_dir.empty() ? cfg.out_dir / "report" : fs::path(report_dir);
  // Explicit --seeds restrict the summary; otherwise the store's seeds are used.
  const ReportFiles files = report(cfg.out_dir, dest, src, f.seeds, cfg.grid());
  for (const auto& p : files.written) out << "wrote " << p.string() << "\n";
  return kExitOk;
}

int cmd_corrupt(const SliceFlags& f, const std::string& split, int count, int seed,
                const std::string& dump_dir, std::ostream& out) {
  const RunConfig cfg = resolve_config(f);
  const fs::path data_dir = resolve_data_dir(cfg);
  const fs::path dest = dump_dir.empty() ? cfg.out_dir / "corrupt" : fs::path(dump_dir);
  for (const auto& id : cfg.datasets) {
    const DatasetInfo& info = find_dataset(id);
    const Dataset ds = load_npz(dataset_path(data_dir, info), info);
    const ImageBatch batch = first_images(pick_split(ds, split), count);
    dump_images(dest / id / "clean.npy", batch);
    dump_labels(dest / id / "labels.npy", batch);
    for (const auto& spec : corruption_grid(static_cast<std::uint64_t>(seed))) {
      dump_images(dest / id / (file_stem_for(spec.setting()) + ".npy"),
                  apply(spec, batch, cfg.severity));
    }
    out << "wrote " << (dest / id).string() << "\n";
  }
  return kExitOk;
}

int cmd_attack(const SliceFlags& f, const std::string& split, int count,
               const std::string& dump_dir, std::ostream& out) {
  const RunConfig cfg = resolve_config(f);
  const fs::path data_dir = resolve_data_dir(cfg);
  const fs::path dest = dump_dir.empty() ? cfg.out_dir / "attack" : fs::path(dump_dir);
  for (const auto& id : cfg.datasets) {
    const DatasetInfo& info = find_dataset(id);
    const Dataset ds = load_npz(dataset_path(data_dir, info), info);
    const ImageBatch batch = first_images(pick_split(ds, split), count);
    for (const auto& model : cfg.models) {
      for (int seed : cfg.seeds) {
        const fs::path ckpt = checkpoint_path(cfg.out_dir, id, model, seed);
        if (!fs::exists(ckpt)) {
          throw DataError("no checkpoint " + ckpt.string() + " (train it with `run` first)");
        }
        const auto [spec, params] = load_params(ckpt);
        const ForwardFn forward = model_forward(spec, params);
        const fs::path dir = dest / id / model / ("seed" + std::to_string(seed));
        dump_images(dir / "clean.npy", batch);
        dump_labels(dir / "labels.npy", batch);
        for (double e : cfg.attack_epsilons) {
          for (const AttackSpec& a : {AttackSpec::fgsm(e), AttackSpec::pgd(e)}) {
            dump_images(dir / (file_stem_for(a.setting()) + ".npy"),
                        run_attack(a, forward, batch));
          }
        }
        out << "wrote " << dir.string() << "\n";
      }
    }
  }
  return kExitOk;
}

int cmd_synth(const SliceFlags& f, int seed, const SyntheticOptions& opts, std::ostream& out) {
  const RunConfig cfg = resolve_config(f);
  const fs::path dir = f.data_dir.empty() ? fs::path(f.out_dir.empty() ? "data" : f.out_dir)
                                          : fs::path(f.data_dir);
  fs::create_directories(dir);
  for (const auto& id : cfg.datasets) {
    const DatasetInfo& info = find_dataset(id);
    save_npz(dataset_path(dir, info), synthetic_dataset(info, static_cast<std::uint64_t>(seed), opts));
    out << "wrote " << dataset_path(dir, info).string() << "\n";
  }
  return kExitOk;
}

// --- selftest -------------------------------------------------------------

using Check = std::function<std::string()>;  // empty string on success

std::string check_permutation_invariance() {
  const Dataset ds = synthetic_dataset("selftest", 2, 1, {.train = 2, .val = 2, .test = 2});
  const Tensor images = ds.test.to_tensor();
  Xoshiro256StarStar rng(17);
  for (Arch arch : kAllArchs) {
    const ModelSpec spec = default_spec(arch, 2);
    // Weights well away from the small init so order effects are visible.
    ModelParams params = build(spec, 5);
    for (auto& [name, t] : params.tensors) {
      if (name.find("norm") != std::string::npos) continue;
      for (auto& v : t.mutable_data()) v = static_cast<float>(0.2 * rng.normal());
    }
    const Tensor base = forward(spec, params, images);
    double worst = 0;
    for (int trial = 0; trial < 5; ++trial) {
      std::vector<std::int64_t> order(static_cast<std::size_t>(spec.num_patches()));
      std::iota(order.begin(), order.end(), 0);
      rng.shuffle(std::span<std::int64_t>(order));
      ForwardOptions opts;
      opts.token_order = order;
      const Tensor permuted = forward(spec, params, images, opts);
      for (std::size_t i = 0; i < base.data().size(); ++i) {
        worst = std::max(worst, static_cast<double>(std::abs(base.data()[i] - permuted.data()[i])));
      }
    }
    const bool sensitive = arch == Arch::kMinimalVit;
    if (!sensitive && worst >= 1e-5) {
      return std::string(arch_id(arch)) + " changed by " + std::to_string(worst);
    }
    if (sensitive && worst <= 1e-3) {
      return "minimalvit ignored patch order (max change " + std::to_string(worst) + ")";
    }
  }
  return {};
}

std::string check_corruptions() {
  default_severity_table().validate();
  const Dataset ds = synthetic_dataset("selftest", 2, 2, {.train = 2, .val = 2, .test = 4});
  for (const auto& spec : corruption_grid(3)) {
    const ImageBatch a = apply(spec, ds.test);
    const ImageBatch b = apply(spec, ds.test);
    if (a.pixels != b.pixels) return spec.setting() + " is not deterministic";
    for (float v : a.pixels) {
      if (!(v >= 0.0f && v <= 1.0f)) return spec.setting() + " left [0,1]";
    }
  }
  return {};
}

std::string check_attacks() {
  const Dataset ds = synthetic_dataset("selftest", 2, 3, {.train = 2, .val = 2, .test = 4});
  const ModelSpec spec = default_spec(Arch::kZachVit, 2);
  const ModelParams params = build(spec, 9);
  const ForwardFn fwd = model_forward(spec, params);
  for (AttackKind kind : {AttackKind::kFgsm, AttackKind::kPgd}) {
    for (const AttackSpec& a : attack_grid(kind)) {
      const ImageBatch adv = run_attack(a, fwd, ds.test);
      for (std::size_t i = 0; i < adv.pixels.size(); ++i) {
        const double d = std::abs(static_cast<double>(adv.pixels[i]) - ds.test.pixels[i]);
        if (d > a.epsilon + 1e-7) return a.setting() + " exceeded its budget";
        if (adv.pixels[i] < 0.0f || adv.pixels[i] > 1.0f) return a.setting() + " left [0,1]";
      }
    }
  }
  return {};
}

std::string check_aggregation() {
  const auto r = average_ranks({0.9, 0.5, 0.9, 0.1});
  if (r != std::vector<double>{1.5, 3.0, 1.5, 4.0}) return "tied ranks are not averaged";
  const std::vector<MetricRecord> records = {
      {"breastmnist", "zachvit", 3, Regime::kClean, "", "auc", 0.1 + 0.2},
      {"breastmnist", "zachvit", 3, Regime::kFgsm, "fgsm:1/255", "auc", 1.0 / 3.0}};
  std::string csv(kRecordHeader);
  csv += "\n";
  for (const auto& rec : records) csv += record_to_csv(rec) + "\n";
  if (parse_records(csv) != records) return "record CSV does not round-trip";
  return {};
}

std::string check_archive_round_trip() {
  const fs::path dir = fs::temp_directory_path() /
                       ("permubench-selftest-" + std::to_string(::getpid()));
  fs::create_directories(dir);
  const Dataset ds = synthetic_dataset("breastmnist", 2, 4, {.train = 4, .val = 2, .test = 2});
  save_npz(dir / "breastmnist.npz", ds);
  const Dataset back = load_npz(dir / "breastmnist.npz");
  fs::remove_all(dir);
  if (back.train.pixels != ds.train.pixels || back.test.labels != ds.test.labels) {
    return "npz archive does not round-trip";
  }
  return {};
}

}  // namespace

bool selftest(std::ostream& out) {
  const std::vector<std::pair<const char*, Check>> checks = {
      {"permutation invariance", check_permutation_invariance},
      {"corruption determinism and range", check_corruptions},
      {"attack budgets", check_attacks},
      {"rank and record arithmetic", check_aggregation},
      {"archive round trip", check_archive_round_trip},
  };
  bool ok = true;
  for (const auto& [name, check] : checks) {
    std::string problem;
    try {
      problem = check();
    } catch (const std::exception& e) {
      problem = e.what();
    }
    out << (problem.empty() ? "PASS " : "FAIL ") << name;
    if (!problem.empty()) out << ": " << problem;
    out << "\n";
    ok = ok && problem.empty();
  }
  return ok;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Robustness benchmark for compact image classifiers", "permubench"};
  app.require_subcommand(1);

  SliceFlags flags;
  std::string report_dir, source = "auto", split = "test", dump_dir, means;
  int count = 8, seed = 3;
  SyntheticOptions synth;

  auto* run = app.add_subcommand("run", "train and evaluate the (sliced) matrix");
  add_slice_flags(run, flags, true);

  auto* rep = app.add_subcommand("report", "write tables, ranks, retention and severity curves");
  add_slice_flags(rep, flags, false);
  rep->add_option("--report-dir", report_dir, "destination (default <out-dir>/report)");
  rep->add_option("--source", source, "auto, records or cell_means");

  auto* inj = app.add_subcommand("inject", "store external per-cell means for aggregation");
  inj->add_option("--means", means, "CSV dataset,model,regime,mean,std")->required();
  inj->add_option("--out-dir", flags.out_dir, "store directory")->required();

  auto* cor = app.add_subcommand("corrupt", "dump corrupted images as .npy");
  add_slice_flags(cor, flags, false);
  cor->add_option("--split", split, "train, val or test");
  cor->add_option("--count", count, "images per dataset")->check(CLI::PositiveNumber);
  cor->add_option("--seed", seed, "corruption seed");
  cor->add_option("--dump-dir", dump_dir, "destination (default <out-dir>/corrupt)");

  auto* att = app.add_subcommand("attack", "dump adversarial images of stored checkpoints as .npy");
  add_slice_flags(att, flags, false);
  att->add_option("--split", split, "train, val or test");
  att->add_option("--count", count, "images per dataset")->check(CLI::PositiveNumber);
  att->add_option("--dump-dir", dump_dir, "destination (default <out-dir>/attack)");

  auto* syn = app.add_subcommand("synth", "write stand-in archives in the MedMNIST layout");
  add_slice_flags(syn, flags, false);
  syn->add_option("--seed", seed, "generator seed");
  syn->add_option("--train", synth.train, "training images")->check(CLI::PositiveNumber);
  syn->add_option("--val", synth.val, "validation images")->check(CLI::PositiveNumber);
  syn->add_option("--test", synth.test, "test images")->check(CLI::PositiveNumber);

  auto* self = app.add_subcommand("selftest", "run the fast invariant checks");

  std::vector<const char*> argv;
  argv.push_back("permubench");
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kExitUsage;
  }

  try {
    if (run->parsed()) return cmd_run(flags, out, err);
    if (rep->parsed()) return cmd_report(flags, report_dir, source, out);
    if (inj->parsed()) {
      inject(means, flags.out_dir);
      out << "wrote " << (fs::path(flags.out_dir) / "cell_means.csv").string() << "\n";
      return kExitOk;
    }
    if (cor->parsed()) return cmd_corrupt(flags, split, count, seed, dump_dir, out);
    if (att->parsed()) return cmd_attack(flags, split, count, dump_dir, out);
    if (syn->parsed()) return cmd_synth(flags, seed, synth, out);
    if (self->parsed()) return selftest(out) ? kExitOk : kExitFailure;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitUsage;
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run_cli(args, out, err);
}

}  // namespace permubench
