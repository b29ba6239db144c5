#include "transnet_cli/commands.hpp"

#include <atomic>
#include <exception>
#include <fstream>
#include <numeric>
#include <optional>
#include <ostream>
#include <sstream>
#include <thread>

#include <fmt/format.h>
#include <fmt/ostream.h>

#include "transnet/checkpoint.hpp"
#include "transnet/error.hpp"

namespace transnet::cli {

namespace fs = std::filesystem;

namespace {

// Fixed seed streams so every consumer of the run seed draws independently.
constexpr std::uint64_t kSynthStream = 1;
constexpr std::uint64_t kInitStream = 100;
constexpr std::uint64_t kTrainStream = 200;

const std::vector<std::string> kCompareVariants = {"baseline", "transition", "dropout", "lrn",
                                                   "transition_nogap"};

std::ofstream open_out(const fs::path& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ConfigError(fmt::format("cannot write {}", path.string()));
  return f;
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) {
    throw ConfigError(fmt::format("cannot create output directory {}", dir.string()));
  }
}

Dataset make_synth(const SynthSpec& spec, std::uint64_t seed) {
  SynthOptions opts;
  opts.noise_stdev = spec.noise;
  Dataset d = synth_generate((spec.n + 1) / 2, spec.size, mix_seed(seed, kSynthStream), opts);
  if (d.size() > spec.n) {
    std::vector<std::size_t> keep(spec.n);
    std::iota(keep.begin(), keep.end(), std::size_t{0});
    d = d.subset(keep);
  }
  return d;
}

double mean_of(const std::vector<FoldOutcome>& folds, double FoldOutcome::*field) {
  double s = 0.0;
  for (const auto& f : folds) s += f.*field;
  return s / static_cast<double>(folds.size());
}

double mean_auc(const std::vector<FoldOutcome>& folds) {
  double s = 0.0;
  for (const auto& f : folds) s += f.roc.auc;
  return s / static_cast<double>(folds.size());
}

FoldOutcome run_fold(const RunConfig& cfg, const std::string& preset, const PreparedData& p,
                     std::size_t fold, std::ostream& log) {
  const auto train_idx = p.folds.training_indices(fold);
  const auto val_idx = p.folds.validation_indices(fold);
  if (train_idx.empty() || val_idx.empty()) {
    throw DataError(fmt::format("fold {} has an empty training or validation split", fold + 1));
  }
  const Dataset train = p.data.subset(train_idx);
  const Dataset val = p.data.subset(val_idx);

  const NetGraph g = build_preset(preset, p.data.num_classes(), p.data.sample_shape());
  TrainConfig tc = cfg.train;
  tc.validate_for(g);
  Rng init(mix_seed(cfg.train.seed, kInitStream + fold));

  FoldOutcome o;
  o.fold = fold + 1;
  o.train_size = train.size();
  o.val_size = val.size();
  o.store = init_parameters(g, init);
  tc.seed = mix_seed(cfg.train.seed, kTrainStream + fold);
  o.history = fit(g, o.store, train, val, tc);

  const Evaluation ev = evaluate(g, o.store, val);
  o.accuracy = ev.accuracy;
  std::vector<int> positive(val.labels.size());
  for (std::size_t i = 0; i < positive.size(); ++i) positive[i] = val.labels[i] == 1 ? 1 : 0;
  try {
    o.roc = roc_curve(class_scores(ev.probabilities, 1), positive);
  } catch (const UsageError& e) {
    throw DataError(fmt::format("fold {}: {}", o.fold, e.what()));
  }

  if (cfg.verbose) {
    for (const auto& r : o.history) {
      fmt::print(log, "  fold {} epoch {:>3}: train_loss {:.4f} train_acc {:.3f} val_loss {:.4f} val_acc {:.3f}\n",
                 o.fold, r.epoch, r.train_loss, r.train_acc, r.val_loss, r.val_acc);
    }
  }
  fmt::print(log, "{} fold {}/{}: train {} val {} accuracy {:.4f} auc {:.4f}\n", preset, o.fold,
             p.folds.k, o.train_size, o.val_size, o.accuracy, o.roc.auc);
  return o;
}

void write_architecture(const fs::path& path, const std::string& preset, const Dataset& data) {
  const NetGraph g = build_preset(preset, data.num_classes(), data.sample_shape());
  auto f = open_out(path);
  fmt::print(f, "{}\n{}first FC input length: {}\n", preset, dump_architecture(g),
             first_dense_input_length(g));
}

}  // namespace

PreparedData prepare_data(const RunConfig& cfg) {
  PreparedData p;
  if (cfg.synth) {
    p.data = make_synth(*cfg.synth, cfg.train.seed);
    if (cfg.grouped) throw ConfigError("--grouped needs a manifest with a group column");
    p.folds = kfold_split(p.data.size(), cfg.k, cfg.train.seed);
  } else {
    const Manifest m = load_manifest(*cfg.data);
    p.data = load_dataset(m, cfg.input, cfg.resample);
    p.folds = expand_to_samples(kfold_split(m, cfg.k, cfg.train.seed, cfg.grouped), p.data);
  }
  if (p.data.num_classes() < 2) throw DataError("the dataset holds a single class");
  return p;
}

std::vector<FoldOutcome> cross_validate(const RunConfig& cfg, const std::string& preset,
                                        const PreparedData& prepared, std::ostream& log) {
  const std::size_t k = prepared.folds.k;
  std::vector<std::optional<FoldOutcome>> results(k);
  std::vector<std::string> logs(k);
  std::vector<std::exception_ptr> errors(k);

  auto work = [&](std::size_t fold) {
    std::ostringstream buf;
    try {
      results[fold] = run_fold(cfg, preset, prepared, fold, buf);
    } catch (...) {
      errors[fold] = std::current_exception();
    }
    logs[fold] = buf.str();
  };

  const std::size_t workers = std::min(cfg.jobs, k);
  if (workers <= 1) {
    for (std::size_t f = 0; f < k; ++f) {
      work(f);
      log << logs[f] << std::flush;
      if (errors[f]) std::rethrow_exception(errors[f]);
    }
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t f = next++; f < k; f = next++) work(f);
      });
    }
    for (auto& t : pool) t.join();
    for (std::size_t f = 0; f < k; ++f) {
      log << logs[f];
      if (errors[f]) std::rethrow_exception(errors[f]);
    }
  }

  std::vector<FoldOutcome> out;
  out.reserve(k);
  for (auto& r : results) out.push_back(std::move(*r));
  return out;
}

void write_fold_outputs(const fs::path& dir, const std::vector<FoldOutcome>& folds) {
  ensure_dir(dir);
  for (const auto& f : folds) {
    {
      auto h = open_out(dir / fmt::format("fold{}_history.csv", f.fold));
      fmt::print(h, "epoch,train_loss,train_acc,val_loss,val_acc\n");
      for (const auto& r : f.history) {
        fmt::print(h, "{},{},{},{},{}\n", r.epoch, r.train_loss, r.train_acc, r.val_loss,
                   r.val_acc);
      }
    }
    {
      auto roc = open_out(dir / fmt::format("fold{}_roc.csv", f.fold));
      write_roc_csv(roc, f.roc);
    }
    save_checkpoint(dir / fmt::format("fold{}_checkpoint", f.fold), f.store);
  }

  auto summary = open_out(dir / "summary.csv");
  fmt::print(summary, "fold,accuracy,auc\n");
  for (const auto& f : folds) fmt::print(summary, "{},{},{}\n", f.fold, f.accuracy, f.roc.auc);
  fmt::print(summary, "mean,{},{}\n", mean_of(folds, &FoldOutcome::accuracy), mean_auc(folds));

  auto sizes = open_out(dir / "folds.csv");
  fmt::print(sizes, "fold,train_size,val_size\n");
  for (const auto& f : folds) fmt::print(sizes, "{},{},{}\n", f.fold, f.train_size, f.val_size);
}

int cmd_train(const RunConfig& cfg, std::ostream& out) {
  cfg.validate();
  const std::string preset = cfg.preset_name();
  const PreparedData prepared = prepare_data(cfg);
  const auto sizes = prepared.folds.fold_sizes();
  fmt::print(out, "{}: {} samples, {} classes, {} folds sized {{{}}}\n", preset,
             prepared.data.size(), prepared.data.num_classes(), cfg.k, fmt::join(sizes, ","));
  ensure_dir(cfg.out);
  write_architecture(cfg.out / "architecture.txt", preset, prepared.data);
  const auto folds = cross_validate(cfg, preset, prepared, out);
  write_fold_outputs(cfg.out, folds);
  fmt::print(out, "mean accuracy {:.4f} mean auc {:.4f}; results in {}\n",
             mean_of(folds, &FoldOutcome::accuracy), mean_auc(folds), cfg.out.string());
  return kExitOk;
}

int cmd_compare(const RunConfig& cfg, std::ostream& out) {
  cfg.validate();
  const PresetSpec base = parse_preset(cfg.preset);
  if (base.variant != VariantFlags{}) {
    throw ConfigError("compare takes a base preset; it runs every variant itself");
  }
  const PreparedData prepared = prepare_data(cfg);
  ensure_dir(cfg.out);

  struct Row {
    std::string variant;
    double accuracy;
    double auc;
    std::size_t fc_input;
    std::size_t params;
  };
  std::vector<Row> rows;
  for (const auto& variant : kCompareVariants) {
    const std::string preset =
        variant == "baseline" ? base.base : fmt::format("{}+{}", base.base, variant);
    const NetGraph g =
        build_preset(preset, prepared.data.num_classes(), prepared.data.sample_shape());
    ensure_dir(cfg.out / variant);
    write_architecture(cfg.out / variant / "architecture.txt", preset, prepared.data);
    const auto folds = cross_validate(cfg, preset, prepared, out);
    write_fold_outputs(cfg.out / variant, folds);
    rows.push_back({variant, mean_of(folds, &FoldOutcome::accuracy), mean_auc(folds),
                    first_dense_input_length(g), graph_parameter_count(g)});
  }

  auto csv = open_out(cfg.out / "compare.csv");
  fmt::print(csv, "variant,mean_accuracy,mean_auc\n");
  for (const auto& r : rows) fmt::print(csv, "{},{},{}\n", r.variant, r.accuracy, r.auc);
  auto arch = open_out(cfg.out / "compare_arch.csv");
  fmt::print(arch, "variant,first_fc_input,parameters\n");
  for (const auto& r : rows) fmt::print(arch, "{},{},{}\n", r.variant, r.fc_input, r.params);

  fmt::print(out, "\n{:<18} {:>13} {:>9} {:>14} {:>10}\n", "variant", "mean_accuracy", "mean_auc",
             "first_fc_input", "parameters");
  for (const auto& r : rows) {
    fmt::print(out, "{:<18} {:>13.4f} {:>9.4f} {:>14} {:>10}\n", r.variant, r.accuracy, r.auc,
               r.fc_input, r.params);
  }
  return kExitOk;
}

int cmd_gradcheck(const GradcheckOptions& options, std::ostream& out, std::ostream& err) {
  auto results = run_layer_checks(options);
  auto presets = run_preset_checks(options);
  results.insert(results.end(), presets.begin(), presets.end());
  std::vector<const CheckResult*> failed;
  for (const auto& r : results) {
    fmt::print(out, "{:<36} max_rel_err {:.3e}  tol {:.0e}  checked {:>4}  skipped {:>2}  {}\n",
               r.name, r.max_rel_error, r.tolerance, r.checked, r.skipped,
               r.passed ? "PASS" : "FAIL");
    if (!r.passed) failed.push_back(&r);
  }
  if (failed.empty()) {
    fmt::print(out, "all {} gradient checks passed\n", results.size());
    return kExitOk;
  }
  for (const auto* r : failed) {
    fmt::print(err, "gradcheck failed: {} max relative error {:.3e} exceeds {:.0e}\n", r->name,
               r->max_rel_error, r->tolerance);
  }
  return kExitVerificationFailure;
}

int cmd_dump_arch(const std::string& preset, Shape4 input, std::size_t classes, std::ostream& out) {
  const NetGraph g = build_preset(preset, classes, input);
  fmt::print(out, "{}\n{}first FC input length: {}\n", preset, dump_architecture(g),
             first_dense_input_length(g));
  return kExitOk;
}

int cmd_synth(const SynthSpec& spec, std::uint64_t seed, const std::string& format,
              const fs::path& out_dir, std::ostream& out) {
  if (format != "rawf32" && format != "pgm") {
    throw ConfigError(fmt::format("--format must be rawf32 or pgm, got '{}'", format));
  }
  if (out_dir.empty()) throw ConfigError("--out is required");
  const Dataset d = make_synth(spec, seed);
  ensure_dir(out_dir);
  auto manifest = open_out(out_dir / "manifest.csv");
  fmt::print(manifest, "path,label,group\n");
  for (std::size_t i = 0; i < d.size(); ++i) {
    const std::string name = fmt::format("patch_{:05}.{}", i, format);
    if (format == "rawf32") {
      write_rawf32(out_dir / name, d.samples[i]);
    } else {
      write_pnm(out_dir / name, d.samples[i]);
    }
    fmt::print(manifest, "{},{},\n", name, d.labels[i]);
  }
  fmt::print(out, "wrote {} {}x{} patches and manifest.csv to {}\n", d.size(), spec.size,
             spec.size, out_dir.string());
  return kExitOk;
}

}  // namespace transnet::cli
