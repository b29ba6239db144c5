#include <filesystem>
#include <ostream>

#include <fmt/format.h>
#include <fmt/ostream.h>

#include "CLI11.hpp"
#include "transnet/error.hpp"
#include "transnet_cli/commands.hpp"

namespace transnet::cli {

namespace {

void add_run_options(CLI::App& sub, RunConfig& cfg, std::string& synth, std::string& input,
                     std::string& resample, bool with_variant) {
  sub.add_option("--preset", cfg.preset, "Base preset (alexnet_mini, zfnet_mini, alexnet, zfnet)")
      ->capture_default_str();
  if (with_variant) {
    sub.add_option("--variant", cfg.variant,
                   "baseline, transition, dropout, lrn, transition_nogap, or '+'-joined")
        ->capture_default_str();
  }
  sub.add_option("--data", cfg.data, "Manifest CSV (path,label,group)");
  sub.add_option("--synth", synth, "Synthetic data, e.g. n=200,size=32[,noise=0.08]");
  sub.add_option("--input", input, "Resample manifest patches to CxHxW");
  sub.add_option("--resample", resample, "crop, tile or resize")->capture_default_str();
  sub.add_flag("--grouped", cfg.grouped, "Keep manifest groups within one fold");
  sub.add_option("--k", cfg.k, "Cross-validation folds")->capture_default_str();
  sub.add_option("--epochs", cfg.train.epochs)->capture_default_str();
  sub.add_option("--lr", cfg.train.learning_rate, "Learning rate")->capture_default_str();
  sub.add_option("--momentum", cfg.train.momentum, "Nesterov momentum")->capture_default_str();
  sub.add_option("--batch", cfg.train.batch_size)->capture_default_str();
  sub.add_option("--seed", cfg.train.seed)->capture_default_str();
  sub.add_option("--out", cfg.out, "Output directory");
  sub.add_option("--jobs", cfg.jobs, "Folds trained in parallel")->capture_default_str();
  sub.add_flag("--verbose", cfg.verbose, "Print per-epoch metrics");
  sub.footer("Options may also come from --config FILE (key=value lines); flags given on the "
             "command line win.");
}

void finish_run_config(RunConfig& cfg, const std::string& synth, const std::string& input,
                       const std::string& resample) {
  if (!synth.empty()) cfg.synth = parse_synth_spec(synth);
  if (!input.empty()) cfg.input = parse_input_shape(input);
  cfg.resample = parse_resample_mode(resample);
}

}  // namespace

int run(std::vector<std::string> args, std::ostream& out, std::ostream& err) {
  try {
    args = expand_config_args(std::move(args));

    CLI::App app{"Convolutional networks with a multi-scale transition module"};
    app.name("transnet");
    app.require_subcommand(1);
    app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);

    RunConfig cfg;
    std::string synth;
    std::string input;
    std::string resample = "resize";

    auto* train = app.add_subcommand("train", "Cross-validate one preset");
    add_run_options(*train, cfg, synth, input, resample, true);
    auto* compare = app.add_subcommand("compare", "Cross-validate every variant of a preset");
    add_run_options(*compare, cfg, synth, input, resample, false);

    GradcheckOptions gc;
    std::string corrupt;
    auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference gradient checks");
    gradcheck->add_option("--tolerance", gc.layer_tolerance, "Per-layer relative error bound")
        ->capture_default_str();
    gradcheck->add_option("--graph-tolerance", gc.graph_tolerance, "End-to-end bound")
        ->capture_default_str();
    gradcheck->add_option("--step", gc.step)->capture_default_str();
    gradcheck->add_option("--seed", gc.seed)->capture_default_str();
    gradcheck->add_option("--coords", gc.coords_per_tensor, "Coordinates probed per tensor")
        ->capture_default_str();
    gradcheck->add_option("--corrupt", corrupt)->group("");

    std::string arch_preset = "alexnet_mini";
    std::string arch_variant = "baseline";
    std::string arch_input = "3x64x64";
    std::size_t arch_classes = 2;
    auto* dump = app.add_subcommand("dump-arch", "Print a preset's layer table");
    dump->add_option("--preset", arch_preset)->capture_default_str();
    dump->add_option("--variant", arch_variant)->capture_default_str();
    dump->add_option("--input", arch_input, "CxHxW")->capture_default_str();
    dump->add_option("--classes", arch_classes)->capture_default_str();

    SynthSpec synth_spec;
    std::uint64_t synth_seed = 0;
    std::string synth_format = "rawf32";
    std::filesystem::path synth_out;
    auto* gen = app.add_subcommand("synth", "Write the synthetic texture set with a manifest");
    gen->add_option("--n", synth_spec.n, "Total samples")->capture_default_str();
    gen->add_option("--size", synth_spec.size)->capture_default_str();
    gen->add_option("--noise", synth_spec.noise)->capture_default_str();
    gen->add_option("--seed", synth_seed)->capture_default_str();
    gen->add_option("--format", synth_format, "rawf32 or pgm")->capture_default_str();
    gen->add_option("--out", synth_out)->required();

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
      app.parse(reversed);
    } catch (const CLI::ParseError& e) {
      const int code = app.exit(e, out, err);
      return code == 0 ? kExitOk : kExitConfigError;
    }

    if (train->parsed() || compare->parsed()) {
      cfg.command = train->parsed() ? "train" : "compare";
      finish_run_config(cfg, synth, input, resample);
      return train->parsed() ? cmd_train(cfg, out) : cmd_compare(cfg, out);
    }
    if (gradcheck->parsed()) {
      if (!corrupt.empty()) gc.corrupt = corrupt;
      return cmd_gradcheck(gc, out, err);
    }
    if (dump->parsed()) {
      RunConfig view;
      view.preset = arch_preset;
      view.variant = arch_variant;
      return cmd_dump_arch(view.preset_name(), parse_input_shape(arch_input), arch_classes, out);
    }
    SynthSpec checked = parse_synth_spec(fmt::format("n={},size={},noise={}", synth_spec.n,
                                                     synth_spec.size, synth_spec.noise));
    return cmd_synth(checked, synth_seed, synth_format, synth_out, out);
  } catch (const Error& e) {
    fmt::print(err, "error: {}\n", e.what());
    return kExitConfigError;
  } catch (const std::filesystem::filesystem_error& e) {
    fmt::print(err, "error: {}\n", e.what());
    return kExitConfigError;
  }
}

}  // namespace transnet::cli
