#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "transnet/checkpoint.hpp"
#include "transnet/error.hpp"
#include "transnet/data.hpp"
#include "transnet_cli/commands.hpp"

namespace transnet::cli {
namespace {

namespace fs = std::filesystem;

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result invoke(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run(std::move(args), out, err);
  return {code, out.str(), err.str()};
}

class TempDir {
 public:
  TempDir() {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    path_ = fs::temp_directory_path() /
            (std::string("transnet_cli_") + info->test_suite_name() + "_" + info->name());
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }
  std::string str(const std::string& child) const { return (path_ / child).string(); }

 private:
  fs::path path_;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::vector<std::string> lines(const fs::path& p) {
  std::istringstream in(slurp(p));
  std::vector<std::string> out;
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

std::vector<std::string> tree(const fs::path& root) {
  std::vector<std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    files.push_back(fs::relative(e.path(), root).string());
  }
  std::sort(files.begin(), files.end());
  return files;
}

std::vector<std::string> small_train(const std::string& out) {
  return {"train", "--preset", "alexnet_mini", "--variant", "transition", "--synth", "n=40,size=16",
          "--k", "2", "--epochs", "5", "--lr", "0.01", "--seed", "7", "--out", out};
}

// ---------------------------------------------------------------------------
// Argument handling

TEST(Cli, HelpAndUsageErrors) {
  EXPECT_EQ(invoke({"--help"}).code, kExitOk);
  EXPECT_EQ(invoke({}).code, kExitConfigError);
  EXPECT_EQ(invoke({"frobnicate"}).code, kExitConfigError);
  EXPECT_EQ(invoke({"train", "--bogus"}).code, kExitConfigError);
}

TEST(Cli, RunConfigNeedsExactlyOneDataSource) {
  TempDir dir;
  auto none = invoke({"train", "--out", dir.str("a")});
  EXPECT_EQ(none.code, kExitConfigError);
  auto both = invoke({"train", "--synth", "n=20,size=16", "--data", dir.str("m.csv"), "--out",
                      dir.str("b")});
  EXPECT_EQ(both.code, kExitConfigError);
  EXPECT_FALSE(both.err.empty());
}

TEST(Cli, InvalidValuesAreConfigErrors) {
  TempDir dir;
  const auto base = [&](std::vector<std::string> extra) {
    std::vector<std::string> a{"train", "--synth", "n=20,size=16", "--out", dir.str("o")};
    a.insert(a.end(), extra.begin(), extra.end());
    return invoke(a).code;
  };
  EXPECT_EQ(base({"--preset", "lenet"}), kExitConfigError);
  EXPECT_EQ(base({"--variant", "wide"}), kExitConfigError);
  EXPECT_EQ(base({"--k", "1"}), kExitConfigError);
  EXPECT_EQ(base({"--lr", "-1"}), kExitConfigError);
  EXPECT_EQ(base({"--momentum", "1"}), kExitConfigError);
  EXPECT_EQ(base({"--variant", "transition", "--batch", "1"}), kExitConfigError);
  EXPECT_EQ(invoke({"train", "--synth", "n=20,size=8", "--out", dir.str("o")}).code,
            kExitConfigError);
  EXPECT_EQ(invoke({"train", "--synth", "count=3", "--out", dir.str("o")}).code,
            kExitConfigError);
}

TEST(Cli, MissingManifestIsADataError) {
  TempDir dir;
  const auto r = invoke({"train", "--data", dir.str("absent.csv"), "--out", dir.str("o")});
  EXPECT_EQ(r.code, kExitConfigError);
  EXPECT_NE(r.err.find("absent.csv"), std::string::npos) << r.err;
}

TEST(Cli, ParseHelpers) {
  EXPECT_EQ(parse_input_shape("3x64x48"), (Shape4{1, 3, 64, 48}));
  EXPECT_THROW(parse_input_shape("64x64"), ConfigError);
  const auto s = parse_synth_spec("n=50,size=24,noise=0");
  EXPECT_EQ(s.n, 50u);
  EXPECT_EQ(s.size, 24u);
  EXPECT_EQ(s.noise, 0.0);
}

// ---------------------------------------------------------------------------
// gradcheck

TEST(Cli, GradcheckReportsEveryLayerKind) {
  const auto r = invoke({"gradcheck", "--coords", "6"});
  EXPECT_EQ(r.code, kExitOk) << r.err;
  std::size_t layer_lines = 0;
  std::istringstream in(r.out);
  for (std::string l; std::getline(in, l);) layer_lines += l.find("layer/") != std::string::npos;
  EXPECT_GE(layer_lines, 9u);
  for (const char* kind : {"conv2d", "maxpool", "gap", "batchnorm", "dropout", "lrn", "dense",
                           "relu", "concat", "flatten", "softmax_ce"}) {
    EXPECT_NE(r.out.find(std::string("layer/") + kind), std::string::npos) << kind;
  }
}

TEST(Cli, GradcheckDetectsCorruptedConvolution) {
  const auto r = invoke({"gradcheck", "--coords", "6", "--corrupt", "conv2d"});
  EXPECT_EQ(r.code, kExitVerificationFailure);
  EXPECT_NE(r.err.find("conv2d"), std::string::npos) << r.err;
}

// ---------------------------------------------------------------------------
// train

TEST(Cli, TrainWritesPerFoldFiles) {
  TempDir dir;
  const auto r = invoke(small_train(dir.str("run")));
  ASSERT_EQ(r.code, kExitOk) << r.err;
  const fs::path run = dir.path() / "run";
  for (int fold : {1, 2}) {
    const auto hist = lines(run / fmt::format("fold{}_history.csv", fold));
    ASSERT_EQ(hist.size(), 6u);
    EXPECT_EQ(hist[0], "epoch,train_loss,train_acc,val_loss,val_acc");
    EXPECT_EQ(hist[5].substr(0, 2), "5,");
    const auto roc = lines(run / fmt::format("fold{}_roc.csv", fold));
    EXPECT_EQ(roc.at(0), "threshold,fpr,tpr");
    EXPECT_TRUE(fs::exists(run / fmt::format("fold{}_checkpoint", fold) / "index.txt"));
  }
  EXPECT_FALSE(fs::exists(run / "fold3_history.csv"));
  const auto summary = lines(run / "summary.csv");
  ASSERT_EQ(summary.size(), 4u);
  EXPECT_EQ(summary[0], "fold,accuracy,auc");
  EXPECT_EQ(summary[1].substr(0, 2), "1,");
  EXPECT_EQ(summary[3].substr(0, 5), "mean,");
  EXPECT_EQ(lines(run / "folds.csv"),
            (std::vector<std::string>{"fold,train_size,val_size", "1,20,20", "2,20,20"}));
}

TEST(Cli, TrainWritesOnlyInsideItsOutputDirectory) {
  TempDir dir;
  ASSERT_EQ(invoke(small_train(dir.str("run"))).code, kExitOk);
  EXPECT_EQ(tree(dir.path()).front(), "run");
  for (const auto& f : tree(dir.path())) EXPECT_EQ(f.rfind("run", 0), 0u) << f;
}

TEST(Cli, TrainIsByteIdenticalAcrossRunsAndJobCounts) {
  TempDir dir;
  ASSERT_EQ(invoke(small_train(dir.str("a"))).code, kExitOk);
  auto parallel = small_train(dir.str("b"));
  parallel.insert(parallel.end(), {"--jobs", "2"});
  ASSERT_EQ(invoke(parallel).code, kExitOk);
  const auto files = tree(dir.path() / "a");
  ASSERT_EQ(files, tree(dir.path() / "b"));
  for (const auto& f : files) {
    if (fs::is_directory(dir.path() / "a" / f)) continue;
    EXPECT_EQ(slurp(dir.path() / "a" / f), slurp(dir.path() / "b" / f)) << f;
  }
}

TEST(Cli, SummaryMatchesSavedRoc) {
  TempDir dir;
  ASSERT_EQ(invoke(small_train(dir.str("run"))).code, kExitOk);
  const auto summary = lines(dir.path() / "run" / "summary.csv");
  for (int fold : {1, 2}) {
    std::istringstream row(summary[fold]);
    std::string f, acc, auc;
    std::getline(row, f, ',');
    std::getline(row, acc, ',');
    std::getline(row, auc, ',');
    // Trapezoid over the exported curve.
    const auto roc = lines(dir.path() / "run" / fmt::format("fold{}_roc.csv", fold));
    double area = 0.0, pf = 0.0, pt = 0.0;
    for (std::size_t i = 1; i < roc.size(); ++i) {
      std::istringstream fields(roc[i]);
      std::string t, fp, tp;
      std::getline(fields, t, ',');
      std::getline(fields, fp, ',');
      std::getline(fields, tp, ',');
      const double x = std::stod(fp), y = std::stod(tp);
      area += (x - pf) * (y + pt) / 2.0;
      pf = x;
      pt = y;
    }
    EXPECT_NEAR(std::stod(auc), area, 1e-12) << fold;
    const double a = std::stod(acc);
    EXPECT_TRUE(a >= 0.0 && a <= 1.0);
  }
}

TEST(Cli, CheckpointReloadsIntoFreshStore) {
  TempDir dir;
  ASSERT_EQ(invoke(small_train(dir.str("run"))).code, kExitOk);
  const auto g = build_preset("alexnet_mini+transition", 2, {1, 1, 16, 16});
  Rng rng(123);
  auto store = init_parameters(g, rng);
  load_checkpoint(dir.path() / "run" / "fold1_checkpoint", store);
  save_checkpoint(dir.path() / "again", store);
  for (const auto& f : tree(dir.path() / "again")) {
    EXPECT_EQ(slurp(dir.path() / "again" / f), slurp(dir.path() / "run" / "fold1_checkpoint" / f))
        << f;
  }
  auto other = init_parameters(build_preset("zfnet_mini", 2, {1, 1, 16, 16}), rng);
  EXPECT_THROW(load_checkpoint(dir.path() / "run" / "fold1_checkpoint", other), DataError);
}

TEST(Cli, ConfigFileValuesYieldToFlags) {
  TempDir dir;
  std::ofstream(dir.path() / "exp.cfg") << "# experiment\npreset = zfnet_mini\nvariant=transition\n"
                                            "synth=n=20,size=16\nk=2\nepochs=4\nlr=0.01\n";
  const auto r = invoke({"train", "--config", dir.str("exp.cfg"), "--epochs", "2", "--out",
                         dir.str("run")});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  EXPECT_EQ(lines(dir.path() / "run" / "fold1_history.csv").size(), 3u);
  EXPECT_NE(slurp(dir.path() / "run" / "architecture.txt").find("transition.k7.conv"),
            std::string::npos);
  EXPECT_NE(slurp(dir.path() / "run" / "architecture.txt").find("conv1"), std::string::npos);

  std::ofstream(dir.path() / "bad.cfg") << "epochs\n";
  EXPECT_EQ(invoke({"train", "--config", dir.str("bad.cfg"), "--out", dir.str("x")}).code,
            kExitConfigError);
  EXPECT_EQ(invoke({"train", "--config", dir.str("missing.cfg"), "--out", dir.str("x")}).code,
            kExitConfigError);
}

TEST(Cli, ManifestFoldsFollowRowCount) {
  TempDir dir;
  {
    std::ofstream m(dir.path() / "manifest.csv");
    m << "path,label,group\n";
    const Tensor dark(Shape4{1, 1, 16, 16}, 0.2), light(Shape4{1, 1, 16, 16}, 0.7);
    for (int i = 0; i < 1229; ++i) {
      const std::string name = fmt::format("p{:04}.rawf32", i);
      write_rawf32(dir.path() / name, i % 2 == 0 ? dark : light);
      m << name << "," << i % 2 << ",\n";
    }
  }
  const auto r = invoke({"train", "--preset", "alexnet_mini", "--data", dir.str("manifest.csv"),
                         "--k", "5", "--epochs", "1", "--lr", "0.01", "--out", dir.str("run")});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  const auto folds = lines(dir.path() / "run" / "folds.csv");
  ASSERT_EQ(folds.size(), 6u);
  std::vector<std::size_t> val;
  for (std::size_t i = 1; i < folds.size(); ++i) {
    val.push_back(std::stoul(folds[i].substr(folds[i].rfind(',') + 1)));
  }
  std::sort(val.rbegin(), val.rend());
  EXPECT_EQ(val, (std::vector<std::size_t>{246, 246, 246, 246, 245}));
  EXPECT_EQ(lines(dir.path() / "run" / "summary.csv").size(), 7u);
}

// ---------------------------------------------------------------------------
// compare, dump-arch, synth

TEST(Cli, CompareRejectsVariantPreset) {
  TempDir dir;
  EXPECT_EQ(invoke({"compare", "--preset", "alexnet_mini+lrn", "--synth", "n=20,size=16", "--out",
                    dir.str("o")})
                .code,
            kExitConfigError);
}

TEST(Cli, CompareEmitsOneRowPerVariant) {
  TempDir dir;
  const auto r = invoke({"compare", "--preset", "zfnet_mini", "--synth", "n=20,size=16", "--k", "2",
                         "--epochs", "1", "--lr", "0.01", "--batch", "5", "--out", dir.str("cmp")});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  const auto rows = lines(dir.path() / "cmp" / "compare.csv");
  ASSERT_EQ(rows.size(), 6u);
  EXPECT_EQ(rows[0], "variant,mean_accuracy,mean_auc");
  std::vector<std::string> names;
  for (std::size_t i = 1; i < rows.size(); ++i) names.push_back(rows[i].substr(0, rows[i].find(',')));
  EXPECT_EQ(names, (std::vector<std::string>{"baseline", "transition", "dropout", "lrn",
                                             "transition_nogap"}));
  const auto arch = lines(dir.path() / "cmp" / "compare_arch.csv");
  ASSERT_EQ(arch.size(), 6u);
  EXPECT_EQ(arch[0], "variant,first_fc_input,parameters");
  EXPECT_EQ(arch[2].substr(0, arch[2].rfind(',')), "transition,96");
  EXPECT_TRUE(fs::exists(dir.path() / "cmp" / "transition_nogap" / "summary.csv"));
}

TEST(Cli, DumpArchTable) {
  const auto r = invoke({"dump-arch", "--preset", "alexnet_mini", "--variant", "transition",
                         "--input", "3x64x64"});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  for (const char* kind : {"conv3x3", "conv5x5", "conv7x7"}) {
    EXPECT_NE(r.out.find(kind), std::string::npos) << kind;
  }
  EXPECT_NE(r.out.find("first FC input length: 48"), std::string::npos) << r.out;
  EXPECT_EQ(invoke({"dump-arch", "--preset", "vgg"}).code, kExitConfigError);

  const auto base = invoke({"dump-arch", "--preset", "zfnet_mini"});
  const auto drop = invoke({"dump-arch", "--preset", "zfnet_mini", "--variant", "dropout"});
  auto total = [](const std::string& table) {
    const auto at = table.find("\ntotal");
    std::istringstream row(table.substr(at + 1, table.find('\n', at + 1) - at - 1));
    std::string last;
    for (std::string f; row >> f;) last = f;
    return last;
  };
  EXPECT_EQ(total(base.out), total(drop.out));
}

TEST(Cli, SynthWritesLoadableManifest) {
  TempDir dir;
  for (const char* format : {"rawf32", "pgm"}) {
    const auto out = dir.path() / format;
    const auto r = invoke({"synth", "--n", "10", "--size", "16", "--seed", "3", "--format", format,
                           "--out", out.string()});
    ASSERT_EQ(r.code, kExitOk) << r.err;
    const auto m = load_manifest(out / "manifest.csv");
    EXPECT_EQ(m.size(), 10u);
    EXPECT_EQ(m.histogram, (std::vector<std::size_t>{5, 5}));
    const auto d = load_dataset(m);
    // Same samples as `train --synth n=10,size=16 --seed 3` uses.
    RunConfig cfg;
    cfg.synth = SynthSpec{10, 16};
    cfg.train.seed = 3;
    cfg.k = 2;
    const auto direct = prepare_data(cfg).data;
    ASSERT_EQ(d.size(), direct.size());
    const double tol = std::string(format) == "pgm" ? 0.5 / 255.0 + 1e-12 : 1e-6;
    for (std::size_t i = 0; i < d.size(); ++i) {
      EXPECT_EQ(d.labels[i], direct.labels[i]);
      for (std::size_t j = 0; j < d.samples[i].size(); ++j) {
        ASSERT_NEAR(d.samples[i][j], direct.samples[i][j], tol);
      }
    }
  }
  EXPECT_EQ(invoke({"synth", "--n", "10", "--format", "png", "--out", dir.str("x")}).code,
            kExitConfigError);
}

}  // namespace
}  // namespace transnet::cli
