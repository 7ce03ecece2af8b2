#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "prunebench/digest.hpp"
#include "prunebench/error.hpp"
#include "prunebench/flops.hpp"
#include "prunebench/manifest.hpp"
#include "prunebench/model_zoo.hpp"
#include "prunebench/results.hpp"
#include "prunebench/runner.hpp"

using namespace prunebench;
namespace fs = std::filesystem;

namespace {

const char* kTiny = R"(# small end-to-end run
name = tiny
dataset = synthetic:classes=4,train=48,test=24,size=8,seed=5
model = resnet8-cifar
seeds = 1
batch_size = 16
scratch.epochs = 2
scratch.init_lr = 1e-1
scratch.final_lr = 1e-2
prune.ratio = 0.5
prune.epoch = 1
ft.init_lr = 1e-1
ft.epochs = 3
)";

class RunnerTest : public ::testing::Test {
 protected:
  void SetUp() override {
    work_ = fs::temp_directory_path() /
            ("prunebench_test_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(work_);
    fs::create_directories(work_);
  }
  void TearDown() override { fs::remove_all(work_); }

  Runner runner(const fs::path& sub = "work") { return Runner(RunnerOptions{work_ / sub, nullptr, 500}); }

  fs::path work_;
};

std::string slurp(const fs::path& p) {
  std::ifstream f(p);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

}  // namespace

TEST(ManifestText, ParseCanonicalAndHash) {
  const Manifest m = Manifest::parse(kTiny);
  EXPECT_EQ(m.get("model"), "resnet8-cifar");
  Manifest renamed = m;
  renamed.set("name", "other");
  renamed.set("plan.layer1.0.conv1", "0,1");
  EXPECT_EQ(renamed.hash(), m.hash());
  EXPECT_EQ(m.canonical().find("name="), std::string::npos);
  EXPECT_EQ(Manifest::parse(m.to_text()).hash(), m.hash());
  EXPECT_EQ(m.hash(), sha256_hex(m.canonical()));
  Manifest changed = m;
  changed.set("ft.epochs", "4");
  EXPECT_NE(changed.hash(), m.hash());
  EXPECT_THROW(Manifest::parse("colour = red\n"), ConfigError);
  EXPECT_THROW(Manifest::parse("model = a\nmodel = b\n"), ConfigError);
  EXPECT_THROW(Manifest::parse("model\n"), ConfigError);
  EXPECT_THROW(m.get("ft.extend"), ConfigError);
}

TEST(ManifestText, ResolveValidates) {
  const ExperimentConfig c = resolve(Manifest::parse(kTiny));
  EXPECT_EQ(c.plan().pretrain.to_string(), "0:1e-1");
  EXPECT_EQ(c.plan().finetune.to_string(), "0:1e-1,2:1e-2");
  Manifest bad = Manifest::parse(kTiny);
  bad.set("ft.kind", "cosine");
  bad.set("ft.extend", "2");
  EXPECT_THROW(resolve(bad), ConfigError);
  bad = Manifest::parse(kTiny);
  bad.set("batch_size", "1");
  EXPECT_THROW(resolve(bad), ConfigError);
  bad = Manifest::parse(kTiny);
  bad.set("prune.epoch", "3");
  EXPECT_THROW(resolve(bad), ConfigError);
}

TEST(Results, RowsFormatAndParseBack) {
  RunRecord r;
  r.manifest_hash = "abc";
  r.seed = 2;
  r.phases.push_back({"finetune", LRSchedule::parse_step("0:1e-1,1:1e-2", 2), {50.0, 62.5}});
  r.post_prune_accuracy = 10.0;
  r.final_accuracy = 62.5;
  r.trainability = 50.0;
  r.total_epochs = 3;
  r.total_training_macs = 1.5e9;
  const std::string rows = format_run_rows(r, "demo");
  EXPECT_EQ(rows,
            "abc,2,0,prune,-,10.0000\n"
            "abc,2,1,finetune,1e-1,50.0000\n"
            "abc,2,2,finetune,1e-2,62.5000\n"
            "abc,2,-,summary,-,62.5000,T=50.0000,total_epochs=3,total_MACs=1.500000e+09,name=demo\n");
  const ResultsTable t = parse_results(std::string(kResultsHeader) + "\n" + rows);
  ASSERT_EQ(t.curves.size(), 3u);
  ASSERT_EQ(t.summaries.size(), 1u);
  EXPECT_EQ(t.summaries[0].name, "demo");
  EXPECT_DOUBLE_EQ(t.summaries[0].trainability, 50.0);
  EXPECT_EQ(t.curves[2].lr, "1e-2");
  EXPECT_NE(render_report(t).find("demo"), std::string::npos);
  const std::string curves = render_curves_csv(t);
  EXPECT_NE(curves.find("abc,demo,finetune,2,1e-2,1,62.5"), std::string::npos) << curves;
  EXPECT_THROW(parse_results("bad header\n"), FormatError);
}

TEST_F(RunnerTest, RunsAreByteIdenticalAcrossInvocations) {
  const Manifest m = Manifest::parse(kTiny);
  const fs::path a = work_ / "a.csv", b = work_ / "b.csv";
  runner("w1").run_all(m, a);
  runner("w2").run_all(m, b);
  EXPECT_EQ(slurp(a), slurp(b));
  // A cached base reproduces the same rows too.
  const fs::path c = work_ / "c.csv";
  runner("w1").run_all(m, c);
  EXPECT_EQ(slurp(a), slurp(c));
  EXPECT_EQ(slurp(a).substr(0, std::string(kResultsHeader).size()), kResultsHeader);
}

TEST_F(RunnerTest, RecordBookkeepingMatchesFlops) {
  const Manifest m = Manifest::parse(kTiny);
  Runner r = runner();
  const RunRecord rec = r.run(m, 1);
  const ExperimentConfig cfg = resolve(m);
  const auto& data = r.dataset(cfg.dataset);
  const ModelGraph dense = build_model(cfg.model, data.input_spec());
  const double f1 = static_cast<double>(count_flops(dense).total_macs);
  const double f2 = static_cast<double>(count_flops(prune_architecture(dense, cfg.prune)).total_macs);
  EXPECT_DOUBLE_EQ(rec.total_training_macs, (1 * f1 + 3 * f2) * 48);
  EXPECT_EQ(rec.total_epochs, 4);
  ASSERT_NE(rec.find_phase("finetune"), nullptr);
  EXPECT_EQ(rec.find_phase("finetune")->accuracy.size(), 3u);
  EXPECT_EQ(rec.find_phase("pretrain")->accuracy.size(), 1u);
  EXPECT_DOUBLE_EQ(rec.final_accuracy, rec.find_phase("finetune")->accuracy.back());
  const auto& ft = rec.find_phase("finetune")->accuracy;
  EXPECT_DOUBLE_EQ(rec.trainability, (ft[0] + ft[1]) / 2);
  const SetupFacts f = setup_facts(m);
  EXPECT_NEAR(f.total_training_macs, rec.total_training_macs, 1e-6 * rec.total_training_macs);
  EXPECT_EQ(classify_setup(m, m).to_string(), "S4.2 [SX-A] [SX-B]");
}

TEST_F(RunnerTest, ZeroRatioPruneKeepsBaseAccuracy) {
  Manifest m = Manifest::parse(kTiny);
  m.set("prune.ratio", "0");
  Runner r = runner();
  const ExperimentConfig cfg = resolve(m);
  const BaseModel base = r.pretrain(cfg, 1);
  const PrunedModel p = r.prune(cfg, base, 1);
  EXPECT_DOUBLE_EQ(p.accuracy, r.evaluate(base.model, r.dataset(cfg.dataset)));
  EXPECT_DOUBLE_EQ(p.accuracy, base.pretrain_acc.back());
}

TEST_F(RunnerTest, ScratchRunsUseFreshInitAndAcceptZeroEpochs) {
  Manifest m = Manifest::parse(kTiny);
  m.set("pipeline", "scratch");
  m.set("scratch.epochs", "0");
  m.erase("prune.epoch");
  m.erase("ft.init_lr");
  m.erase("ft.epochs");
  Runner r = runner();
  const RunRecord rec = r.run(m, 1);
  EXPECT_EQ(rec.total_epochs, 0);
  EXPECT_EQ(rec.total_training_macs, 0.0);

  // The scratch model is initialised on the small shapes, so it is not a
  // slice of the dense initialisation.
  const ExperimentConfig cfg = resolve(m);
  ModelGraph dense = build_model(cfg.model, r.dataset(cfg.dataset).input_spec());
  init_parameters(dense, derive_seed("init", 1));
  const ModelGraph sliced = rebuild_small_dense(dense, plan(dense, cfg.prune));
  ModelGraph fresh = prune_architecture(dense, cfg.prune);
  init_parameters(fresh, derive_seed("init", 1));
  EXPECT_NE(sliced.params(), fresh.params());
}

TEST_F(RunnerTest, BaseHashIsVerified) {
  Manifest m = Manifest::parse(kTiny);
  Runner r = runner();
  const RunRecord rec = r.run(m, 1);
  Manifest pinned = m;
  pinned.set("base.hash", rec.base_model_hash);
  EXPECT_EQ(r.run(pinned, 1).final_accuracy, rec.final_accuracy);
  // Corrupt the cached file: the content hash no longer matches.
  const fs::path file = work_ / "work" / "bases" / (rec.base_model_hash + ".ckpt");
  {
    std::fstream f(file, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(-1, std::ios::end);
    f.put('\x7f');
  }
  try {
    r.run(pinned, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("base model hash mismatch"), std::string::npos);
  }
  pinned.set("base.hash", "a,b");
  EXPECT_THROW(r.run(pinned, 1), ConfigError);
}

TEST_F(RunnerTest, ExtensionResumesFromFirstStageSnapshot) {
  const Manifest m = Manifest::parse(kTiny);
  Runner r = runner();
  const RunRecord orig = r.run(m, 1);
  EXPECT_EQ(r.extend_finetune(m, orig, 0).final_accuracy, orig.final_accuracy);

  const RunRecord ext = r.extend_finetune(m, orig, 2);
  const auto& ft = ext.find_phase("finetune")->accuracy;
  const auto& base_ft = orig.find_phase("finetune")->accuracy;
  ASSERT_EQ(ft.size(), 5u);
  EXPECT_EQ(ft[0], base_ft[0]);
  EXPECT_EQ(ft[1], base_ft[1]);
  EXPECT_EQ(ext.find_phase("finetune")->schedule.to_string(), "0:1e-1,4:1e-2");
  EXPECT_EQ(ext.total_epochs, orig.total_epochs + 2);

  Manifest with_key = m;
  with_key.set("ft.extend", "2");
  EXPECT_EQ(ext.manifest_hash, with_key.hash());
  const RunRecord via_run = r.run(with_key, 1);
  EXPECT_EQ(via_run.find_phase("finetune")->accuracy, ft);

  Manifest other = m;
  other.set("ft.epochs", "4");
  EXPECT_THROW(r.extend_finetune(other, orig, 2), ConfigError);
}

TEST(CrossValidation, Decisions) {
  auto cell = [](double mean, double std) { return Summary{mean, std, 3}; };
  XvalGrid g;
  // cell[alg][recipe]
  g.cell = {{{cell(80, 0.2), cell(85, 0.2)}, {cell(78, 0.2), cell(83, 0.2)}}};
  EXPECT_EQ(decide_cross_validation(g).to_string(), "consistent winner A");
  g.cell = {{{cell(80, 1.0), cell(85, 1.0)}, {cell(80.5, 1.0), cell(85.2, 1.0)}}};
  EXPECT_EQ(decide_cross_validation(g).kind, "tie");
  g.cell = {{{cell(82, 0.1), cell(80, 0.1)}, {cell(79, 0.1), cell(86, 0.1)}}};
  const XvalVerdict v = decide_cross_validation(g);
  EXPECT_EQ(v.kind, "synergy");
  EXPECT_EQ(v.winner, "B+FT_B");
}
