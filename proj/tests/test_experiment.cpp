#include "infosep/experiment.hpp"

#include "support/tiny_config.hpp"

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include <cmath>
#include <fstream>
#include <sstream>

using namespace infosep;
using namespace infosep::experiment;
using infosep::testing::tiny_config;

namespace {

config::ExperimentConfig cfg_of(const std::string& text) {
  std::istringstream in(text);
  return config::interpret(config::parse_ini(in));
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

class TempDir : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("infosep_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  fs::path dir_;
};

}  // namespace

TEST(Stats, SampleStandardDeviation) {
  const auto [m, s] = mean_std({1.0, 2.0, 3.0, 4.0});
  EXPECT_DOUBLE_EQ(m, 2.5);
  EXPECT_NEAR(s, std::sqrt(5.0 / 3.0), 1e-15);
  const auto [m1, s1] = mean_std({0.5, pipeline::kNaN});
  EXPECT_DOUBLE_EQ(m1, 0.5);
  EXPECT_TRUE(std::isnan(s1));
  EXPECT_TRUE(std::isnan(mean_std({}).first));
}

TEST(Labels, ModelLabel) {
  EXPECT_EQ(model_label(cfg_of(tiny_config())), "adverisf/two_stage");
  auto c = cfg_of(tiny_config());
  c.model.variant = pipeline::Variant::A3;
  EXPECT_EQ(model_label(c), "adverisf/two_stage/A3");
  c.model.kind = config::ModelKind::vib;
  EXPECT_EQ(model_label(c), "vib");
}

TEST(Records, JsonSchemaAndNulls) {
  pipeline::RunRecord rec;
  rec.model = "mlp";
  rec.seed = 4;
  rec.r2_test = 0.25;
  rec.trace.total = {1.0, pipeline::kNaN};
  const auto j = record_to_json(rec, {"n", "abc", "N=30", "mlp"});
  EXPECT_EQ(j.at("schema_version"), "1.0");
  EXPECT_EQ(j.at("kind"), "run_record");
  EXPECT_EQ(j.at("r2").at("test"), 0.25);
  EXPECT_TRUE(j.at("r2").at("valid").is_null());
  EXPECT_TRUE(j.at("trace").at("total").at(1).is_null());
  EXPECT_FALSE(j.contains("wall_clock_s"));
}

TEST(Dataset, SplitDependsOnSeed) {
  const auto c = cfg_of(tiny_config());
  EXPECT_EQ(prepare_dataset(c.data, 1).train, prepare_dataset(c.data, 1).train);
  EXPECT_NE(prepare_dataset(c.data, 1).train, prepare_dataset(c.data, 2).train);
  EXPECT_TRUE(prepare_dataset(c.data, 1).norm.has_value());
}

TEST_F(TempDir, RunWritesRecordsAndIsByteReproducible) {
  const auto c = cfg_of(tiny_config());
  const RunOutcome a = run(c, dir_ / "a", 1);
  const RunOutcome b = run(c, dir_ / "b", 2);
  EXPECT_EQ(a.summary.n, 3);
  EXPECT_FALSE(a.any_diverged);
  for (const char* f : {"records/seed_0.json", "records/seed_1.json", "records/seed_2.json", "aggregate.json",
                        "aggregate.csv"}) {
    ASSERT_TRUE(fs::exists(dir_ / "a" / f)) << f;
    EXPECT_EQ(slurp(dir_ / "a" / f), slurp(dir_ / "b" / f)) << f;
  }
  EXPECT_TRUE(fs::exists(dir_ / "a" / "timing.csv"));
  const auto rec = nlohmann::json::parse(slurp(dir_ / "a" / "records/seed_1.json"));
  EXPECT_EQ(rec.at("seed"), 1);
  EXPECT_EQ(rec.at("config_hash"), c.hash());
  EXPECT_EQ(rec.at("trace").at("total").size(), 4u);
  // No temporary files left behind.
  for (const auto& e : fs::recursive_directory_iterator(dir_)) {
    EXPECT_EQ(e.path().string().find(".tmp"), std::string::npos) << e.path();
  }
}

TEST_F(TempDir, SweepWritesGridAndHeatmap) {
  auto c = cfg_of(tiny_config("sw", "[sweep]\naxis1 = adv.lambda: 0 | 1\naxis2 = model.d_noise: 2 | 3\n"));
  c.seeds = {0};
  const SweepOutcome out = sweep(c, dir_, 1);
  ASSERT_EQ(out.cells.size(), 4u);
  EXPECT_EQ(out.cells[1].values, (std::vector<std::string>{"0", "3"}));
  const std::string heat = slurp(dir_ / "heatmap.csv");
  EXPECT_EQ(std::count(heat.begin(), heat.end(), '\n'), 3);
  EXPECT_TRUE(fs::exists(dir_ / "sweep.csv"));
  EXPECT_TRUE(fs::exists(dir_ / "cells"));
}

TEST_F(TempDir, EmptyGridIsAConfigError) {
  EXPECT_THROW(sweep(cfg_of(tiny_config()), dir_, 1), config::ConfigError);
}

TEST_F(TempDir, AblationRunsFourVariants) {
  auto c = cfg_of(tiny_config());
  c.seeds = {0, 1};
  const AblationOutcome out = ablate(c, dir_, 1);
  ASSERT_EQ(out.variants.size(), 4u);
  EXPECT_EQ(out.variants[3].summary.label, "adverisf/two_stage/A3");
  for (const auto& r : out.variants[3].records) {
    EXPECT_EQ(r.critic_steps, 0);
    for (double v : r.trace.critic) EXPECT_EQ(v, 0.0);
  }
  const std::string csv = slurp(dir_ / "ablation.csv");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 5);
  EXPECT_NE(slurp(dir_ / "ablation.md").find("**"), std::string::npos);
}

TEST_F(TempDir, GeneratedCsvLoadsBack) {
  const auto c = cfg_of(tiny_config());
  generate_csv(c.data, dir_ / "synth.csv");
  const data::Dataset ds = data::load_csv((dir_ / "synth.csv").string(), "y");
  EXPECT_EQ(ds.rows(), 60);
  EXPECT_EQ(ds.features(), 13);
  const data::Dataset direct = data::generate_synthetic(c.data.synthetic, c.data.generator_seed);
  EXPECT_EQ(ds.X, direct.X);
}
