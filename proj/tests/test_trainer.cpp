#include <bgerase/errors.hpp>
#include <bgerase/experiment.hpp>
#include <bgerase/trainer.hpp>
#include <gtest/gtest.h>

#include <cmath>
#include <nlohmann/json.hpp>
#include <sstream>

#include "test_support.hpp"

using namespace bgerase;
using bgerase::testing::scratch_dir;
using bgerase::testing::tiny_dataset_config;
using bgerase::testing::tiny_experiment;
namespace fs = std::filesystem;

TEST(Sgd, MatchesHandUpdate) {
  std::vector<float> p{1.0f, -2.0f}, v{0.5f, 0.0f};
  const std::vector<float> g{0.25f, 1.0f};
  sgd_update(p, v, g, 0.1, 0.9, 0.01);
  // v = 0.9 v + g + 0.01 p ; p -= 0.1 v
  EXPECT_FLOAT_EQ(v[0], 0.45f + 0.25f + 0.01f);
  EXPECT_FLOAT_EQ(v[1], 1.0f - 0.02f);
  EXPECT_FLOAT_EQ(p[0], 1.0f - 0.1f * 0.71f);
  EXPECT_FLOAT_EQ(p[1], -2.0f - 0.1f * 0.98f);
}

TEST(Sgd, StepSchedule) {
  const std::vector<int> steps{20, 25};
  EXPECT_DOUBLE_EQ(scheduled_lr(0.01, steps, 0.1, 0), 0.01);
  EXPECT_DOUBLE_EQ(scheduled_lr(0.01, steps, 0.1, 19), 0.01);
  EXPECT_NEAR(scheduled_lr(0.01, steps, 0.1, 20), 0.001, 1e-15);
  EXPECT_NEAR(scheduled_lr(0.01, steps, 0.1, 29), 0.0001, 1e-15);
  EXPECT_DOUBLE_EQ(scheduled_lr(0.01, {}, 0.1, 100), 0.01);
}

TEST(HardNegative, StartsAreFarFromTheAnchor) {
  Rng rng(0);
  for (int start = 0; start < 17; ++start) {
    for (int i = 0; i < 20; ++i) {
      auto s = hard_negative_start(32, 8, 2, start, rng);
      ASSERT_TRUE(s.has_value());
      EXPECT_GE(std::abs(*s - start), 7);
      EXPECT_GE(*s, 0);
      EXPECT_LE(*s, 16);
    }
  }
  EXPECT_FALSE(hard_negative_start(16, 8, 2, 0, rng).has_value());
  EXPECT_EQ(hard_negative_start(17, 8, 2, 0, rng), 1);
}

TEST(Metrics, JsonLineCarriesSchema) {
  StepMetrics m;
  m.step = 3;
  m.loss = std::nan("");
  const auto j = nlohmann::json::parse(metrics_json_line(m, ObjectiveKind::contrastive));
  EXPECT_EQ(j.at("schema_version"), kSchemaVersion);
  EXPECT_EQ(j.at("step"), 3);
  EXPECT_TRUE(j.at("loss").is_null());
  EXPECT_TRUE(j.contains("hard_sim"));
  const auto p = nlohmann::json::parse(metrics_json_line(m, ObjectiveKind::pretext));
  EXPECT_TRUE(p.contains("consistency"));
}

class TrainerTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new fs::path(scratch_dir("trainer"));
    DatasetConfig d = tiny_dataset_config(5);
    generate_dataset(d, *dir_);
    data_ = new Dataset(Dataset::open(*dir_));
    base_ = new ExperimentConfig(tiny_experiment(d));
  }
  static void TearDownTestSuite() {
    delete data_;
    delete base_;
    fs::remove_all(*dir_);
    delete dir_;
  }
  static std::vector<const VideoRecord*> batch(std::size_t offset = 0) {
    auto train = data_->manifest().split_records(Split::train);
    return {train.begin() + offset, train.begin() + offset + 4};
  }
  static fs::path* dir_;
  static Dataset* data_;
  static ExperimentConfig* base_;
};

fs::path* TrainerTest::dir_ = nullptr;
Dataset* TrainerTest::data_ = nullptr;
ExperimentConfig* TrainerTest::base_ = nullptr;

TEST_F(TrainerTest, StepsAreDeterministic) {
  Trainer a(*base_, *data_), b(*base_, *data_);
  for (std::size_t s = 0; s < 3; ++s) {
    const StepMetrics ma = a.step(batch(4 * s)), mb = b.step(batch(4 * s));
    EXPECT_EQ(ma.loss, mb.loss);
  }
  EXPECT_TRUE(std::equal(a.encoder().parameters().begin(), a.encoder().parameters().end(),
                         b.encoder().parameters().begin()));
}

TEST_F(TrainerTest, FirstLossIsNearUniform) {
  // In-batch keys all come from the same untrained encoder, so every logit is
  // about equal. The random queue fill would not be: its entries sit near zero.
  ExperimentConfig c = *base_;
  c.objective_negatives = NegativeSource::batch;
  for (double tau : {0.1, 1.0}) {
    c.objective_temperature = tau;
    Trainer t(c, *data_);
    const StepMetrics m = t.step(batch());
    // Counted over the batch: three other videos plus one hard negative per anchor.
    EXPECT_EQ(m.negatives, 4u * 4u);
    const double uniform = std::log(1.0 + static_cast<double>(m.negatives / 4));
    EXPECT_NEAR(m.loss, uniform, 0.2 * uniform) << "tau " << tau;
  }
}

TEST_F(TrainerTest, MomentumEncoderIsExponentialAverage) {
  Trainer t(*base_, *data_);
  const float keep = static_cast<float>(base_->objective_momentum);
  const float take = static_cast<float>(1.0 - base_->objective_momentum);
  for (std::size_t s = 0; s < 2; ++s) {
    const auto before = t.momentum_encoder().parameters();
    const std::vector<float> old(before.begin(), before.end());
    t.step(batch(4 * s));
    const auto online = t.encoder().parameters();
    const auto mom = t.momentum_encoder().parameters();
    for (std::size_t i = 0; i < old.size(); ++i) {
      ASSERT_EQ(mom[i], keep * old[i] + take * online[i]) << i;
    }
  }
}

TEST_F(TrainerTest, QueueNeverHoldsCurrentKeys) {
  Trainer t(*base_, *data_);
  for (std::size_t s = 0; s < 4; ++s) {
    const std::uint64_t lo = (t.steps_done() + 1) * 4 * 4, hi = lo + 16;
    for (const auto& e : t.queue().snapshot()) {
      EXPECT_FALSE(e.uid >= lo && e.uid < hi);
    }
    t.step(batch(4 * (s % 3)));
    EXPECT_EQ(t.queue().size(), t.queue().capacity());
  }
}

TEST_F(TrainerTest, DisablingBeMatchesNoneVariant) {
  ExperimentConfig off = *base_;
  off.objective_be = false;
  ExperimentConfig none = *base_;
  none.distractor_variant = DistractorVariant::none;
  none.objective_hard_negative = false;
  Trainer a(off, *data_), b(none, *data_);
  const StepMetrics ma = a.step(batch()), mb = b.step(batch());
  EXPECT_EQ(ma.loss, mb.loss);
  EXPECT_EQ(ma.negatives, 4u * 16u);
  EXPECT_TRUE(std::equal(a.encoder().parameters().begin(), a.encoder().parameters().end(),
                         b.encoder().parameters().begin()));
}

TEST_F(TrainerTest, PretextBetaZeroIsPlainPretext) {
  ExperimentConfig c = *base_;
  c.objective_kind = ObjectiveKind::pretext;
  c.objective_beta = 0.0;
  ExperimentConfig off = c;
  off.objective_be = false;
  Trainer a(c, *data_), b(off, *data_);
  const StepMetrics ma = a.step(batch()), mb = b.step(batch());
  EXPECT_EQ(ma.loss, ma.pretext);
  EXPECT_EQ(ma.loss, mb.loss);
  EXPECT_GE(ma.consistency, 0.0);

  c.objective_beta = 1.0;
  Trainer be(c, *data_);
  const StepMetrics m = be.step(batch());
  EXPECT_GE(m.consistency, 0.0);
  EXPECT_NEAR(m.loss, m.pretext + m.consistency, 1e-9 * std::abs(m.loss));
}

TEST_F(TrainerTest, CheckpointResumeIsExact) {
  ExperimentConfig c = *base_;
  c.optim_epochs = 2;
  Trainer full(c, *data_);
  full.run();

  ExperimentConfig half = c;
  half.optim_epochs = 1;
  Trainer first(half, *data_);
  first.run();
  const fs::path p = *dir_ / "half.bgck";
  Checkpoint ck = first.checkpoint();
  save_checkpoint(p, ck);
  Trainer resumed(c, *data_);
  resumed.restore(load_checkpoint(p));
  resumed.run();
  EXPECT_EQ(resumed.steps_done(), full.steps_done());
  EXPECT_TRUE(std::equal(full.encoder().parameters().begin(), full.encoder().parameters().end(),
                         resumed.encoder().parameters().begin()));
}

TEST_F(TrainerTest, MetricsStreamWritesOneLinePerStep) {
  std::ostringstream out;
  Trainer t(*base_, *data_);
  t.set_metrics_stream(&out);
  int steps = 0;
  t.run([&](const StepMetrics&) { ++steps; });
  std::istringstream in(out.str());
  std::string line;
  int lines = 0;
  while (std::getline(in, line)) {
    EXPECT_EQ(nlohmann::json::parse(line).at("schema_version"), kSchemaVersion);
    ++lines;
  }
  EXPECT_EQ(lines, steps);
  EXPECT_EQ(static_cast<std::size_t>(steps), t.steps_per_epoch());
}

TEST_F(TrainerTest, EmptyBatchIsRejected) {
  Trainer t(*base_, *data_);
  EXPECT_THROW(t.step({}), InputError);
}

TEST_F(TrainerTest, FineTuneIsDeterministicAndKeepsTheBackbone) {
  ExperimentConfig c = *base_;
  c.eval_finetune_epochs = 2;
  Rng init(1);
  Encoder<float> pre(c.encoder_config());
  pre.initialize(init);
  const FineTuneResult a = fine_tune(pre, c, *data_), b = fine_tune(pre, c, *data_);
  ASSERT_EQ(a.epoch_loss.size(), 2u);
  EXPECT_EQ(a.epoch_loss, b.epoch_loss);
  EXPECT_TRUE(std::isfinite(a.epoch_loss.back()));
  EXPECT_EQ(a.encoder.config().classifier_classes, data_->manifest().config.num_classes);

  c.eval_finetune_epochs = 1;
  c.eval_finetune_lr = 1e-30;
  const FineTuneResult frozen = fine_tune(pre, c, *data_);
  for (const ParamInfo& p : pre.layout()) {
    for (const ParamInfo& q : frozen.encoder.layout()) {
      if (q.name != p.name) continue;
      for (std::size_t i = 0; i < p.size; ++i) {
        ASSERT_NEAR(frozen.encoder.parameters()[q.offset + i], pre.parameters()[p.offset + i],
                    1e-6)
            << p.name;
      }
    }
  }

  const ProbeResult r = fine_tune_predict(a.encoder, *base_, *data_, Split::test_inbias);
  EXPECT_EQ(r.predictions.size(), data_->manifest().split_records(Split::test_inbias).size());
  EXPECT_GE(r.top1, 0.0);
  EXPECT_LE(r.top1, 1.0);
  EXPECT_THROW(fine_tune_predict(pre, *base_, *data_, Split::test_inbias), InputError);
}
