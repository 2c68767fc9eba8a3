// Copyright 2026 The nlroi Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "nlroi/errors.hpp"
#include "nlroi/prng.hpp"
#include "nlroi/toy_task.hpp"

namespace nlroi {
namespace {

ToyTask default_task() { return ToyTask{}; }

TEST(ToyTask, DefaultShape) {
  const ToyTask t = default_task();
  EXPECT_EQ(t.n, 8u);
  EXPECT_EQ(t.k, 4u);
  EXPECT_EQ(t.op.d, 16u);
  EXPECT_EQ(t.op.d_f, 4u);
  EXPECT_EQ(t.op.h, 3u);
  EXPECT_EQ(t.noise_sigma, 0.1);
}

TEST(ToyTask, Validation) {
  ToyTask t;
  t.k = 17;
  EXPECT_THROW(t.validate(), ConfigError);
  t = ToyTask{};
  t.n = 1;
  EXPECT_THROW(t.validate(), ConfigError);
  t = ToyTask{};
  t.k = 1;
  EXPECT_THROW(t.validate(), ConfigError);
  Prng p(0);
  t = ToyTask{};
  t.k = 20;
  EXPECT_THROW(generate_scene(p, t), ConfigError);
}

TEST(MajoritySlots, CeilingOfSixTenths) {
  EXPECT_EQ(majority_slots(2), 2u);
  EXPECT_EQ(majority_slots(5), 3u);
  EXPECT_EQ(majority_slots(8), 5u);
  EXPECT_EQ(majority_slots(10), 6u);
  for (std::size_t n = 2; n < 200; ++n)
    ASSERT_EQ(majority_slots(n), static_cast<std::size_t>(std::ceil(0.6L * n - 1e-12L)));
}

TEST(GenerateScene, NoiselessArgmaxIsLatentClass) {
  ToyTask t;
  t.noise_sigma = 0.0;
  Prng p(1);
  const std::size_t hw = t.op.h * t.op.w;
  for (int s = 0; s < 50; ++s) {
    const Scene sc = generate_scene(p, t);
    for (std::size_t i = 0; i < t.n; ++i) {
      std::size_t best = 0;
      for (std::size_t c = 1; c < t.k; ++c)
        if (sc.features[(i * t.op.d + c) * hw] > sc.features[(i * t.op.d + best) * hw]) best = c;
      ASSERT_EQ(static_cast<int>(best), sc.latent[i]);
      for (std::size_t c = t.k; c < t.op.d; ++c) ASSERT_EQ(sc.features[(i * t.op.d + c) * hw], 0.0);
    }
  }
}

TEST(GenerateScene, LabelsAreMajorityAndFeaturesSpatiallyConstant) {
  const ToyTask t;
  Prng p(2);
  const std::size_t hw = t.op.h * t.op.w;
  for (int s = 0; s < 50; ++s) {
    const Scene sc = generate_scene(p, t);
    ASSERT_EQ(sc.features.shape(), t.op.input_shape(t.n));
    for (int l : sc.labels) ASSERT_EQ(l, sc.majority);
    for (std::size_t q = 0; q < t.n * t.op.d; ++q)
      for (std::size_t k = 1; k < hw; ++k) ASSERT_EQ(sc.features[q * hw + k], sc.features[q * hw]);
  }
}

TEST(GenerateScene, MajorityCountIsExact) {
  const ToyTask t;
  Prng p(3);
  std::vector<int> majority_hist(t.k), minority_hist(t.k);
  for (int s = 0; s < 10000; ++s) {
    const Scene sc = generate_scene(p, t);
    const auto count = std::count(sc.latent.begin(), sc.latent.end(), sc.majority);
    ASSERT_EQ(count, 5);
    ++majority_hist[static_cast<std::size_t>(sc.majority)];
    for (int c : sc.latent) ++minority_hist[static_cast<std::size_t>(c)];
  }
  for (int h : majority_hist) EXPECT_NEAR(h, 2500, 200);
}

TEST(GenerateScene, MinorityClassesDifferFromMajority) {
  const ToyTask t;
  Prng p(4);
  for (int s = 0; s < 1000; ++s) {
    const Scene sc = generate_scene(p, t);
    for (int c : sc.latent) {
      ASSERT_GE(c, 0);
      ASSERT_LT(c, static_cast<int>(t.k));
    }
  }
}

TEST(BaselineCeiling, TwoClassesIsPerfect) {
  Prng p(5);
  EXPECT_EQ(baseline_ceiling(8, 2, 2000, p), 1.0);
}

TEST(BaselineCeiling, TwoRoisAreAllMajority) {
  Prng p(6);
  EXPECT_EQ(baseline_ceiling(2, 4, 2000, p), 1.0);
}

TEST(BaselineCeiling, DefaultTaskIsThreeQuarters) {
  Prng p(7);
  EXPECT_NEAR(baseline_ceiling(8, 4, 100000, p), 5.0 / 8.0 + 3.0 / 8.0 / 3.0, 0.01);
}

TEST(Variant, NamesRoundTrip) {
  EXPECT_EQ(parse_variant("baseline"), Variant::kBaseline);
  EXPECT_EQ(parse_variant(variant_name(Variant::kNlRoi)), Variant::kNlRoi);
  EXPECT_THROW(parse_variant("nl-roi"), ConfigError);
}

TEST(ToyModel, VariantsOwnTheRightParts) {
  const ToyTask t;
  Prng p(8);
  const ToyModel base = ToyModel::init(Variant::kBaseline, t, p);
  const ToyModel aug = ToyModel::init(Variant::kNlRoi, t, p);
  EXPECT_FALSE(base.nlroi.has_value());
  ASSERT_TRUE(aug.nlroi.has_value());
  EXPECT_EQ(base.head_w.shape(), (Shape{t.k, t.op.d}));
  EXPECT_EQ(aug.head_w.shape(), (Shape{t.k, t.op.d + t.op.d_g}));
  EXPECT_EQ(base.to_named().size(), 2u);
  EXPECT_EQ(aug.to_named().size(), 10u);
}

TEST(ToyModel, NamedRoundTrip) {
  const ToyTask t;
  const ToyModel m = initial_model(Variant::kNlRoi, t, 3);
  const ToyModel back = ToyModel::from_named(m.to_named(), t);
  EXPECT_EQ(back.variant, Variant::kNlRoi);
  EXPECT_EQ(*back.nlroi, *m.nlroi);
  EXPECT_EQ(back.head_w, m.head_w);
  auto named = m.to_named();
  named.erase(named.begin());
  EXPECT_THROW(ToyModel::from_named(named, t), FormatError);
}

TEST(Train, ZeroLearningRateLeavesParametersUnchanged) {
  const ToyTask t;
  TrainHyper h;
  h.learning_rate = 0.0;
  h.steps = 20;
  h.seed = 4;
  for (Variant v : {Variant::kBaseline, Variant::kNlRoi}) {
    const TrainResult r = train(v, t, h);
    const ToyModel init = initial_model(v, t, h.seed);
    EXPECT_EQ(r.model.head_w, init.head_w);
    EXPECT_EQ(r.model.head_b, init.head_b);
    if (v == Variant::kNlRoi) {
      EXPECT_EQ(*r.model.nlroi, *init.nlroi);
    }
    EXPECT_EQ(r.losses.size(), 20u);
  }
}

TEST(Train, InitialLossIsLogK) {
  const ToyTask t;
  TrainHyper h;
  h.steps = 1;
  for (Variant v : {Variant::kBaseline, Variant::kNlRoi}) {
    const TrainResult r = train(v, t, h);
    EXPECT_NEAR(r.losses.front(), std::log(4.0), 0.1);
  }
}

TEST(Train, ProgressSeesEveryStep) {
  const ToyTask t;
  TrainHyper h;
  h.steps = 7;
  long calls = 0, last = 0;
  train(Variant::kBaseline, t, h, [&](long step, double) {
    ++calls;
    last = step;
  });
  EXPECT_EQ(calls, 7);
  EXPECT_EQ(last, 7);
}

TEST(Train, BitReproducible) {
  const ToyTask t;
  TrainHyper h;
  h.steps = 30;
  h.seed = 7;
  const TrainResult a = train(Variant::kNlRoi, t, h);
  const TrainResult b = train(Variant::kNlRoi, t, h);
  EXPECT_EQ(a.losses, b.losses);
  EXPECT_EQ(*a.model.nlroi, *b.model.nlroi);
  EXPECT_EQ(a.model.head_w, b.model.head_w);
}

TEST(Train, HugeLearningRateDiverges) {
  const ToyTask t;
  TrainHyper h;
  h.learning_rate = 1e12;
  h.steps = 50;
  EXPECT_THROW(train(Variant::kNlRoi, t, h), DivergenceError);
}

TEST(Train, RejectsBadHyperparameters) {
  const ToyTask t;
  TrainHyper h;
  h.learning_rate = -1;
  EXPECT_THROW(train(Variant::kBaseline, t, h), ConfigError);
  h = TrainHyper{};
  h.scenes_per_step = 0;
  EXPECT_THROW(train(Variant::kBaseline, t, h), ConfigError);
}

TEST(Evaluate, UntrainedModelIsAtChance) {
  const ToyTask t;
  // 1,000 scenes x 8 RoIs.
  for (Variant v : {Variant::kBaseline, Variant::kNlRoi}) {
    const double acc = evaluate(initial_model(v, t, 0), t, 1000, 0);
    EXPECT_NEAR(acc, 0.25, 0.05);
  }
}

TEST(Evaluate, ShortBaselineTrainingStaysUnderCeiling) {
  const ToyTask t;
  TrainHyper h;
  h.steps = 300;
  const TrainResult r = train(Variant::kBaseline, t, h);
  EXPECT_LE(evaluate(r.model, t, 1000, 1), 0.75 + 0.03);
}

}  // namespace
}  // namespace nlroi
