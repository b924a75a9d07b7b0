#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "visdep/pipeline.hpp"
#include "visdep/toymodel.hpp"
#include "visdep/train.hpp"
#include "test_util.hpp"

using namespace visdep;

namespace {

struct Instance {
  ModelParams params;
  std::vector<double> cond;
  std::vector<TokenId> seq;
  std::vector<double> weights;
};

Instance random_instance(std::uint64_t seed) {
  Rng rng(seed);
  ModelConfig cfg{9, 6, 4, 5, 0.5};
  Instance in{init_params(cfg, seed), {}, {0}, {}};
  // scale up so gates are away from saturation and gradients are not tiny
  for (double& v : in.params.values()) v += 0.3 * (2.0 * rng.uniform() - 1.0);
  for (int i = 0; i < 6; ++i) in.cond.push_back(rng.normal());
  for (int t = 0; t < 5; ++t) in.seq.push_back(static_cast<TokenId>(rng.below(9)));
  for (int t = 0; t < 5; ++t) in.weights.push_back(0.5 + rng.uniform());
  return in;
}

// Small model trained on a small corpus, shared across tests.
const TrainResult& trained() {
  static const TrainResult r = [] {
    CorpusConfig cc;
    cc.num_scenes = 1500;
    TrainConfig tc;
    tc.batch_size = 32;
    tc.learning_rate = 2e-2;
    tc.lr_schedule = LrSchedule::Cosine;
    tc.epochs = 3;
    return train(generate_corpus(cc), tc, cc.vocab_objects);
  }();
  return r;
}

}  // namespace

TEST(Forward, NormalizedPositiveDeterministic) {
  const auto in = random_instance(1);
  const std::vector<TokenId> prefix{0, 3, 4};
  const auto p = forward(in.params, in.cond, prefix);
  ASSERT_EQ(p.size(), 9u);
  EXPECT_NEAR(std::accumulate(p.begin(), p.end(), 0.0), 1.0, 1e-9);
  for (double v : p) EXPECT_GT(v, 0.0);
  EXPECT_EQ(p, forward(in.params, in.cond, prefix));
}

TEST(Forward, ShapeErrors) {
  const auto in = random_instance(2);
  EXPECT_THROW(forward(in.params, std::vector<double>(5, 0.0), std::vector<TokenId>{0}), UsageError);
  EXPECT_THROW(forward(in.params, in.cond, std::vector<TokenId>{}), UsageError);
  EXPECT_THROW(forward(in.params, in.cond, std::vector<TokenId>{0, 99}), UsageError);
}

TEST(SequenceLoss, OnesEqualsMeanCrossEntropy) {
  const auto in = random_instance(3);
  const auto probs = token_probabilities(in.params, in.cond, in.seq);
  double ce = 0.0;
  for (double p : probs) ce -= std::log(p);
  ce /= static_cast<double>(probs.size());
  const auto r = sequence_loss(in.params, in.cond, in.seq, std::vector<double>(5, 1.0), nullptr);
  EXPECT_NEAR(r.loss, ce, 1e-12);
}

TEST(SequenceLoss, WeightedSumFromLogProbs) {
  const auto in = random_instance(4);
  auto w = std::vector<double>(5, 1.0);
  w[2] = 2.0;
  const auto r = sequence_loss(in.params, in.cond, in.seq, w, nullptr);
  double expect = 0.0;
  for (std::size_t t = 0; t < 5; ++t) expect -= w[t] * r.log_probs[t];
  EXPECT_NEAR(r.loss, expect / 5.0, 1e-14);
  const auto probs = token_probabilities(in.params, in.cond, in.seq);
  for (std::size_t t = 0; t < 5; ++t) EXPECT_NEAR(std::exp(r.log_probs[t]), probs[t], 1e-12);
}

TEST(SequenceLoss, LengthMismatch) {
  const auto in = random_instance(5);
  EXPECT_THROW(sequence_loss(in.params, in.cond, in.seq, std::vector<double>(4, 1.0), nullptr), UsageError);
}

TEST(SequenceLoss, GradientMatchesFiniteDifferences) {
  for (std::uint64_t seed : {10u, 11u, 12u}) {
    auto in = random_instance(seed);
    ModelParams grad = in.params.zeros_like();
    sequence_loss(in.params, in.cond, in.seq, in.weights, &grad);
    const double eps = 1e-4;
    for (std::size_t b = 0; b < ModelParams::kNumBlocks; ++b) {
      const auto blk = static_cast<Block>(b);
      auto vals = in.params.block(blk);
      const auto g = grad.block(blk);
      double diff2 = 0.0, norm_a = 0.0, norm_n = 0.0;
      for (std::size_t i = 0; i < vals.size(); ++i) {
        const double keep = vals[i];
        vals[i] = keep + eps;
        const double up = sequence_loss(in.params, in.cond, in.seq, in.weights, nullptr).loss;
        vals[i] = keep - eps;
        const double down = sequence_loss(in.params, in.cond, in.seq, in.weights, nullptr).loss;
        vals[i] = keep;
        const double num = (up - down) / (2.0 * eps);
        diff2 += (num - g[i]) * (num - g[i]);
        norm_a += g[i] * g[i];
        norm_n += num * num;
        EXPECT_LE(std::abs(num - g[i]), 1e-4 * std::max({std::abs(num), std::abs(g[i]), 1e-4}))
            << kBlockNames[b] << "[" << i << "] seed " << seed;
      }
      EXPECT_LE(std::sqrt(diff2), 1e-4 * std::max(std::sqrt(norm_a), std::sqrt(norm_n)) + 1e-12)
          << kBlockNames[b] << " seed " << seed;
    }
  }
}

TEST(Generate, Contract) {
  const auto in = random_instance(6);
  const auto a = generate(in.params, in.cond, 0, 1, 12);
  EXPECT_EQ(a.front(), 0);
  EXPECT_TRUE(a.back() == 1 || a.size() == 12u);
  EXPECT_LE(a.size(), 12u);
  EXPECT_EQ(a, generate(in.params, in.cond, 0, 1, 12));
  EXPECT_THROW(generate(in.params, in.cond, 0, 1, 1), UsageError);
}

TEST(Checkpoint, RoundTripExact) {
  TempDir dir;
  const auto in = random_instance(7);
  save_checkpoint(in.params, dir / "ckpt.json");
  EXPECT_EQ(load_checkpoint(dir / "ckpt.json"), in.params);
}

TEST(Checkpoint, RejectsCorrupt) {
  TempDir dir;
  std::ofstream(dir / "bad.json") << "{\"format\":\"visdep-ckpt\",\"version\":1}";
  EXPECT_THROW(load_checkpoint(dir / "bad.json"), DataError);
  EXPECT_THROW(load_checkpoint(dir / "missing.json"), DataError);
}

TEST(Optimizer, SgdStep) {
  auto in = random_instance(8);
  auto grad = in.params.zeros_like();
  for (double& g : grad.values()) g = 1.0;
  const auto before = in.params;
  Optimizer(OptimizerKind::Sgd, in.params).step(in.params, grad, 0.1);
  for (std::size_t i = 0; i < before.values().size(); ++i) {
    EXPECT_DOUBLE_EQ(in.params.values()[i], before.values()[i] - 0.1);
  }
}

TEST(Optimizer, AdamFirstStepIsSignTimesLr) {
  auto in = random_instance(9);
  auto grad = in.params.zeros_like();
  for (std::size_t i = 0; i < grad.values().size(); ++i) grad.values()[i] = (i % 2 ? 3.0 : -0.5);
  const auto before = in.params;
  Optimizer(OptimizerKind::Adam, in.params).step(in.params, grad, 0.01);
  for (std::size_t i = 0; i < before.values().size(); ++i) {
    EXPECT_NEAR(in.params.values()[i], before.values()[i] - 0.01 * (i % 2 ? 1.0 : -1.0), 1e-9);
  }
}

TEST(Train, LossDecreases) {
  const auto& r = trained();
  const auto head = r.log.front().loss;
  double tail = 0.0;
  for (std::size_t i = r.log.size() - 10; i < r.log.size(); ++i) tail += r.log[i].loss / 10.0;
  EXPECT_LT(tail, 0.6 * head);
}

TEST(Train, ConditionMattersAfterTraining) {
  const auto& p = trained().params;
  CorpusConfig cc;
  cc.num_scenes = 20;
  cc.seed = 777;
  double tv_total = 0.0;
  for (const auto& s : generate_corpus(cc)) {
    // first object slot follows the opener
    std::vector<TokenId> prefix(s.caption.begin(), s.caption.begin() + (s.caption[1] == kOpenerLong[0] ? 4 : 3));
    const auto a = forward(p, s.feature, prefix);
    const auto b = forward(p, std::vector<double>(s.feature.size(), 0.0), prefix);
    double tv = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) tv += 0.5 * std::abs(a[i] - b[i]);
    tv_total += tv / 20.0;
  }
  EXPECT_GT(tv_total, 0.01);
}

TEST(Train, MentionsTrueObjectsOfCleanScene) {
  const auto& p = trained().params;
  std::vector<double> feature(40, 0.0);
  for (int o : {3, 7, 11}) feature[static_cast<std::size_t>(o)] = 1.0;
  const auto seq = generate(p, feature, kBos, kEos, kDefaultMaxLen);
  int hits = 0;
  for (int o : {3, 7, 11}) hits += std::count(seq.begin(), seq.end(), kObject0 + o) > 0 ? 1 : 0;
  EXPECT_GE(hits, 2);
}

TEST(Train, GatingLeavesTrajectoryUntouched) {
  CorpusConfig cc;
  cc.num_scenes = 300;
  const auto corpus = generate_corpus(cc);
  TrainConfig tc;
  tc.batch_size = 32;
  tc.seed = 3;
  const auto vanilla = train(corpus, tc, 40);
  tc.reweight = {WeightMode::EmphasizeNegative, 0.5, 1.0, true};
  const auto gated = train(corpus, tc, 40);
  EXPECT_EQ(vanilla.params, gated.params);
}

TEST(Train, Deterministic) {
  CorpusConfig cc;
  cc.num_scenes = 200;
  const auto corpus = generate_corpus(cc);
  TrainConfig tc;
  tc.batch_size = 16;
  tc.seed = 4;
  tc.reweight = {WeightMode::EmphasizePositive, 0.5, 0.5, true};
  EXPECT_EQ(train(corpus, tc, 40).params, train(corpus, tc, 40).params);
}

TEST(Train, NegativeWeightsLoggedAboveInvariant) {
  CorpusConfig cc;
  cc.num_scenes = 1500;
  TrainConfig tc;
  tc.batch_size = 32;
  tc.learning_rate = 2e-2;
  tc.lr_schedule = LrSchedule::Cosine;
  tc.reweight = {WeightMode::EmphasizeNegative, 0.5, 0.5, true};
  const auto r = train(generate_corpus(cc), tc, 40);
  const long half = static_cast<long>(r.log.size()) / 2;
  double neg = 0, inv = 0;
  int n_neg = 0, n_inv = 0;
  for (const auto& row : r.log) {
    if (row.step < half) {
      for (double w : row.mean_w) {
        if (std::isfinite(w)) {
          EXPECT_EQ(w, 1.0);
        }
      }
      continue;
    }
    if (std::isfinite(row.mean_w[2])) neg += row.mean_w[2], ++n_neg;
    if (std::isfinite(row.mean_w[1])) inv += row.mean_w[1], ++n_inv;
  }
  ASSERT_GT(n_neg, 0);
  ASSERT_GT(n_inv, 0);
  EXPECT_GT(neg / n_neg, 1.0);
  EXPECT_LT(inv / n_inv, 1.0);
}

TEST(Train, StepUsesFrozenWeights) {
  // One re-weighted step equals a hand-made step with the weights precomputed.
  CorpusConfig cc;
  cc.num_scenes = 8;
  const auto corpus = generate_corpus(cc);
  TrainConfig tc;
  tc.batch_size = 8;
  tc.epochs = 1;
  tc.optimizer = OptimizerKind::Sgd;
  tc.learning_rate = 0.1;
  tc.reweight = {WeightMode::EmphasizeNegative, 2.0, 0.0, true};
  const auto init = init_params(model_config_for(tc, Vocabulary(40).size(), 40), tc.seed);
  const auto r = train(corpus, tc, 40, init);

  std::vector<std::size_t> order(8);
  std::iota(order.begin(), order.end(), 0);
  Rng(derive_seed(tc.seed, "batch-order")).shuffle(order);
  const auto sched = make_schedule();
  ModelParams grad = init.zeros_like();
  for (std::size_t k : order) {
    const auto& s = corpus[k];
    const auto tr = make_trace(init, s.scene_id, s.feature, s.caption, s.caption_surfaces, tc.noise_step, sched,
                               training_noise_seed(tc.seed, 0, s.scene_id));
    const auto w = training_weights(profile_trace(tr), tc.reweight, 0.0, tr.eos_index);
    sequence_loss(init, s.feature, s.caption, w.weights, &grad);
  }
  auto expect = init;
  for (std::size_t i = 0; i < expect.values().size(); ++i) expect.values()[i] -= 0.1 * grad.values()[i] / 8.0;
  EXPECT_EQ(r.params, expect);
}

TEST(Train, Rejections) {
  TrainConfig tc;
  EXPECT_THROW(train({}, tc, 40), UsageError);
  tc.batch_size = 0;
  CorpusConfig cc;
  cc.num_scenes = 4;
  EXPECT_THROW(train(generate_corpus(cc), tc, 40), UsageError);
}

TEST(Train, DivergenceReported) {
  CorpusConfig cc;
  cc.num_scenes = 64;
  TrainConfig tc;
  tc.optimizer = OptimizerKind::Sgd;
  tc.learning_rate = 1e300;
  tc.batch_size = 8;
  EXPECT_THROW(train(generate_corpus(cc), tc, 40), DivergenceError);
}
