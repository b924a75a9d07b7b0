#pragma once

// Training the toy generator with the vanilla or the re-weighted loss.
//
// Before every gradient step each sequence in the batch is scored twice with
// teacher forcing, under its clean feature and under a diffused copy; the
// resulting dependence profile gives the per-token loss weights. Weights are
// constants of the step: no gradient flows through them.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "visdep/dependence.hpp"
#include "visdep/diffusion_noise.hpp"
#include "visdep/errors.hpp"
#include "visdep/format.hpp"
#include "visdep/reweight.hpp"
#include "visdep/rng.hpp"
#include "visdep/synth.hpp"
#include "visdep/toymodel.hpp"
#include "visdep/trace.hpp"

namespace visdep {

/// Clean and noisy teacher-forced probabilities of `sequence[1..]` (BOS dropped).
inline TokenTrace make_trace(const ModelParams& p, std::string sample_id, std::span<const double> feature,
                             const std::vector<TokenId>& sequence, const std::vector<std::string>& surfaces,
                             int noise_step, const NoiseSchedule& schedule, std::uint64_t noise_seed) {
  if (sequence.size() < 2) throw UsageError("make_trace: sequence needs BOS and a target");
  TokenTrace t;
  t.sample_id = std::move(sample_id);
  t.tokens.assign(sequence.begin() + 1, sequence.end());
  if (surfaces.size() == sequence.size()) t.surfaces.assign(surfaces.begin() + 1, surfaces.end());
  else t.surfaces.assign(t.tokens.size(), std::string());
  const auto noisy = corrupt(feature, noise_step, schedule, noise_seed);
  t.p_clean = token_probabilities(p, feature, sequence);
  t.p_noisy = token_probabilities(p, noisy, sequence);
  if (t.tokens.back() == kEos) t.eos_index = t.tokens.size() - 1;
  return t;
}

enum class LrSchedule { Constant, Cosine };

inline std::string_view to_string(LrSchedule s) { return s == LrSchedule::Constant ? "constant" : "cosine"; }

inline LrSchedule parse_lr_schedule(std::string_view s) {
  if (s == "constant") return LrSchedule::Constant;
  if (s == "cosine") return LrSchedule::Cosine;
  throw UsageError("unknown lr schedule '" + std::string(s) + "' (expected constant or cosine)");
}

struct TrainConfig {
  int epochs = 2;
  int batch_size = 128;
  double learning_rate = 3e-3;
  OptimizerKind optimizer = OptimizerKind::Adam;
  LrSchedule lr_schedule = LrSchedule::Constant;
  std::uint64_t seed = 0;
  ReweightConfig reweight;
  int noise_step = kDefaultNoiseStep;
  int d_emb = 32;
  int d_hid = 64;
  double update_gate_bias = 2.0;

  void validate() const {
    if (epochs < 1) throw UsageError("epochs must be >= 1");
    if (batch_size < 1) throw UsageError("batch_size must be >= 1");
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw UsageError("learning rate must be > 0");
    if (d_emb < 1 || d_hid < 1) throw UsageError("model sizes must be >= 1");
    if (noise_step < 0 || noise_step > kDefaultNoiseSteps) throw UsageError("noise_step must lie in [0, 1000]");
    reweight.validate();
  }
};

struct TrainLogRow {
  long step = 0;
  double loss = 0.0;
  // Mean weight per class over the batch's tokens; NaN when no token had that class
  // or no profile was computed (vanilla loss).
  std::array<double, 3> mean_w{std::numeric_limits<double>::quiet_NaN(),
                               std::numeric_limits<double>::quiet_NaN(),
                               std::numeric_limits<double>::quiet_NaN()};
};

struct TrainResult {
  ModelParams params;
  std::vector<TrainLogRow> log;
};

inline ModelConfig model_config_for(const TrainConfig& cfg, int vocab, int cond_dim) {
  return {vocab, cond_dim, cfg.d_emb, cfg.d_hid, cfg.update_gate_bias};
}

/// Noise seed for one sample at one epoch of training.
inline std::uint64_t training_noise_seed(std::uint64_t seed, int epoch, const std::string& sample_id) {
  return derive_seed(derive_seed(seed, "train-noise/" + std::to_string(epoch)), sample_id);
}

inline TrainResult train(const std::vector<SyntheticScene>& corpus, const TrainConfig& cfg, int vocab_objects,
                         std::optional<ModelParams> init = std::nullopt) {
  cfg.validate();
  if (corpus.empty()) throw UsageError("train: empty corpus");
  const Vocabulary vocab(vocab_objects);
  for (const auto& s : corpus) validate(s, vocab_objects);

  TrainResult res;
  res.params = init ? std::move(*init) : init_params(model_config_for(cfg, vocab.size(), vocab_objects), cfg.seed);
  if (res.params.config().vocab != vocab.size() || res.params.config().cond_dim != vocab_objects) {
    throw UsageError("initial parameters do not match the corpus vocabulary");
  }
  ModelParams& params = res.params;
  Optimizer opt(cfg.optimizer, params);
  const NoiseSchedule schedule = make_schedule();
  Rng order_rng(derive_seed(cfg.seed, "batch-order"));

  const std::size_t n = corpus.size();
  const auto bs = static_cast<std::size_t>(cfg.batch_size);
  const std::size_t batches = (n + bs - 1) / bs;
  const long total = static_cast<long>(batches) * cfg.epochs;
  const bool profiles_needed = cfg.reweight.mode != WeightMode::Vanilla;
  std::vector<std::size_t> order(n);
  ModelParams grad = params.zeros_like();
  long step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    order_rng.shuffle(order);
    for (std::size_t b = 0; b < batches; ++b, ++step) {
      const double progress = static_cast<double>(step) / static_cast<double>(total);
      double lr = cfg.learning_rate;
      if (cfg.lr_schedule == LrSchedule::Cosine) lr *= 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
      std::fill(grad.values().begin(), grad.values().end(), 0.0);
      const std::size_t lo = b * bs;
      const std::size_t hi = std::min(n, lo + bs);
      double loss_sum = 0.0;
      std::array<double, 3> wsum{};
      std::array<std::size_t, 3> wcount{};
      for (std::size_t k = lo; k < hi; ++k) {
        const SyntheticScene& s = corpus[order[k]];
        const std::size_t T = s.caption.size() - 1;
        WeightVector w = WeightVector::ones(T);
        if (profiles_needed) {
          const TokenTrace tr = make_trace(params, s.scene_id, s.feature, s.caption, s.caption_surfaces,
                                           cfg.noise_step, schedule,
                                           training_noise_seed(cfg.seed, epoch, s.scene_id));
          const DependenceProfile prof = profile_trace(tr);
          w = training_weights(prof, cfg.reweight, progress, tr.eos_index);
          for (std::size_t t = 0; t < T; ++t) {
            wsum[class_index(prof.classes[t])] += w.weights[t];
            ++wcount[class_index(prof.classes[t])];
          }
        }
        loss_sum += sequence_loss(params, s.feature, s.caption, w.weights, &grad).loss;
      }
      const double inv_b = 1.0 / static_cast<double>(hi - lo);
      for (double& g : grad.values()) g *= inv_b;
      TrainLogRow row;
      row.step = step;
      row.loss = loss_sum * inv_b;
      for (std::size_t c = 0; c < 3; ++c) {
        if (wcount[c] > 0) row.mean_w[c] = wsum[c] / static_cast<double>(wcount[c]);
      }
      if (!std::isfinite(row.loss)) {
        throw DivergenceError("training diverged at step " + std::to_string(step) + " (epoch " +
                              std::to_string(epoch) + "): non-finite loss");
      }
      opt.step(params, grad, lr);
      if (!params.all_finite()) {
        throw DivergenceError("training diverged at step " + std::to_string(step) + ": non-finite parameter");
      }
      res.log.push_back(row);
    }
  }
  return res;
}

inline void write_train_log(const std::vector<TrainLogRow>& log, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write training log: " + path.string());
  out << "step,loss,mean_w_pos,mean_w_inv,mean_w_neg\n";
  for (const auto& r : log) {
    out << r.step << ',' << fmt_double(r.loss) << ',' << fmt_double(r.mean_w[0]) << ','
        << fmt_double(r.mean_w[1]) << ',' << fmt_double(r.mean_w[2]) << '\n';
  }
  if (!out) throw DataError("write failed: " + path.string());
}

}  // namespace visdep
