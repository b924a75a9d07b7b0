#pragma once

// Glue for the synthetic task: decode test scenes, attach dependence traces and
// score them against the scene truth.

#include <map>
#include <vector>

#include "visdep/diffusion_noise.hpp"
#include "visdep/halleval.hpp"
#include "visdep/rng.hpp"
#include "visdep/synth.hpp"
#include "visdep/toymodel.hpp"
#include "visdep/trace.hpp"
#include "visdep/train.hpp"

namespace visdep {

inline constexpr int kDefaultMaxLen = 32;

inline ObjectLexicon synthetic_lexicon(const Vocabulary& vocab) {
  std::map<TokenId, int> m;
  for (int o = 0; o < vocab.num_objects(); ++o) m[vocab.object_token(o)] = o;
  return ObjectLexicon::by_token(std::move(m));
}

inline std::uint64_t generation_noise_seed(std::uint64_t seed, const std::string& sample_id) {
  return derive_seed(derive_seed(seed, "gen-noise"), sample_id);
}

/// Greedy generations for `scenes`, each re-scored under clean and noised features.
inline TraceFile generate_traces(const ModelParams& params, const std::vector<SyntheticScene>& scenes,
                                 int noise_step, std::uint64_t seed, int max_len = kDefaultMaxLen) {
  const Vocabulary vocab(params.config().cond_dim);
  const NoiseSchedule schedule = make_schedule();
  TraceFile f;
  f.header.noise_step = noise_step;
  f.header.generator = "visdep toy model, greedy decode, teacher-forced rescoring";
  for (const auto& s : scenes) {
    const auto seq = generate(params, s.feature, kBos, kEos, max_len);
    f.traces.push_back(make_trace(params, s.scene_id, s.feature, seq, vocab.surfaces(seq), noise_step, schedule,
                                  generation_noise_seed(seed, s.scene_id)));
  }
  return f;
}

/// Teacher-forced traces of the corpus captions themselves.
inline TraceFile caption_traces(const ModelParams& params, const std::vector<SyntheticScene>& scenes, int noise_step,
                                std::uint64_t seed) {
  const NoiseSchedule schedule = make_schedule();
  TraceFile f;
  f.header.noise_step = noise_step;
  f.header.generator = "visdep toy model, teacher-forced corpus captions";
  for (const auto& s : scenes) {
    f.traces.push_back(make_trace(params, s.scene_id, s.feature, s.caption, s.caption_surfaces, noise_step, schedule,
                                  derive_seed(derive_seed(seed, "analyze"), s.scene_id)));
  }
  return f;
}

inline std::vector<ObjectSet> truths_of(const std::vector<SyntheticScene>& scenes) {
  std::vector<ObjectSet> out;
  for (const auto& s : scenes) out.emplace_back(s.true_objects.begin(), s.true_objects.end());
  return out;
}

inline std::vector<Response> responses_of(const TraceFile& f) {
  std::vector<Response> out;
  for (const auto& t : f.traces) out.push_back(Response::from_trace(t));
  return out;
}

inline std::vector<DependenceProfile> profiles_of(const TraceFile& f) {
  std::vector<DependenceProfile> out;
  for (const auto& t : f.traces) out.push_back(profile_trace(t));
  return out;
}

}  // namespace visdep
