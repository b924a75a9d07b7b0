#pragma once

// Training-data filtering by total visual dependence.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"

#include "visdep/dependence.hpp"
#include "visdep/diffusion_noise.hpp"
#include "visdep/errors.hpp"
#include "visdep/rng.hpp"
#include "visdep/synth.hpp"
#include "visdep/toymodel.hpp"
#include "visdep/train.hpp"

namespace visdep {

enum class FilterStrategy { RemoveHighest, RemoveLowest, RemoveRandom };

inline std::string_view to_string(FilterStrategy s) {
  switch (s) {
    case FilterStrategy::RemoveHighest: return "highest";
    case FilterStrategy::RemoveLowest: return "lowest";
    case FilterStrategy::RemoveRandom: return "random";
  }
  return "highest";
}

inline FilterStrategy parse_filter_strategy(std::string_view s) {
  if (s == "highest") return FilterStrategy::RemoveHighest;
  if (s == "lowest") return FilterStrategy::RemoveLowest;
  if (s == "random") return FilterStrategy::RemoveRandom;
  throw UsageError("unknown strategy '" + std::string(s) + "' (expected highest, lowest or random)");
}

struct SampleScore {
  std::string sample_id;
  double score = 0.0;

  bool operator==(const SampleScore&) const = default;
};

inline std::uint64_t scoring_noise_seed(std::uint64_t seed, const std::string& sample_id, int draw) {
  return derive_seed(derive_seed(seed, "score/" + std::to_string(draw)), sample_id);
}

/// Sum of teacher-forced dependence over each caption, averaged over `draws`
/// independent noise draws. Output follows corpus order.
inline std::vector<SampleScore> score_corpus(const std::vector<SyntheticScene>& corpus, const ModelParams& params,
                                             int noise_step, std::uint64_t seed, int draws = 1) {
  if (corpus.empty()) throw UsageError("score_corpus: empty corpus");
  if (draws < 1) throw UsageError("score_corpus: draws must be >= 1");
  const NoiseSchedule schedule = make_schedule();
  std::vector<SampleScore> out;
  out.reserve(corpus.size());
  for (const auto& s : corpus) {
    double total = 0.0;
    for (int k = 0; k < draws; ++k) {
      const auto tr = make_trace(params, s.scene_id, s.feature, s.caption, s.caption_surfaces, noise_step, schedule,
                                 scoring_noise_seed(seed, s.scene_id, k));
      total += sample_dependence(profile_trace(tr));
    }
    out.push_back({s.scene_id, total / draws});
  }
  return out;
}

struct FilterManifest {
  FilterStrategy strategy = FilterStrategy::RemoveHighest;
  double fraction = 0.1;
  std::uint64_t seed = 0;
  std::vector<std::string> kept;     // input order
  std::vector<std::string> removed;  // input order
  std::vector<SampleScore> scores;   // input order

  bool operator==(const FilterManifest&) const = default;
};

/// Removes round(fraction * N) samples. Highest/lowest order by score with
/// ties broken by ascending sample_id; random draws a seeded permutation of the
/// id-sorted samples.
inline FilterManifest apply_filter(const std::vector<SampleScore>& scores, FilterStrategy strategy, double fraction,
                                   std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0)) throw UsageError("fraction must lie in (0,1)");
  std::set<std::string> ids;
  for (const auto& s : scores) {
    if (!ids.insert(s.sample_id).second) throw DataError("duplicate sample_id '" + s.sample_id + "'");
    if (!std::isfinite(s.score)) throw DataError("non-finite score for '" + s.sample_id + "'");
  }
  const std::size_t n = scores.size();
  const auto k = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
  std::vector<std::size_t> rank(n);
  std::iota(rank.begin(), rank.end(), 0);
  const auto by_id = [&](std::size_t a, std::size_t b) { return scores[a].sample_id < scores[b].sample_id; };
  switch (strategy) {
    case FilterStrategy::RemoveHighest:
      std::sort(rank.begin(), rank.end(), [&](std::size_t a, std::size_t b) {
        return scores[a].score != scores[b].score ? scores[a].score > scores[b].score : by_id(a, b);
      });
      break;
    case FilterStrategy::RemoveLowest:
      std::sort(rank.begin(), rank.end(), [&](std::size_t a, std::size_t b) {
        return scores[a].score != scores[b].score ? scores[a].score < scores[b].score : by_id(a, b);
      });
      break;
    case FilterStrategy::RemoveRandom: {
      std::sort(rank.begin(), rank.end(), by_id);
      Rng rng(derive_seed(seed, "filter-random"));
      rng.shuffle(rank);
      break;
    }
  }
  std::vector<bool> drop(n, false);
  for (std::size_t i = 0; i < k; ++i) drop[rank[i]] = true;
  FilterManifest m;
  m.strategy = strategy;
  m.fraction = fraction;
  m.seed = seed;
  m.scores = scores;
  for (std::size_t i = 0; i < n; ++i) (drop[i] ? m.removed : m.kept).push_back(scores[i].sample_id);
  return m;
}

inline std::vector<SyntheticScene> filtered_corpus(const std::vector<SyntheticScene>& corpus,
                                                   const FilterManifest& m) {
  const std::set<std::string> removed(m.removed.begin(), m.removed.end());
  std::vector<SyntheticScene> out;
  for (const auto& s : corpus) {
    if (!removed.contains(s.scene_id)) out.push_back(s);
  }
  return out;
}

inline nlohmann::json to_json(const FilterManifest& m) {
  auto scores = nlohmann::json::array();
  for (const auto& s : m.scores) scores.push_back({{"sample_id", s.sample_id}, {"score", s.score}});
  return {{"strategy", to_string(m.strategy)}, {"fraction", m.fraction}, {"seed", m.seed},
          {"kept", m.kept},                    {"removed", m.removed},   {"scores", scores}};
}

inline FilterManifest manifest_from_json(const nlohmann::json& j) {
  try {
    FilterManifest m;
    m.strategy = parse_filter_strategy(j.at("strategy").get<std::string>());
    m.fraction = j.at("fraction").get<double>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.kept = j.at("kept").get<std::vector<std::string>>();
    m.removed = j.at("removed").get<std::vector<std::string>>();
    for (const auto& s : j.at("scores")) {
      m.scores.push_back({s.at("sample_id").get<std::string>(), s.at("score").get<double>()});
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("manifest: ") + e.what());
  } catch (const UsageError& e) {
    throw DataError(std::string("manifest: ") + e.what());
  }
}

inline void write_manifest(const FilterManifest& m, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write manifest: " + path.string());
  out << to_json(m).dump(2) << '\n';
  if (!out) throw DataError("write failed: " + path.string());
}

inline FilterManifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open manifest: " + path.string());
  try {
    return manifest_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError("manifest parse error: " + std::string(e.what()));
  }
}

}  // namespace visdep
