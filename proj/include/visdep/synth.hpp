#pragma once

// Synthetic scene captioning with controllable co-occurrence hallucinations.
//
// A scene is a set of 3-6 objects. Its "image" is the jittered multi-hot
// indicator of that set; its caption names every object in random order, joined
// by connector words. For each bias pair (A, B, p) with A present and B absent,
// B is inserted at a random position with probability p * hallucination_rate.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "visdep/errors.hpp"
#include "visdep/rng.hpp"
#include "visdep/trace.hpp"

namespace visdep {

inline constexpr int kMinObjects = 3;
inline constexpr int kMaxObjects = 6;

// Token layout: specials, then the function vocabulary, then one token per object.
inline constexpr TokenId kBos = 0;
inline constexpr TokenId kEos = 1;
inline constexpr TokenId kSep = 2;
inline constexpr TokenId kFunction0 = 3;
inline constexpr int kNumFunction = 10;
inline constexpr TokenId kObject0 = kFunction0 + kNumFunction;

inline constexpr std::array<const char*, kNumFunction> kFunctionWords = {
    "the", "scene", "contains", "there", "is", "and", "with", "near", "beside", "plus"};
inline constexpr std::array<TokenId, 3> kOpenerLong = {kFunction0, kFunction0 + 1, kFunction0 + 2};
inline constexpr std::array<TokenId, 2> kOpenerShort = {kFunction0 + 3, kFunction0 + 4};
inline constexpr TokenId kConnector0 = kFunction0 + 5;
inline constexpr int kNumConnectors = 5;

// The first sixteen names form the eight default bias pairs, (0,1), (2,3), ...
inline const std::vector<std::string>& default_object_names() {
  static const std::vector<std::string> names = {
      "fork",    "knife",   "spoon",      "bowl",     "cup",      "bottle",  "surfboard", "boat",
      "skateboard", "backpack", "zebra",  "giraffe",  "bus",      "car",     "dog",       "frisbee",
      "person",  "chair",   "table",      "couch",    "bed",      "tv",      "laptop",    "mouse",
      "keyboard", "phone",  "book",       "clock",    "vase",     "plant",   "bench",     "bird",
      "cat",     "horse",   "sheep",      "cow",      "kite",     "umbrella", "pizza",    "cake"};
  return names;
}

class Vocabulary {
 public:
  explicit Vocabulary(int num_objects) : num_objects_(num_objects) {
    if (num_objects < kMaxObjects) throw UsageError("need at least 6 object types");
    const auto& names = default_object_names();
    surfaces_ = {"<bos>", "<eos>", "<sep>"};
    for (const char* w : kFunctionWords) surfaces_.emplace_back(w);
    for (int i = 0; i < num_objects; ++i) {
      surfaces_.push_back(i < static_cast<int>(names.size()) ? names[static_cast<std::size_t>(i)]
                                                              : "object" + std::to_string(i));
    }
  }

  int size() const { return static_cast<int>(surfaces_.size()); }
  int num_objects() const { return num_objects_; }
  TokenId object_token(int object) const { return kObject0 + object; }

  std::optional<int> object_of(TokenId tok) const {
    if (tok >= kObject0 && tok < kObject0 + num_objects_) return static_cast<int>(tok - kObject0);
    return std::nullopt;
  }

  const std::string& surface(TokenId tok) const {
    if (tok < 0 || tok >= size()) throw UsageError("token id " + std::to_string(tok) + " outside vocabulary");
    return surfaces_[static_cast<std::size_t>(tok)];
  }

  std::vector<std::string> surfaces(const std::vector<TokenId>& toks) const {
    std::vector<std::string> out;
    out.reserve(toks.size());
    for (auto t : toks) out.push_back(surface(t));
    return out;
  }

 private:
  int num_objects_;
  std::vector<std::string> surfaces_;
};

struct BiasPair {
  int a = 0;
  int b = 0;
  double probability = 0.5;

  bool operator==(const BiasPair&) const = default;
};

struct CorpusConfig {
  int num_scenes = 5000;
  int vocab_objects = 40;
  std::vector<BiasPair> bias_pairs = default_bias_pairs();
  double hallucination_rate = 1.0;  // with pair probability 1 the MLE baseline sits near 16% CHAIR_I
  std::uint64_t seed = 42;
  double jitter = 0.05;

  static std::vector<BiasPair> default_bias_pairs() {
    std::vector<BiasPair> out;
    for (int i = 0; i < 8; ++i) out.push_back({2 * i, 2 * i + 1, 1.0});
    return out;
  }

  void validate() const {
    if (num_scenes < 0) throw UsageError("num_scenes must be >= 0");
    if (vocab_objects < kMaxObjects) throw UsageError("vocab_objects must be >= 6");
    if (!(hallucination_rate >= 0.0 && hallucination_rate <= 1.0)) {
      throw UsageError("hallucination_rate must lie in [0,1]");
    }
    if (!(jitter >= 0.0)) throw UsageError("jitter must be >= 0");
    for (const auto& p : bias_pairs) {
      if (p.a < 0 || p.a >= vocab_objects || p.b < 0 || p.b >= vocab_objects || p.a == p.b) {
        throw UsageError("bias pair references an invalid object id");
      }
      if (!(p.probability >= 0.0 && p.probability <= 1.0)) {
        throw UsageError("bias pair probability must lie in [0,1]");
      }
    }
  }
};

struct SyntheticScene {
  std::string scene_id;
  std::vector<int> true_objects;  // sorted ascending
  std::vector<double> feature;
  std::vector<TokenId> caption;
  std::vector<std::string> caption_surfaces;
  std::vector<std::size_t> hallucinated_positions;  // indices into caption

  bool operator==(const SyntheticScene&) const = default;
};

inline std::string scene_id(int index) {
  std::string digits = std::to_string(index);
  if (digits.size() < 6) digits.insert(0, 6 - digits.size(), '0');
  return "scene-" + digits;
}

struct Mention {
  int object;
  bool hallucinated;
};

/// BOS, an opener, the mentions joined by single connectors, EOS.
inline std::pair<std::vector<TokenId>, std::vector<std::size_t>> build_caption(
    const std::vector<Mention>& mentions, Rng& rng) {
  std::vector<TokenId> cap{kBos};
  if (rng.bernoulli(0.5)) {
    cap.insert(cap.end(), kOpenerLong.begin(), kOpenerLong.end());
  } else {
    cap.insert(cap.end(), kOpenerShort.begin(), kOpenerShort.end());
  }
  std::vector<std::size_t> hall;
  for (std::size_t i = 0; i < mentions.size(); ++i) {
    if (i > 0) cap.push_back(kConnector0 + static_cast<TokenId>(rng.below(kNumConnectors)));
    if (mentions[i].hallucinated) hall.push_back(cap.size());
    cap.push_back(kObject0 + mentions[i].object);
  }
  cap.push_back(kEos);
  return {std::move(cap), std::move(hall)};
}

namespace detail {

inline SyntheticScene make_scene(const CorpusConfig& cfg, const Vocabulary& vocab, int index) {
  Rng rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(index)));
  SyntheticScene s;
  s.scene_id = scene_id(index);
  const auto n = static_cast<int>(rng.between(kMinObjects, kMaxObjects));
  std::vector<int> universe(static_cast<std::size_t>(cfg.vocab_objects));
  for (int i = 0; i < cfg.vocab_objects; ++i) universe[static_cast<std::size_t>(i)] = i;
  rng.shuffle(universe);
  std::vector<int> order(universe.begin(), universe.begin() + n);  // mention order
  s.true_objects = order;
  std::sort(s.true_objects.begin(), s.true_objects.end());

  s.feature.assign(static_cast<std::size_t>(cfg.vocab_objects), 0.0);
  for (int o : s.true_objects) s.feature[static_cast<std::size_t>(o)] = 1.0;
  for (double& v : s.feature) v += cfg.jitter * rng.normal();

  std::vector<Mention> mentions;
  for (int o : order) mentions.push_back({o, false});
  const auto present = [&](int o) {
    return std::binary_search(s.true_objects.begin(), s.true_objects.end(), o);
  };
  for (const auto& p : cfg.bias_pairs) {
    // Always draw so the stream layout does not depend on which pairs fire.
    const double u = rng.uniform();
    const bool already = std::any_of(mentions.begin(), mentions.end(), [&](const Mention& m) { return m.object == p.b; });
    if (present(p.a) && !present(p.b) && !already && u < p.probability * cfg.hallucination_rate) {
      // the partner is named right after its anchor, as in "knife and fork"
      const auto a = std::find_if(mentions.begin(), mentions.end(), [&](const Mention& m) { return m.object == p.a; });
      mentions.insert(a + 1, Mention{p.b, true});
    }
  }
  auto [cap, hall] = build_caption(mentions, rng);
  s.caption = std::move(cap);
  s.hallucinated_positions = std::move(hall);
  s.caption_surfaces = vocab.surfaces(s.caption);
  return s;
}

}  // namespace detail

inline std::vector<SyntheticScene> generate_corpus(const CorpusConfig& cfg) {
  cfg.validate();
  const Vocabulary vocab(cfg.vocab_objects);
  std::vector<SyntheticScene> out;
  out.reserve(static_cast<std::size_t>(cfg.num_scenes));
  for (int i = 0; i < cfg.num_scenes; ++i) out.push_back(detail::make_scene(cfg, vocab, i));
  return out;
}

/// Caption naming exactly the true objects, in a seed-determined order.
inline void regenerate_clean_caption(SyntheticScene& s, const Vocabulary& vocab, std::uint64_t seed) {
  Rng rng(derive_seed(seed, "clean/" + s.scene_id));
  std::vector<int> order = s.true_objects;
  rng.shuffle(order);
  std::vector<Mention> mentions;
  for (int o : order) mentions.push_back({o, false});
  auto [cap, hall] = build_caption(mentions, rng);
  s.caption = std::move(cap);
  s.hallucinated_positions = std::move(hall);
  s.caption_surfaces = vocab.surfaces(s.caption);
}

struct Split {
  std::vector<SyntheticScene> train;
  std::vector<SyntheticScene> test;
};

/// round(test_fraction * N) scenes go to test, chosen by a seeded shuffle. Both
/// parts keep corpus order; test captions are rebuilt from the truth alone.
inline Split train_test_split(const std::vector<SyntheticScene>& scenes, double test_fraction,
                              std::uint64_t seed, int vocab_objects = 40) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw UsageError("test_fraction must lie in (0,1)");
  const std::size_t n = scenes.size();
  const auto n_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(n)));
  if (n_test == 0 || n_test == n) {
    throw UsageError("split of " + std::to_string(n) + " scenes at " + std::to_string(test_fraction) +
                     " leaves an empty side");
  }
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  Rng rng(derive_seed(seed, "split"));
  rng.shuffle(idx);
  std::vector<bool> is_test(n, false);
  for (std::size_t i = 0; i < n_test; ++i) is_test[idx[i]] = true;
  const Vocabulary vocab(vocab_objects);
  Split out;
  for (std::size_t i = 0; i < n; ++i) {
    if (is_test[i]) {
      out.test.push_back(scenes[i]);
      regenerate_clean_caption(out.test.back(), vocab, seed);
    } else {
      out.train.push_back(scenes[i]);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// JSON lines

inline nlohmann::json scene_json(const SyntheticScene& s) {
  return {{"scene_id", s.scene_id},
          {"true_objects", s.true_objects},
          {"feature", s.feature},
          {"caption", s.caption},
          {"caption_surfaces", s.caption_surfaces},
          {"hallucinated_positions", s.hallucinated_positions}};
}

inline SyntheticScene scene_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw DataError("scene record is not a JSON object");
  SyntheticScene s;
  if (!j.contains("scene_id") || !j.at("scene_id").is_string()) throw DataError("missing field 'scene_id'");
  s.scene_id = j.at("scene_id").get<std::string>();
  const auto ints = detail::get_array<std::int64_t>(j, "true_objects");
  for (auto v : ints) s.true_objects.push_back(static_cast<int>(v));
  s.feature = detail::get_array<double>(j, "feature");
  s.caption = detail::get_array<TokenId>(j, "caption");
  s.caption_surfaces = detail::get_array<std::string>(j, "caption_surfaces");
  for (auto v : detail::get_array<std::int64_t>(j, "hallucinated_positions")) {
    if (v < 0) throw DataError("hallucinated_positions: negative index");
    s.hallucinated_positions.push_back(static_cast<std::size_t>(v));
  }
  return s;
}

inline void validate(const SyntheticScene& s, int vocab_objects) {
  const auto fail = [&](const std::string& what) { throw DataError("scene '" + s.scene_id + "': " + what); };
  if (s.feature.size() != static_cast<std::size_t>(vocab_objects)) fail("feature: wrong length");
  if (s.caption.size() < 2 || s.caption.front() != kBos || s.caption.back() != kEos) {
    fail("caption: must start with BOS and end with EOS");
  }
  if (s.caption_surfaces.size() != s.caption.size()) fail("caption_surfaces: length differs from caption");
  if (s.true_objects.empty()) fail("true_objects: empty");
  for (int o : s.true_objects) {
    if (o < 0 || o >= vocab_objects) fail("true_objects: id out of range");
  }
  for (auto t : s.caption) {
    if (t < 0 || t >= kObject0 + vocab_objects) fail("caption: token id out of range");
  }
  for (auto p : s.hallucinated_positions) {
    if (p >= s.caption.size()) fail("hallucinated_positions: index out of range");
  }
}

inline void write_corpus(const std::vector<SyntheticScene>& scenes, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write corpus: " + path.string());
  for (const auto& s : scenes) out << scene_json(s).dump() << '\n';
  if (!out) throw DataError("write failed: " + path.string());
}

inline std::vector<SyntheticScene> read_corpus(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open corpus: " + path.string());
  std::vector<SyntheticScene> out;
  std::set<std::string> seen;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto where = path.string() + ":" + std::to_string(lineno) + ": ";
    try {
      auto s = scene_from_json(nlohmann::json::parse(line));
      if (!seen.insert(s.scene_id).second) throw DataError("duplicate scene_id '" + s.scene_id + "'");
      out.push_back(std::move(s));
    } catch (const nlohmann::json::exception& e) {
      throw DataError(where + e.what());
    } catch (const DataError& e) {
      throw DataError(where + e.what());
    }
  }
  if (!out.empty()) {
    const auto dim = static_cast<int>(out.front().feature.size());
    for (const auto& s : out) validate(s, dim);
  }
  return out;
}

}  // namespace visdep
