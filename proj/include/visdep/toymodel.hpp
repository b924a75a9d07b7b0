#pragma once

// A small conditional autoregressive generator.
//
// The condition vector is projected into the initial hidden state of a
// single-layer gated recurrent cell:
//
//   h_0 = tanh(Wc v + bc)
//   z = sigmoid(Wz e + Uz h + bz)      update gate
//   r = sigmoid(Wr e + Ur h + br)      reset gate
//   n = tanh(Wn e + r * (Un h) + bn)   candidate
//   h' = (1 - z) * n + z * h
//   p(y | prefix, v) = softmax(Wo h' + bo)
//
// Gradients are derived by hand and checked against finite differences in the
// test suite. All parameters live in one flat buffer so optimizers, gradient
// checks and checkpoints treat them uniformly.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "visdep/errors.hpp"
#include "visdep/rng.hpp"

namespace visdep {

struct ModelConfig {
  int vocab = 0;
  int cond_dim = 0;
  int d_emb = 32;
  int d_hid = 64;
  double update_gate_bias = 2.0;  // initial bias of z; >0 favours carrying state forward

  bool operator==(const ModelConfig&) const = default;
};

enum class Block : std::size_t {
  Embed, CondW, CondB, Wz, Wr, Wn, Uz, Ur, Un, Bz, Br, Bn, OutW, OutB, kCount
};

inline constexpr std::array<std::string_view, static_cast<std::size_t>(Block::kCount)> kBlockNames = {
    "embed", "cond_w", "cond_b", "w_z", "w_r", "w_n", "u_z", "u_r", "u_n",
    "b_z",   "b_r",    "b_n",    "out_w", "out_b"};

struct BlockShape {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t offset = 0;
  std::size_t size() const { return rows * cols; }

  bool operator==(const BlockShape&) const = default;
};

/// Row-major view into a parameter block.
template <typename T>
struct MatView {
  T* data;
  std::size_t rows;
  std::size_t cols;
  T& operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  T* row(std::size_t r) const { return data + r * cols; }
};

class ModelParams {
 public:
  ModelParams() = default;

  explicit ModelParams(const ModelConfig& cfg) : cfg_(cfg) {
    if (cfg.vocab <= 0 || cfg.cond_dim <= 0 || cfg.d_emb <= 0 || cfg.d_hid <= 0) {
      throw UsageError("model dimensions must be positive");
    }
    const auto V = static_cast<std::size_t>(cfg.vocab);
    const auto C = static_cast<std::size_t>(cfg.cond_dim);
    const auto E = static_cast<std::size_t>(cfg.d_emb);
    const auto H = static_cast<std::size_t>(cfg.d_hid);
    const std::array<std::pair<std::size_t, std::size_t>, kNumBlocks> dims = {{
        {V, E}, {H, C}, {H, 1}, {H, E}, {H, E}, {H, E}, {H, H}, {H, H}, {H, H},
        {H, 1}, {H, 1}, {H, 1}, {V, H}, {V, 1}}};
    std::size_t off = 0;
    for (std::size_t b = 0; b < kNumBlocks; ++b) {
      shapes_[b] = {dims[b].first, dims[b].second, off};
      off += shapes_[b].size();
    }
    values_.assign(off, 0.0);
  }

  /// Same layout, all zeros (gradient buffers, optimizer moments).
  ModelParams zeros_like() const {
    ModelParams z = *this;
    std::fill(z.values_.begin(), z.values_.end(), 0.0);
    return z;
  }

  const ModelConfig& config() const { return cfg_; }
  const BlockShape& shape(Block b) const { return shapes_[idx(b)]; }

  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }

  std::span<double> block(Block b) { return {values_.data() + shape(b).offset, shape(b).size()}; }
  std::span<const double> block(Block b) const {
    return {values_.data() + shape(b).offset, shape(b).size()};
  }
  MatView<double> mat(Block b) { return {values_.data() + shape(b).offset, shape(b).rows, shape(b).cols}; }
  MatView<const double> mat(Block b) const {
    return {values_.data() + shape(b).offset, shape(b).rows, shape(b).cols};
  }

  bool all_finite() const {
    return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
  }

  bool operator==(const ModelParams&) const = default;

  static constexpr std::size_t kNumBlocks = static_cast<std::size_t>(Block::kCount);

 private:
  static constexpr std::size_t idx(Block b) { return static_cast<std::size_t>(b); }

  ModelConfig cfg_;
  std::array<BlockShape, kNumBlocks> shapes_{};
  std::vector<double> values_;
};

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights. Gate and candidate
/// biases start at zero, except the update gate.
inline ModelParams init_params(const ModelConfig& cfg, std::uint64_t seed) {
  ModelParams p(cfg);
  Rng rng(derive_seed(seed, "init"));
  const auto fill = [&](Block b, double scale) {
    for (double& v : p.block(b)) v = scale * (2.0 * rng.uniform() - 1.0);
  };
  const double he = 1.0 / std::sqrt(static_cast<double>(cfg.d_hid));
  fill(Block::Embed, 1.0);
  fill(Block::CondW, 1.0 / std::sqrt(static_cast<double>(cfg.cond_dim)));
  fill(Block::CondB, 1.0 / std::sqrt(static_cast<double>(cfg.cond_dim)));
  for (Block b : {Block::Wz, Block::Wr, Block::Wn, Block::Uz, Block::Ur, Block::Un, Block::OutW}) {
    fill(b, he);
  }
  for (double& v : p.block(Block::Bz)) v = cfg.update_gate_bias;
  return p;
}

namespace detail {

inline double sigmoid(double x) {
  return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

// y += M x
inline void gemv_add(MatView<const double> m, std::span<const double> x, std::span<double> y) {
  for (std::size_t r = 0; r < m.rows; ++r) {
    const double* row = m.row(r);
    double acc = 0.0;
    for (std::size_t c = 0; c < m.cols; ++c) acc += row[c] * x[c];
    y[r] += acc;
  }
}

// y += M^T x
inline void gemv_t_add(MatView<const double> m, std::span<const double> x, std::span<double> y) {
  for (std::size_t r = 0; r < m.rows; ++r) {
    const double* row = m.row(r);
    const double xr = x[r];
    if (xr == 0.0) continue;
    for (std::size_t c = 0; c < m.cols; ++c) y[c] += row[c] * xr;
  }
}

// M += a b^T
inline void outer_add(MatView<double> m, std::span<const double> a, std::span<const double> b) {
  for (std::size_t r = 0; r < m.rows; ++r) {
    double* row = m.row(r);
    const double ar = a[r];
    if (ar == 0.0) continue;
    for (std::size_t c = 0; c < m.cols; ++c) row[c] += ar * b[c];
  }
}

inline void softmax_inplace(std::span<double> v) {
  const double hi = *std::max_element(v.begin(), v.end());
  double sum = 0.0;
  for (double& x : v) {
    x = std::exp(x - hi);
    sum += x;
  }
  for (double& x : v) x /= sum;
}

inline void check_condition(const ModelParams& p, std::span<const double> condition) {
  if (condition.size() != static_cast<std::size_t>(p.config().cond_dim)) {
    throw UsageError("condition has " + std::to_string(condition.size()) + " entries, model expects " +
                     std::to_string(p.config().cond_dim));
  }
}

inline void check_token(const ModelParams& p, std::int64_t tok) {
  if (tok < 0 || tok >= p.config().vocab) {
    throw UsageError("token id " + std::to_string(tok) + " outside vocabulary");
  }
}

}  // namespace detail

/// Recurrent state while decoding or scoring one sequence.
class Decoder {
 public:
  Decoder(const ModelParams& p, std::span<const double> condition)
      : p_(&p),
        h_(static_cast<std::size_t>(p.config().d_hid)),
        z_(h_.size()),
        r_(h_.size()),
        n_(h_.size()),
        u_(h_.size()) {
    detail::check_condition(p, condition);
    std::copy(p.block(Block::CondB).begin(), p.block(Block::CondB).end(), h_.begin());
    detail::gemv_add(p.mat(Block::CondW), condition, h_);
    for (double& v : h_) v = std::tanh(v);
  }

  /// Feeds `token` and returns the next-token distribution.
  std::vector<double> step(std::int64_t token) {
    detail::check_token(*p_, token);
    const ModelParams& p = *p_;
    const std::size_t H = h_.size();
    const auto e = std::span<const double>(p.mat(Block::Embed).row(static_cast<std::size_t>(token)),
                                           static_cast<std::size_t>(p.config().d_emb));
    std::copy(p.block(Block::Bz).begin(), p.block(Block::Bz).end(), z_.begin());
    std::copy(p.block(Block::Br).begin(), p.block(Block::Br).end(), r_.begin());
    std::copy(p.block(Block::Bn).begin(), p.block(Block::Bn).end(), n_.begin());
    std::fill(u_.begin(), u_.end(), 0.0);
    detail::gemv_add(p.mat(Block::Wz), e, z_);
    detail::gemv_add(p.mat(Block::Uz), h_, z_);
    detail::gemv_add(p.mat(Block::Wr), e, r_);
    detail::gemv_add(p.mat(Block::Ur), h_, r_);
    detail::gemv_add(p.mat(Block::Wn), e, n_);
    detail::gemv_add(p.mat(Block::Un), h_, u_);
    for (std::size_t i = 0; i < H; ++i) {
      z_[i] = detail::sigmoid(z_[i]);
      r_[i] = detail::sigmoid(r_[i]);
      n_[i] = std::tanh(n_[i] + r_[i] * u_[i]);
      h_[i] = (1.0 - z_[i]) * n_[i] + z_[i] * h_[i];
    }
    std::vector<double> logits(p.block(Block::OutB).begin(), p.block(Block::OutB).end());
    detail::gemv_add(p.mat(Block::OutW), h_, logits);
    detail::softmax_inplace(logits);
    return logits;
  }

 private:
  const ModelParams* p_;
  std::vector<double> h_, z_, r_, n_, u_;
};

/// Next-token distribution after `prefix` (which must start with BOS).
inline std::vector<double> forward(const ModelParams& p, std::span<const double> condition,
                                   std::span<const std::int64_t> prefix) {
  if (prefix.empty()) throw UsageError("forward: empty prefix");
  Decoder dec(p, condition);
  std::vector<double> probs;
  for (std::int64_t tok : prefix) probs = dec.step(tok);
  return probs;
}

/// Teacher-forced probability of every target token: out[t] = p(seq[t+1] | seq[..t], v).
inline std::vector<double> token_probabilities(const ModelParams& p, std::span<const double> condition,
                                               std::span<const std::int64_t> sequence) {
  if (sequence.size() < 2) throw UsageError("token_probabilities: sequence needs BOS and a target");
  Decoder dec(p, condition);
  std::vector<double> out;
  out.reserve(sequence.size() - 1);
  for (std::size_t t = 0; t + 1 < sequence.size(); ++t) {
    detail::check_token(p, sequence[t + 1]);
    const auto probs = dec.step(sequence[t]);
    out.push_back(probs[static_cast<std::size_t>(sequence[t + 1])]);
  }
  return out;
}

/// Greedy decoding from `bos` until `eos` or `max_len` tokens (BOS included).
inline std::vector<std::int64_t> generate(const ModelParams& p, std::span<const double> condition,
                                          std::int64_t bos, std::int64_t eos, int max_len) {
  if (max_len < 2) throw UsageError("generate: max_len must be >= 2");
  Decoder dec(p, condition);
  std::vector<std::int64_t> out{bos};
  while (static_cast<int>(out.size()) < max_len) {
    const auto probs = dec.step(out.back());
    const auto best = std::max_element(probs.begin(), probs.end()) - probs.begin();
    out.push_back(best);
    if (best == eos) break;
  }
  return out;
}

struct LossResult {
  double loss = 0.0;
  std::vector<double> log_probs;  // log p(target_t), one per target token
};

/// Weighted sequence loss  -(1/T) sum_t w_t log p(y_t | y_<t, v)  over the
/// targets sequence[1..]. When `grad` is non-null the exact gradient is added
/// into it. The weights are treated as constants.
inline LossResult sequence_loss(const ModelParams& p, std::span<const double> condition,
                                std::span<const std::int64_t> sequence, std::span<const double> weights,
                                ModelParams* grad) {
  detail::check_condition(p, condition);
  if (sequence.size() < 2) throw UsageError("sequence_loss: sequence needs BOS and a target");
  const std::size_t T = sequence.size() - 1;
  if (weights.size() != T) {
    throw UsageError("sequence_loss: " + std::to_string(weights.size()) + " weights for " +
                     std::to_string(T) + " targets");
  }
  for (auto tok : sequence) detail::check_token(p, tok);

  const auto& cfg = p.config();
  const auto H = static_cast<std::size_t>(cfg.d_hid);
  const auto E = static_cast<std::size_t>(cfg.d_emb);
  const auto V = static_cast<std::size_t>(cfg.vocab);

  // Forward with a tape of everything the backward pass needs.
  std::vector<double> h0(p.block(Block::CondB).begin(), p.block(Block::CondB).end());
  detail::gemv_add(p.mat(Block::CondW), condition, h0);
  for (double& v : h0) v = std::tanh(v);

  std::vector<double> hs((T + 1) * H), zs(T * H), rs(T * H), ns(T * H), us(T * H), probs(T * V);
  std::copy(h0.begin(), h0.end(), hs.begin());
  LossResult res;
  res.log_probs.resize(T);
  const double inv_t = 1.0 / static_cast<double>(T);
  for (std::size_t t = 0; t < T; ++t) {
    const auto e = std::span<const double>(p.mat(Block::Embed).row(static_cast<std::size_t>(sequence[t])), E);
    const std::span<const double> hp(hs.data() + t * H, H);
    std::span<double> z(zs.data() + t * H, H), r(rs.data() + t * H, H), n(ns.data() + t * H, H),
        u(us.data() + t * H, H), h(hs.data() + (t + 1) * H, H);
    std::copy(p.block(Block::Bz).begin(), p.block(Block::Bz).end(), z.begin());
    std::copy(p.block(Block::Br).begin(), p.block(Block::Br).end(), r.begin());
    std::copy(p.block(Block::Bn).begin(), p.block(Block::Bn).end(), n.begin());
    detail::gemv_add(p.mat(Block::Wz), e, z);
    detail::gemv_add(p.mat(Block::Uz), hp, z);
    detail::gemv_add(p.mat(Block::Wr), e, r);
    detail::gemv_add(p.mat(Block::Ur), hp, r);
    detail::gemv_add(p.mat(Block::Wn), e, n);
    detail::gemv_add(p.mat(Block::Un), hp, u);
    for (std::size_t i = 0; i < H; ++i) {
      z[i] = detail::sigmoid(z[i]);
      r[i] = detail::sigmoid(r[i]);
      n[i] = std::tanh(n[i] + r[i] * u[i]);
      h[i] = (1.0 - z[i]) * n[i] + z[i] * hp[i];
    }
    std::span<double> pr(probs.data() + t * V, V);
    std::copy(p.block(Block::OutB).begin(), p.block(Block::OutB).end(), pr.begin());
    detail::gemv_add(p.mat(Block::OutW), h, pr);
    // log-softmax of the target, computed before normalizing in place
    const double hi = *std::max_element(pr.begin(), pr.end());
    double sum = 0.0;
    for (double v : pr) sum += std::exp(v - hi);
    const auto y = static_cast<std::size_t>(sequence[t + 1]);
    res.log_probs[t] = pr[y] - hi - std::log(sum);
    for (double& v : pr) v = std::exp(v - hi) / sum;
    res.loss -= inv_t * weights[t] * res.log_probs[t];
  }
  if (grad == nullptr) return res;

  // Backward through time.
  std::vector<double> dh(H, 0.0), dh_prev(H), dlogits(V), daz(H), dar(H), dan(H), du(H), de(E);
  auto gE = grad->mat(Block::Embed);
  for (std::size_t t = T; t-- > 0;) {
    const std::span<const double> hp(hs.data() + t * H, H), h(hs.data() + (t + 1) * H, H),
        z(zs.data() + t * H, H), r(rs.data() + t * H, H), n(ns.data() + t * H, H), u(us.data() + t * H, H),
        pr(probs.data() + t * V, V);
    const double scale = inv_t * weights[t];
    const auto y = static_cast<std::size_t>(sequence[t + 1]);
    for (std::size_t k = 0; k < V; ++k) dlogits[k] = scale * (pr[k] - (k == y ? 1.0 : 0.0));
    detail::outer_add(grad->mat(Block::OutW), dlogits, h);
    auto gob = grad->block(Block::OutB);
    for (std::size_t k = 0; k < V; ++k) gob[k] += dlogits[k];
    detail::gemv_t_add(p.mat(Block::OutW), dlogits, dh);

    for (std::size_t i = 0; i < H; ++i) {
      const double dn = dh[i] * (1.0 - z[i]);
      const double dz = dh[i] * (hp[i] - n[i]);
      dh_prev[i] = dh[i] * z[i];
      dan[i] = dn * (1.0 - n[i] * n[i]);
      dar[i] = dan[i] * u[i] * r[i] * (1.0 - r[i]);
      du[i] = dan[i] * r[i];
      daz[i] = dz * z[i] * (1.0 - z[i]);
    }
    const auto e = std::span<const double>(p.mat(Block::Embed).row(static_cast<std::size_t>(sequence[t])), E);
    detail::outer_add(grad->mat(Block::Wz), daz, e);
    detail::outer_add(grad->mat(Block::Wr), dar, e);
    detail::outer_add(grad->mat(Block::Wn), dan, e);
    detail::outer_add(grad->mat(Block::Uz), daz, hp);
    detail::outer_add(grad->mat(Block::Ur), dar, hp);
    detail::outer_add(grad->mat(Block::Un), du, hp);
    auto gbz = grad->block(Block::Bz), gbr = grad->block(Block::Br), gbn = grad->block(Block::Bn);
    for (std::size_t i = 0; i < H; ++i) {
      gbz[i] += daz[i];
      gbr[i] += dar[i];
      gbn[i] += dan[i];
    }
    detail::gemv_t_add(p.mat(Block::Uz), daz, dh_prev);
    detail::gemv_t_add(p.mat(Block::Ur), dar, dh_prev);
    detail::gemv_t_add(p.mat(Block::Un), du, dh_prev);
    std::fill(de.begin(), de.end(), 0.0);
    detail::gemv_t_add(p.mat(Block::Wz), daz, de);
    detail::gemv_t_add(p.mat(Block::Wr), dar, de);
    detail::gemv_t_add(p.mat(Block::Wn), dan, de);
    double* erow = gE.row(static_cast<std::size_t>(sequence[t]));
    for (std::size_t k = 0; k < E; ++k) erow[k] += de[k];
    dh.swap(dh_prev);
  }
  // h0 = tanh(Wc v + bc)
  for (std::size_t i = 0; i < H; ++i) dh[i] *= 1.0 - h0[i] * h0[i];
  detail::outer_add(grad->mat(Block::CondW), dh, condition);
  auto gcb = grad->block(Block::CondB);
  for (std::size_t i = 0; i < H; ++i) gcb[i] += dh[i];
  return res;
}

// ---------------------------------------------------------------------------
// Optimizers

enum class OptimizerKind { Sgd, Adam };

inline std::string_view to_string(OptimizerKind k) { return k == OptimizerKind::Sgd ? "sgd" : "adam"; }

inline OptimizerKind parse_optimizer(std::string_view s) {
  if (s == "sgd") return OptimizerKind::Sgd;
  if (s == "adam") return OptimizerKind::Adam;
  throw UsageError("unknown optimizer '" + std::string(s) + "' (expected sgd or adam)");
}

class Optimizer {
 public:
  Optimizer(OptimizerKind kind, const ModelParams& like) : kind_(kind) {
    if (kind_ == OptimizerKind::Adam) {
      m_.assign(like.values().size(), 0.0);
      v_.assign(like.values().size(), 0.0);
    }
  }

  void step(ModelParams& params, const ModelParams& grad, double lr) {
    auto w = params.values();
    const auto g = grad.values();
    if (kind_ == OptimizerKind::Sgd) {
      for (std::size_t i = 0; i < w.size(); ++i) w[i] -= lr * g[i];
      return;
    }
    ++t_;
    const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < w.size(); ++i) {
      m_[i] = kBeta1 * m_[i] + (1.0 - kBeta1) * g[i];
      v_[i] = kBeta2 * v_[i] + (1.0 - kBeta2) * g[i] * g[i];
      w[i] -= lr * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + kEps);
    }
  }

 private:
  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEps = 1e-8;

  OptimizerKind kind_;
  std::vector<double> m_, v_;
  long t_ = 0;
};

// ---------------------------------------------------------------------------
// Checkpoints

inline constexpr const char* kCheckpointFormat = "visdep-ckpt";

inline nlohmann::json checkpoint_json(const ModelParams& p) {
  nlohmann::json j;
  j["format"] = kCheckpointFormat;
  j["version"] = 1;
  const auto& c = p.config();
  j["config"] = {{"vocab", c.vocab},
                 {"cond_dim", c.cond_dim},
                 {"d_emb", c.d_emb},
                 {"d_hid", c.d_hid},
                 {"update_gate_bias", c.update_gate_bias}};
  auto blocks = nlohmann::json::array();
  for (std::size_t b = 0; b < ModelParams::kNumBlocks; ++b) {
    const auto blk = static_cast<Block>(b);
    const auto& s = p.shape(blk);
    const auto data = p.block(blk);
    blocks.push_back({{"name", kBlockNames[b]},
                      {"rows", s.rows},
                      {"cols", s.cols},
                      {"data", std::vector<double>(data.begin(), data.end())}});
  }
  j["blocks"] = std::move(blocks);
  return j;
}

inline ModelParams params_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format").get<std::string>() != kCheckpointFormat || j.at("version").get<int>() != 1) {
      throw DataError("not a version-1 visdep checkpoint");
    }
    const auto& c = j.at("config");
    ModelConfig cfg;
    cfg.vocab = c.at("vocab").get<int>();
    cfg.cond_dim = c.at("cond_dim").get<int>();
    cfg.d_emb = c.at("d_emb").get<int>();
    cfg.d_hid = c.at("d_hid").get<int>();
    cfg.update_gate_bias = c.at("update_gate_bias").get<double>();
    ModelParams p(cfg);
    const auto& blocks = j.at("blocks");
    if (blocks.size() != ModelParams::kNumBlocks) throw DataError("checkpoint: wrong number of blocks");
    for (std::size_t b = 0; b < ModelParams::kNumBlocks; ++b) {
      const auto blk = static_cast<Block>(b);
      const auto& jb = blocks.at(b);
      const auto& s = p.shape(blk);
      if (jb.at("name").get<std::string>() != kBlockNames[b] || jb.at("rows").get<std::size_t>() != s.rows ||
          jb.at("cols").get<std::size_t>() != s.cols) {
        throw DataError("checkpoint: shape mismatch in block " + std::string(kBlockNames[b]));
      }
      const auto data = jb.at("data").get<std::vector<double>>();
      if (data.size() != s.size()) throw DataError("checkpoint: data size mismatch");
      std::copy(data.begin(), data.end(), p.block(blk).begin());
    }
    if (!p.all_finite()) throw DataError("checkpoint: non-finite parameter");
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("checkpoint: ") + e.what());
  }
}

inline void save_checkpoint(const ModelParams& p, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write checkpoint: " + path.string());
  out << checkpoint_json(p).dump() << '\n';
  if (!out) throw DataError("write failed: " + path.string());
}

inline ModelParams load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint: " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("checkpoint parse error: " + std::string(e.what()));
  }
  return params_from_json(j);
}

}  // namespace visdep
