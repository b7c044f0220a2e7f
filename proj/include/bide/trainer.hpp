#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "bide/common.hpp"
#include "bide/corpus.hpp"
#include "bide/rng.hpp"

namespace bide {

// ---------------------------------------------------------------------------
// Embedding heads
// ---------------------------------------------------------------------------

enum class HeadKind { projection, linguistic_bottleneck };

inline const char* to_string(HeadKind k) {
  return k == HeadKind::projection ? "projection" : "linguistic_bottleneck";
}

inline HeadKind head_kind_from_string(const std::string& s) {
  if (s == "projection") return HeadKind::projection;
  if (s == "linguistic_bottleneck") return HeadKind::linguistic_bottleneck;
  fail("unknown head kind: \"" + s + "\"");
}

struct Affine {
  std::size_t in = 0;
  std::size_t out = 0;
  std::vector<double> w;  // row-major, in x out
  std::vector<double> b;  // out

  Affine() = default;
  Affine(std::size_t i, std::size_t o) : in(i), out(o), w(i * o, 0.0), b(o, 0.0) {}
};

/// Trainable head weights. The projection kind is a single affine map
/// d_in -> d_out. The bottleneck kind compresses through an encoder chain
/// (2048 -> 512 -> 64 -> 16 at reference scale, scaled proportionally for
/// other input widths), reconstructs descriptors through a decoder
/// (16 -> 24 -> n_desc), and maps the latent to the identification embedding
/// with one affine layer. ReLU sits between affine layers.
struct HeadParams {
  HeadKind kind = HeadKind::projection;
  std::size_t d_in = 0;
  std::size_t d_out = 0;
  std::size_t n_desc = 0;
  std::vector<Affine> encoder;
  std::vector<Affine> decoder;
  Affine id_map;  // bottleneck only
};

inline HeadParams make_projection_head(std::size_t d_in, std::size_t d_out) {
  require(d_in >= 1 && d_out >= 1, "projection head needs positive dimensions");
  HeadParams h;
  h.kind = HeadKind::projection;
  h.d_in = d_in;
  h.d_out = d_out;
  h.encoder.emplace_back(d_in, d_out);
  return h;
}

/// Reference ratios: 2048 -> 512 -> 64 -> 16 for the encoder, latent * 1.5 for
/// the decoder hidden layer. Explicit dims may override the scaling.
inline HeadParams make_bottleneck_head(
    std::size_t d_in, std::size_t d_out, std::size_t n_desc = 30,
    std::optional<std::vector<std::size_t>> encoder_dims = std::nullopt) {
  require(d_in >= 1 && d_out >= 1 && n_desc >= 1,
          "bottleneck head needs positive dimensions");
  std::vector<std::size_t> dims;
  if (encoder_dims) {
    require(encoder_dims->size() == 3, "encoder_dims must list three hidden sizes");
    dims = *encoder_dims;
  } else {
    const auto scaled = [d_in](double ratio) {
      return std::max<std::size_t>(
          1, static_cast<std::size_t>(std::llround(d_in * ratio)));
    };
    dims = {scaled(512.0 / 2048.0), scaled(64.0 / 2048.0), scaled(16.0 / 2048.0)};
  }
  HeadParams h;
  h.kind = HeadKind::linguistic_bottleneck;
  h.d_in = d_in;
  h.d_out = d_out;
  h.n_desc = n_desc;
  h.encoder.emplace_back(d_in, dims[0]);
  h.encoder.emplace_back(dims[0], dims[1]);
  h.encoder.emplace_back(dims[1], dims[2]);
  const std::size_t g1 = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::llround(dims[2] * 1.5)));
  h.decoder.emplace_back(dims[2], g1);
  h.decoder.emplace_back(g1, n_desc);
  h.id_map = Affine(dims[2], d_out);
  return h;
}

/// Weight and bias blocks in a fixed traversal order (encoder, decoder, id map).
inline std::vector<std::vector<double>*> param_blocks(HeadParams& h) {
  std::vector<std::vector<double>*> out;
  for (auto& l : h.encoder) {
    out.push_back(&l.w);
    out.push_back(&l.b);
  }
  for (auto& l : h.decoder) {
    out.push_back(&l.w);
    out.push_back(&l.b);
  }
  if (h.kind == HeadKind::linguistic_bottleneck) {
    out.push_back(&h.id_map.w);
    out.push_back(&h.id_map.b);
  }
  return out;
}

inline std::vector<const std::vector<double>*> param_blocks(const HeadParams& h) {
  std::vector<const std::vector<double>*> out;
  for (auto* p : param_blocks(const_cast<HeadParams&>(h))) out.push_back(p);
  return out;
}

inline std::vector<double> flatten(const HeadParams& h) {
  std::vector<double> out;
  for (const auto* blk : param_blocks(h)) out.insert(out.end(), blk->begin(), blk->end());
  return out;
}

inline void unflatten(HeadParams& h, std::span<const double> flat) {
  std::size_t pos = 0;
  for (auto* blk : param_blocks(h)) {
    require(pos + blk->size() <= flat.size(), "unflatten: size mismatch");
    std::copy(flat.begin() + pos, flat.begin() + pos + blk->size(), blk->begin());
    pos += blk->size();
  }
  require(pos == flat.size(), "unflatten: size mismatch");
}

inline HeadParams zeros_like(const HeadParams& h) {
  HeadParams z = h;
  for (auto* blk : param_blocks(z)) std::fill(blk->begin(), blk->end(), 0.0);
  return z;
}

/// Glorot-style uniform(-a, a) with a = sqrt(6 / (fan_in + fan_out)).
inline void init_head(HeadParams& h, Rng& rng) {
  const auto init_layer = [&rng](Affine& l) {
    const double a = std::sqrt(6.0 / static_cast<double>(l.in + l.out));
    for (double& w : l.w) w = rng.uniform(-a, a);
    for (double& b : l.b) b = rng.uniform(-a, a);
  };
  for (auto& l : h.encoder) init_layer(l);
  for (auto& l : h.decoder) init_layer(l);
  if (h.kind == HeadKind::linguistic_bottleneck) init_layer(h.id_map);
}

// ---------------------------------------------------------------------------
// Forward / backward
// ---------------------------------------------------------------------------

namespace detail {

// C = A (n x k) * W + b broadcast over rows
inline Mat affine_forward(const Mat& x, const Affine& l) {
  require(x.cols == l.in, "affine: input width " + std::to_string(x.cols) +
                              " does not match layer fan-in " + std::to_string(l.in));
  Mat y(x.rows, l.out);
  for (std::size_t r = 0; r < x.rows; ++r) {
    const double* xr = x.row(r);
    double* yr = y.row(r);
    for (std::size_t o = 0; o < l.out; ++o) yr[o] = l.b[o];
    for (std::size_t i = 0; i < l.in; ++i) {
      const double xi = xr[i];
      const double* wr = l.w.data() + i * l.out;
      for (std::size_t o = 0; o < l.out; ++o) yr[o] += xi * wr[o];
    }
  }
  return y;
}

inline Mat relu(const Mat& x) {
  Mat y = x;
  for (double& v : y.a) v = v > 0.0 ? v : 0.0;
  return y;
}

// dL/dW = in^T * dL/dout, dL/db = column sums, dL/din = dL/dout * W^T
inline void affine_backward(const Mat& input, const Affine& l, const Mat& gout,
                            Affine& grads, Mat* ginput) {
  for (std::size_t r = 0; r < input.rows; ++r) {
    const double* xr = input.row(r);
    const double* gr = gout.row(r);
    for (std::size_t i = 0; i < l.in; ++i) {
      double* gw = grads.w.data() + i * l.out;
      const double xi = xr[i];
      for (std::size_t o = 0; o < l.out; ++o) gw[o] += xi * gr[o];
    }
    for (std::size_t o = 0; o < l.out; ++o) grads.b[o] += gr[o];
  }
  if (ginput) {
    *ginput = Mat(input.rows, l.in);
    for (std::size_t r = 0; r < input.rows; ++r) {
      const double* gr = gout.row(r);
      double* gi = ginput->row(r);
      for (std::size_t i = 0; i < l.in; ++i) {
        const double* wr = l.w.data() + i * l.out;
        double acc = 0.0;
        for (std::size_t o = 0; o < l.out; ++o) acc += gr[o] * wr[o];
        gi[i] = acc;
      }
    }
  }
}

inline void relu_backward_inplace(const Mat& pre, Mat& g) {
  for (std::size_t i = 0; i < g.a.size(); ++i)
    if (pre.a[i] <= 0.0) g.a[i] = 0.0;
}

}  // namespace detail

struct Forward {
  Mat embeddings;   // batch x d_out
  Mat descriptors;  // batch x n_desc; empty for the projection head
};

struct ForwardCache {
  Mat input;
  std::vector<Mat> enc_pre;   // pre-activation per encoder layer
  std::vector<Mat> enc_post;  // post-ReLU (projection head: raw output)
  Mat dec_pre;                // decoder hidden pre-activation
  Mat dec_post;
};

inline Forward forward(const HeadParams& h, const Mat& x, ForwardCache* cache) {
  Forward out;
  if (cache) {
    cache->input = x;
    cache->enc_pre.clear();
    cache->enc_post.clear();
  }
  if (h.kind == HeadKind::projection) {
    out.embeddings = detail::affine_forward(x, h.encoder[0]);
    return out;
  }
  Mat cur = x;
  for (const auto& layer : h.encoder) {
    Mat pre = detail::affine_forward(cur, layer);
    Mat post = detail::relu(pre);
    if (cache) {
      cache->enc_pre.push_back(pre);
      cache->enc_post.push_back(post);
    }
    cur = std::move(post);
  }
  out.embeddings = detail::affine_forward(cur, h.id_map);
  Mat dec_pre = detail::affine_forward(cur, h.decoder[0]);
  Mat dec_post = detail::relu(dec_pre);
  out.descriptors = detail::affine_forward(dec_post, h.decoder[1]);
  if (cache) {
    cache->dec_pre = std::move(dec_pre);
    cache->dec_post = std::move(dec_post);
  }
  return out;
}

inline Forward forward(const HeadParams& h, const Mat& x) { return forward(h, x, nullptr); }

/// Exact reverse-mode gradients for every weight and bias. The identification
/// branch is weighted 1 and the descriptor branch by aux_weight.
inline HeadParams backward(const HeadParams& h, const ForwardCache& cache,
                           const Mat& grad_embeddings, const Mat& grad_descriptors,
                           double aux_weight) {
  require(!cache.input.empty(), "backward: forward cache is missing");
  HeadParams grads = zeros_like(h);

  if (h.kind == HeadKind::projection) {
    detail::affine_backward(cache.input, h.encoder[0], grad_embeddings,
                            grads.encoder[0], nullptr);
    return grads;
  }

  require(cache.enc_post.size() == h.encoder.size(),
          "backward: forward cache does not match head");
  const Mat& latent = cache.enc_post.back();

  Mat g_latent;
  detail::affine_backward(latent, h.id_map, grad_embeddings, grads.id_map, &g_latent);

  if (aux_weight != 0.0 && !grad_descriptors.empty()) {
    Mat g_desc = grad_descriptors;
    for (double& v : g_desc.a) v *= aux_weight;
    Mat g_dec_post;
    detail::affine_backward(cache.dec_post, h.decoder[1], g_desc, grads.decoder[1],
                            &g_dec_post);
    detail::relu_backward_inplace(cache.dec_pre, g_dec_post);
    Mat g_latent_dec;
    detail::affine_backward(latent, h.decoder[0], g_dec_post, grads.decoder[0],
                            &g_latent_dec);
    for (std::size_t i = 0; i < g_latent.a.size(); ++i)
      g_latent.a[i] += g_latent_dec.a[i];
  }

  Mat g = std::move(g_latent);
  for (std::size_t li = h.encoder.size(); li-- > 0;) {
    detail::relu_backward_inplace(cache.enc_pre[li], g);
    const Mat& input = li == 0 ? cache.input : cache.enc_post[li - 1];
    Mat g_in;
    detail::affine_backward(input, h.encoder[li], g, grads.encoder[li],
                            li > 0 ? &g_in : nullptr);
    if (li > 0) g = std::move(g_in);
  }
  return grads;
}

// ---------------------------------------------------------------------------
// Batch-hard triplet mining
// ---------------------------------------------------------------------------

struct Triplet {
  std::size_t anchor = 0;
  std::size_t positive = 0;
  std::size_t negative = 0;
};

struct TripletIndices {
  std::vector<Triplet> triplets;
  std::vector<std::size_t> skipped_anchors;  // anchors with no positive
};

inline Mat pairwise_distances(const Mat& emb) {
  Mat d(emb.rows, emb.rows);
  for (std::size_t i = 0; i < emb.rows; ++i)
    for (std::size_t j = i + 1; j < emb.rows; ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < emb.cols; ++k) {
        const double diff = emb.at(i, k) - emb.at(j, k);
        acc += diff * diff;
      }
      const double dist = std::sqrt(acc);
      d.at(i, j) = dist;
      d.at(j, i) = dist;
    }
  return d;
}

/// Per anchor: positive = same-identity member at maximum Euclidean distance,
/// negative = different-identity member at minimum distance. Ties resolve to
/// the lowest index. Anchors without a positive are skipped and reported.
inline TripletIndices batch_hard_mine(const Mat& embeddings,
                                      std::span<const std::int64_t> labels) {
  const std::size_t n = embeddings.rows;
  require(labels.size() == n, "batch_hard_mine: label count mismatch");
  bool two_ids = false;
  for (std::size_t i = 1; i < n && !two_ids; ++i) two_ids = labels[i] != labels[0];
  require(two_ids, "batch_hard_mine: batch needs at least two identities");

  const Mat d = pairwise_distances(embeddings);
  TripletIndices out;
  for (std::size_t a = 0; a < n; ++a) {
    std::size_t best_p = n;
    double best_pd = -1.0;
    std::size_t best_n = n;
    double best_nd = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j) {
      if (j == a) continue;
      if (labels[j] == labels[a]) {
        if (d.at(a, j) > best_pd) {
          best_pd = d.at(a, j);
          best_p = j;
        }
      } else if (d.at(a, j) < best_nd) {
        best_nd = d.at(a, j);
        best_n = j;
      }
    }
    if (best_p == n) {
      out.skipped_anchors.push_back(a);
      continue;
    }
    out.triplets.push_back({a, best_p, best_n});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Losses
// ---------------------------------------------------------------------------

struct TripletLossResult {
  double loss = 0.0;
  Mat grad;  // d loss / d embeddings
  std::size_t active = 0;
  double mean_pos_dist = 0.0;
  double mean_neg_dist = 0.0;
};

/// Mean over triplets of max(0, d(a,p) - d(a,n) + margin), with analytic
/// gradients. Coincident points get subgradient zero.
inline TripletLossResult triplet_loss_and_grad(const Mat& embeddings,
                                               const TripletIndices& mined,
                                               double margin) {
  TripletLossResult res;
  res.grad = Mat(embeddings.rows, embeddings.cols);
  const std::size_t nt = mined.triplets.size();
  require(nt > 0, "triplet loss: no triplets");

  const double inv = 1.0 / static_cast<double>(nt);
  NeumaierSum loss_acc, pos_acc, neg_acc;
  const std::size_t d = embeddings.cols;
  std::vector<double> diff(d);
  const auto dist = [&](std::size_t i, std::size_t j) {
    double acc = 0.0;
    for (std::size_t k = 0; k < d; ++k) {
      const double v = embeddings.at(i, k) - embeddings.at(j, k);
      acc += v * v;
    }
    return std::sqrt(acc);
  };

  for (const auto& t : mined.triplets) {
    const double dap = dist(t.anchor, t.positive);
    const double dan = dist(t.anchor, t.negative);
    pos_acc.add(dap);
    neg_acc.add(dan);
    const double hinge = dap - dan + margin;
    if (hinge <= 0.0) continue;
    ++res.active;
    loss_acc.add(hinge);
    if (dap > 0.0) {
      const double s = inv / dap;
      for (std::size_t k = 0; k < d; ++k) {
        const double v = (embeddings.at(t.anchor, k) - embeddings.at(t.positive, k)) * s;
        res.grad.at(t.anchor, k) += v;
        res.grad.at(t.positive, k) -= v;
      }
    }
    if (dan > 0.0) {
      const double s = inv / dan;
      for (std::size_t k = 0; k < d; ++k) {
        const double v = (embeddings.at(t.anchor, k) - embeddings.at(t.negative, k)) * s;
        res.grad.at(t.anchor, k) -= v;
        res.grad.at(t.negative, k) += v;
      }
    }
  }
  res.loss = loss_acc.value() * inv;
  res.mean_pos_dist = pos_acc.value() * inv;
  res.mean_neg_dist = neg_acc.value() * inv;
  return res;
}

struct ReconLossResult {
  double loss = 0.0;
  Mat grad;
};

/// Mean squared error over all elements; gradient carries the 2/N scaling.
inline ReconLossResult linguistic_recon_loss_and_grad(const Mat& pred,
                                                      const Mat& truth) {
  require(pred.rows == truth.rows && pred.cols == truth.cols,
          "reconstruction loss: shape mismatch");
  require(!pred.empty(), "reconstruction loss: empty input");
  ReconLossResult res;
  res.grad = Mat(pred.rows, pred.cols);
  const double n = static_cast<double>(pred.rows * pred.cols);
  NeumaierSum acc;
  for (std::size_t i = 0; i < pred.a.size(); ++i) {
    const double e = pred.a[i] - truth.a[i];
    acc.add(e * e);
    res.grad.a[i] = 2.0 * e / n;
  }
  res.loss = acc.value() / n;
  return res;
}

// ---------------------------------------------------------------------------
// Adam with decoupled weight decay
// ---------------------------------------------------------------------------

struct AdamState {
  std::size_t t = 0;
  HeadParams m;  // first moments, shaped like the parameters
  HeadParams v;  // second moments
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

inline AdamState make_adam_state(const HeadParams& params) {
  AdamState s;
  s.m = zeros_like(params);
  s.v = zeros_like(params);
  return s;
}

/// Decay is applied as params *= (1 - lr*wd) before the bias-corrected update,
/// keeping it out of the moment estimates.
inline void adam_step(HeadParams& params, const HeadParams& grads, AdamState& state,
                      double lr, double wd) {
  ++state.t;
  const auto pb = param_blocks(params);
  const auto gb = param_blocks(const_cast<HeadParams&>(grads));
  const auto mb = param_blocks(state.m);
  const auto vb = param_blocks(state.v);
  require(pb.size() == gb.size(), "adam_step: gradient shape mismatch");
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
  for (std::size_t blk = 0; blk < pb.size(); ++blk) {
    auto& p = *pb[blk];
    const auto& g = *gb[blk];
    auto& m = *mb[blk];
    auto& v = *vb[blk];
    require(p.size() == g.size(), "adam_step: gradient block size mismatch");
    for (std::size_t i = 0; i < p.size(); ++i) {
      p[i] *= (1.0 - lr * wd);
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g[i];
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g[i] * g[i];
      p[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + state.epsilon);
    }
  }
}

// ---------------------------------------------------------------------------
// PK batch sampling
// ---------------------------------------------------------------------------

/// Exactly P identities with K rows each. Identities with fewer than K rows
/// are padded by sampling with replacement.
inline std::vector<std::size_t> pk_sample(
    const std::vector<std::vector<std::size_t>>& groups, std::size_t p, std::size_t k,
    Rng& rng) {
  require(p >= 1 && k >= 1, "pk_sample: P and K must be positive");
  std::vector<std::size_t> eligible;
  for (std::size_t g = 0; g < groups.size(); ++g)
    if (!groups[g].empty()) eligible.push_back(g);
  require(eligible.size() >= p,
          "pk_sample: fewer than P eligible identities (" +
              std::to_string(eligible.size()) + " < " + std::to_string(p) + ")");

  // Partial Fisher-Yates for the identity draw.
  for (std::size_t i = 0; i < p; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(eligible.size() - i));
    std::swap(eligible[i], eligible[j]);
  }

  std::vector<std::size_t> batch;
  batch.reserve(p * k);
  std::vector<std::size_t> pool;
  for (std::size_t i = 0; i < p; ++i) {
    const auto& members = groups[eligible[i]];
    if (members.size() >= k) {
      pool = members;
      for (std::size_t s = 0; s < k; ++s) {
        const std::size_t j = s + static_cast<std::size_t>(rng.below(pool.size() - s));
        std::swap(pool[s], pool[j]);
        batch.push_back(pool[s]);
      }
    } else {
      batch.insert(batch.end(), members.begin(), members.end());
      for (std::size_t s = members.size(); s < k; ++s)
        batch.push_back(members[static_cast<std::size_t>(rng.below(members.size()))]);
    }
  }
  return batch;
}

inline std::vector<std::size_t> pk_sample(const Corpus& corpus, std::size_t p,
                                          std::size_t k, Rng& rng) {
  std::vector<std::vector<std::size_t>> groups;
  groups.reserve(corpus.identity_index.size());
  for (const auto& [id, rows] : corpus.identity_index) groups.push_back(rows);
  return pk_sample(groups, p, k, rng);
}

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

struct TrainConfig {
  double learning_rate = 1e-5;
  double weight_decay = 1e-6;
  double margin = 0.3;
  std::size_t identities_per_batch = 8;  // P
  std::size_t samples_per_identity = 4;  // K
  std::size_t epochs = 500;
  double aux_weight = 0.0;  // lambda for the descriptor reconstruction branch
  HeadKind head_kind = HeadKind::projection;
  std::uint64_t seed = 0;
  std::size_t embed_dim = 32;
  std::optional<std::vector<std::size_t>> encoder_dims;
  bool hardest_positive = true;  // false: uniform random positive per anchor
};

inline void validate_train_config(const TrainConfig& c) {
  require(c.learning_rate > 0.0, "train config: learning_rate must be > 0");
  require(c.weight_decay >= 0.0, "train config: weight_decay must be >= 0");
  require(c.margin >= 0.0, "train config: margin must be >= 0");
  require(c.identities_per_batch >= 2, "train config: P must be >= 2");
  require(c.samples_per_identity >= 2, "train config: K must be >= 2");
  require(c.aux_weight >= 0.0, "train config: aux_weight must be >= 0");
  require(c.embed_dim >= 1, "train config: embed_dim must be >= 1");
}

struct EpochLog {
  std::size_t epoch = 0;
  double mean_loss = 0.0;
  double active_fraction = 0.0;
  double mean_pos_dist = 0.0;
  double mean_neg_dist = 0.0;
};

struct TrainResult {
  HeadParams head;
  std::vector<EpochLog> log;
};

namespace detail {

/// Positive drawn uniformly among same-identity members; negative stays hard.
inline TripletIndices mine_random_positive(const Mat& embeddings,
                                           std::span<const std::int64_t> labels,
                                           Rng& rng) {
  TripletIndices hard = batch_hard_mine(embeddings, labels);
  const std::size_t n = embeddings.rows;
  for (auto& t : hard.triplets) {
    std::vector<std::size_t> candidates;
    for (std::size_t j = 0; j < n; ++j)
      if (j != t.anchor && labels[j] == labels[t.anchor]) candidates.push_back(j);
    t.positive = candidates[static_cast<std::size_t>(rng.below(candidates.size()))];
  }
  return hard;
}

}  // namespace detail

/// Deterministic given the seed: mining is recomputed from the current
/// embeddings every batch, and every reduction is order-fixed.
inline TrainResult train(const Mat& features, const std::vector<std::string>& labels,
                         const Mat* descriptors_true, const TrainConfig& config) {
  validate_train_config(config);
  require(features.rows == labels.size(), "train: features/labels size mismatch");
  require(features.rows > 0, "train: empty feature set");
  if (descriptors_true && !descriptors_true->empty())
    require(descriptors_true->rows == features.rows,
            "train: descriptor row count mismatch");

  std::map<std::string, std::vector<std::size_t>> by_label;
  for (std::size_t i = 0; i < labels.size(); ++i) by_label[labels[i]].push_back(i);
  std::vector<std::vector<std::size_t>> groups;
  groups.reserve(by_label.size());
  for (const auto& [id, rows] : by_label) groups.push_back(rows);

  std::map<std::string, std::int64_t> label_codes;
  for (const auto& [id, rows] : by_label)
    label_codes.emplace(id, static_cast<std::int64_t>(label_codes.size()));

  const std::size_t n_desc =
      descriptors_true && !descriptors_true->empty() ? descriptors_true->cols : 30;
  TrainResult result;
  result.head = config.head_kind == HeadKind::projection
                    ? make_projection_head(features.cols, config.embed_dim)
                    : make_bottleneck_head(features.cols, config.embed_dim, n_desc,
                                           config.encoder_dims);
  Rng base(config.seed);
  Rng init_rng = base.derive(1);
  Rng sample_rng = base.derive(2);
  init_head(result.head, init_rng);

  const bool use_recon = config.head_kind == HeadKind::linguistic_bottleneck &&
                         config.aux_weight > 0.0 && descriptors_true &&
                         !descriptors_true->empty();

  AdamState adam = make_adam_state(result.head);
  const std::size_t p = config.identities_per_batch;
  const std::size_t k = config.samples_per_identity;
  const std::size_t batches = std::max<std::size_t>(1, features.rows / (p * k));

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    NeumaierSum loss_acc, active_acc, pos_acc, neg_acc;
    for (std::size_t b = 0; b < batches; ++b) {
      const std::vector<std::size_t> rows = pk_sample(groups, p, k, sample_rng);
      Mat xb(rows.size(), features.cols);
      std::vector<std::int64_t> lab(rows.size());
      for (std::size_t r = 0; r < rows.size(); ++r) {
        std::copy(features.row(rows[r]), features.row(rows[r]) + features.cols,
                  xb.row(r));
        lab[r] = label_codes.at(labels[rows[r]]);
      }

      ForwardCache cache;
      const Forward fwd = forward(result.head, xb, &cache);
      const TripletIndices mined =
          config.hardest_positive
              ? batch_hard_mine(fwd.embeddings, lab)
              : detail::mine_random_positive(fwd.embeddings, lab, sample_rng);
      if (mined.triplets.empty()) continue;

      const TripletLossResult trip =
          triplet_loss_and_grad(fwd.embeddings, mined, config.margin);
      double total_loss = trip.loss;
      Mat grad_desc;
      if (use_recon) {
        Mat db(rows.size(), descriptors_true->cols);
        for (std::size_t r = 0; r < rows.size(); ++r)
          std::copy(descriptors_true->row(rows[r]),
                    descriptors_true->row(rows[r]) + descriptors_true->cols,
                    db.row(r));
        const ReconLossResult recon =
            linguistic_recon_loss_and_grad(fwd.descriptors, db);
        total_loss += config.aux_weight * recon.loss;
        grad_desc = recon.grad;
      }

      const HeadParams grads =
          backward(result.head, cache, trip.grad, grad_desc, config.aux_weight);
      adam_step(result.head, grads, adam, config.learning_rate, config.weight_decay);

      loss_acc.add(total_loss);
      active_acc.add(static_cast<double>(trip.active) /
                     static_cast<double>(mined.triplets.size()));
      pos_acc.add(trip.mean_pos_dist);
      neg_acc.add(trip.mean_neg_dist);
    }
    const double nb = static_cast<double>(batches);
    result.log.push_back({epoch, loss_acc.value() / nb, active_acc.value() / nb,
                          pos_acc.value() / nb, neg_acc.value() / nb});
  }
  return result;
}

// ---------------------------------------------------------------------------
// Checkpoints and training logs
// ---------------------------------------------------------------------------

inline constexpr char kHeadMagic[4] = {'B', 'I', 'D', 'H'};
inline constexpr std::uint32_t kHeadVersion = 1;

inline void save_head(const HeadParams& h, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), "cannot write head checkpoint: " + path);
  out.write(kHeadMagic, 4);
  detail::put_u32(out, kHeadVersion);
  detail::put_u32(out, h.kind == HeadKind::projection ? 0 : 1);
  detail::put_u32(out, static_cast<std::uint32_t>(h.d_in));
  detail::put_u32(out, static_cast<std::uint32_t>(h.d_out));
  detail::put_u32(out, static_cast<std::uint32_t>(h.n_desc));
  const auto write_affine = [&out](const Affine& l) {
    detail::put_u32(out, static_cast<std::uint32_t>(l.in));
    detail::put_u32(out, static_cast<std::uint32_t>(l.out));
    std::vector<float> buf(l.w.size());
    for (std::size_t i = 0; i < l.w.size(); ++i) buf[i] = static_cast<float>(l.w[i]);
    out.write(reinterpret_cast<const char*>(buf.data()),
              static_cast<std::streamsize>(buf.size() * sizeof(float)));
    buf.resize(l.b.size());
    for (std::size_t i = 0; i < l.b.size(); ++i) buf[i] = static_cast<float>(l.b[i]);
    out.write(reinterpret_cast<const char*>(buf.data()),
              static_cast<std::streamsize>(buf.size() * sizeof(float)));
  };
  detail::put_u32(out, static_cast<std::uint32_t>(h.encoder.size()));
  for (const auto& l : h.encoder) write_affine(l);
  detail::put_u32(out, static_cast<std::uint32_t>(h.decoder.size()));
  for (const auto& l : h.decoder) write_affine(l);
  if (h.kind == HeadKind::linguistic_bottleneck) write_affine(h.id_map);
  require(out.good(), "write failed: " + path);
}

inline HeadParams load_head(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), "cannot open head checkpoint: " + path);
  char magic[4];
  in.read(magic, 4);
  require(in.gcount() == 4 && std::memcmp(magic, kHeadMagic, 4) == 0,
          "bad magic in head checkpoint: " + path);
  require(detail::get_u32(in, path) == kHeadVersion,
          "unsupported head checkpoint version in " + path);
  HeadParams h;
  h.kind = detail::get_u32(in, path) == 0 ? HeadKind::projection
                                          : HeadKind::linguistic_bottleneck;
  h.d_in = detail::get_u32(in, path);
  h.d_out = detail::get_u32(in, path);
  h.n_desc = detail::get_u32(in, path);
  const auto read_affine = [&in, &path]() {
    const std::uint32_t fan_in = detail::get_u32(in, path);
    const std::uint32_t fan_out = detail::get_u32(in, path);
    Affine l(fan_in, fan_out);
    std::vector<float> buf(l.w.size());
    in.read(reinterpret_cast<char*>(buf.data()),
            static_cast<std::streamsize>(buf.size() * sizeof(float)));
    require(in.gcount() == static_cast<std::streamsize>(buf.size() * sizeof(float)),
            "truncated head checkpoint: " + path);
    for (std::size_t i = 0; i < buf.size(); ++i) l.w[i] = buf[i];
    buf.resize(l.b.size());
    in.read(reinterpret_cast<char*>(buf.data()),
            static_cast<std::streamsize>(buf.size() * sizeof(float)));
    require(in.gcount() == static_cast<std::streamsize>(buf.size() * sizeof(float)),
            "truncated head checkpoint: " + path);
    for (std::size_t i = 0; i < buf.size(); ++i) l.b[i] = buf[i];
    return l;
  };
  const std::uint32_t n_enc = detail::get_u32(in, path);
  for (std::uint32_t i = 0; i < n_enc; ++i) h.encoder.push_back(read_affine());
  const std::uint32_t n_dec = detail::get_u32(in, path);
  for (std::uint32_t i = 0; i < n_dec; ++i) h.decoder.push_back(read_affine());
  if (h.kind == HeadKind::linguistic_bottleneck) h.id_map = read_affine();
  return h;
}

inline nlohmann::json epoch_log_to_json(const EpochLog& e) {
  return {{"epoch", e.epoch},
          {"mean_loss", e.mean_loss},
          {"active_fraction", e.active_fraction},
          {"mean_pos_dist", e.mean_pos_dist},
          {"mean_neg_dist", e.mean_neg_dist}};
}

inline void write_train_log_jsonl(const std::vector<EpochLog>& log,
                                  const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), "cannot write training log: " + path);
  for (const auto& e : log) out << epoch_log_to_json(e).dump() << "\n";
}

}  // namespace bide
