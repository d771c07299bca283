#include "wsk/align.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "wsk/kernels.hpp"
#include "wsk/rng.hpp"

namespace wsk::align {

namespace {

constexpr std::uint64_t kOrderChainSalt = 0x0c4a1;

void check_filter_pair(const Tensor& theta, const Tensor& phi) {
  require(theta.rank() == 4 && phi.rank() == 4, ErrorCode::shape_mismatch,
          "align: filter tensors must be rank 4, got " + theta.shape_string() + " and " +
              phi.shape_string());
  require(theta.extent(1) == phi.extent(1) && theta.extent(2) == phi.extent(2) &&
              theta.extent(3) == phi.extent(3),
          ErrorCode::shape_mismatch,
          "align: theta " + theta.shape_string() + " and phi " + phi.shape_string() +
              " must agree on (channels,h,w)");
}

double plane_dot(const double* a, const double* b, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

// Fixed-channel-order scoring shared by layer 1 and the channel-off
// ablation: S[gi][gj] = sum_c <theta[gi][c], phi[gj][c]>.
void score_fixed_order_pair(const Tensor& theta, const Tensor& phi, std::size_t gi,
                            std::size_t gj, std::size_t c, std::size_t plane, double* out) {
  const double* tp = theta.data() + gi * c * plane;
  const double* pp = phi.data() + gj * c * plane;
  *out = plane_dot(tp, pp, c * plane);
}

// Eq.-style max matching for one (gi, gj) pair; records winners and the
// smallest winning margin.
void score_channel_max_pair(const Tensor& theta, const Tensor& phi, std::size_t gi,
                            std::size_t gj, std::size_t c, std::size_t plane, double* out,
                            std::int32_t* argmax, double* margin) {
  const double* tbase = theta.data() + gi * c * plane;
  const double* pbase = phi.data() + gj * c * plane;
  double total = 0.0;
  double min_margin = std::numeric_limits<double>::infinity();
  for (std::size_t cj = 0; cj < c; ++cj) {
    const double* pj = pbase + cj * plane;
    double best = -std::numeric_limits<double>::infinity();
    double second = -std::numeric_limits<double>::infinity();
    std::size_t best_ci = 0;
    for (std::size_t ci = 0; ci < c; ++ci) {
      const double s = plane_dot(tbase + ci * plane, pj, plane);
      if (s > best) {
        second = best;
        best = s;
        best_ci = ci;
      } else if (s > second) {
        second = s;
      }
    }
    total += best;
    argmax[cj] = static_cast<std::int32_t>(best_ci);
    if (c > 1) min_margin = std::min(min_margin, best - second);
  }
  *out = total;
  *margin = min_margin;
}

}  // namespace

AlignmentScores score_first_layer(const Tensor& theta, const Tensor& phi) {
  check_filter_pair(theta, phi);
  require(theta.extent(1) == 3, ErrorCode::precondition,
          "score_first_layer: channel count must be 3 (image channel order is fixed), got " +
              std::to_string(theta.extent(1)));
  AlignmentScores s;
  s.layer = 1;
  s.g = theta.extent(0);
  s.gp = phi.extent(0);
  s.c = theta.extent(1);
  s.channel_max = false;
  s.scores.resize(s.g * s.gp);
  const std::size_t plane = theta.extent(2) * theta.extent(3);
  const auto pairs = static_cast<std::int64_t>(s.g * s.gp);
#pragma omp parallel for schedule(static) if (kernels::backend() == kernels::Backend::parallel)
  for (std::int64_t p = 0; p < pairs; ++p)
    score_fixed_order_pair(theta, phi, static_cast<std::size_t>(p) / s.gp,
                           static_cast<std::size_t>(p) % s.gp, s.c, plane, &s.scores[p]);
  return s;
}

AlignmentScores score_deep_layer(int layer, const Tensor& theta, const Tensor& phi,
                                 bool channel_align) {
  check_filter_pair(theta, phi);
  require(layer >= 2, ErrorCode::precondition,
          "score_deep_layer: layer must be >= 2, got " + std::to_string(layer));
  AlignmentScores s;
  s.layer = layer;
  s.g = theta.extent(0);
  s.gp = phi.extent(0);
  s.c = theta.extent(1);
  s.channel_max = channel_align;
  s.scores.resize(s.g * s.gp);
  const std::size_t plane = theta.extent(2) * theta.extent(3);
  const auto pairs = static_cast<std::int64_t>(s.g * s.gp);
  if (!channel_align) {
#pragma omp parallel for schedule(static) if (kernels::backend() == kernels::Backend::parallel)
    for (std::int64_t p = 0; p < pairs; ++p)
      score_fixed_order_pair(theta, phi, static_cast<std::size_t>(p) / s.gp,
                             static_cast<std::size_t>(p) % s.gp, s.c, plane, &s.scores[p]);
    return s;
  }
  s.channel_argmax.assign(s.g * s.gp * s.c, 0);
  std::vector<double> margins(s.g * s.gp);
#pragma omp parallel for schedule(static) if (kernels::backend() == kernels::Backend::parallel)
  for (std::int64_t p = 0; p < pairs; ++p)
    score_channel_max_pair(theta, phi, static_cast<std::size_t>(p) / s.gp,
                           static_cast<std::size_t>(p) % s.gp, s.c, plane, &s.scores[p],
                           &s.channel_argmax[static_cast<std::size_t>(p) * s.c], &margins[p]);
  for (double m : margins) s.min_max_margin = std::min(s.min_max_margin, m);
  return s;
}

BranchRepr canonicalize(AlignmentScores scores, bool sort) {
  require(scores.scores.size() == scores.g * scores.gp, ErrorCode::precondition,
          "canonicalize: score matrix size mismatch");
  BranchRepr repr;
  repr.layer = scores.layer;
  repr.g = scores.g;
  repr.gp = scores.gp;
  repr.sorted = sort;
  repr.values.resize(scores.g * scores.gp);
  repr.sort_perm.resize(scores.g * scores.gp);

  std::vector<std::int32_t> idx(scores.g);
  for (std::size_t gj = 0; gj < scores.gp; ++gj) {
    std::iota(idx.begin(), idx.end(), 0);
    if (sort) {
      // Stable + strict greater: equal scores keep ascending filter order.
      std::stable_sort(idx.begin(), idx.end(), [&](std::int32_t a, std::int32_t b) {
        return scores.scores[static_cast<std::size_t>(a) * scores.gp + gj] >
               scores.scores[static_cast<std::size_t>(b) * scores.gp + gj];
      });
    }
    for (std::size_t rank = 0; rank < scores.g; ++rank) {
      const double v =
          scores.scores[static_cast<std::size_t>(idx[rank]) * scores.gp + gj];
      repr.values[gj * scores.g + rank] = v;
      repr.sort_perm[gj * scores.g + rank] = idx[rank];
      if (sort && rank > 0)
        repr.min_sort_margin =
            std::min(repr.min_sort_margin, repr.values[gj * scores.g + rank - 1] - v);
    }
  }
  repr.routing = std::move(scores);
  return repr;
}

Tensor backprop_scores(const BranchRepr& repr, const Tensor& theta, const Tensor& phi,
                       std::span<const double> upstream) {
  check_filter_pair(theta, phi);
  const AlignmentScores& routing = repr.routing;
  require(theta.extent(0) == repr.g && phi.extent(0) == repr.gp &&
              theta.extent(1) == routing.c,
          ErrorCode::shape_mismatch, "backprop_scores: tensors do not match routing record");
  require(upstream.size() == repr.values.size(), ErrorCode::shape_mismatch,
          "backprop_scores: upstream length " + std::to_string(upstream.size()) +
              " != representation length " + std::to_string(repr.values.size()));

  // Guard against stale routing: the recorded winners and sort order must
  // match a recompute on the tensors we are differentiating through.
  AlignmentScores fresh = routing.layer == 1
                              ? score_first_layer(theta, phi)
                              : score_deep_layer(routing.layer, theta, phi, routing.channel_max);
  if (fresh.channel_argmax != routing.channel_argmax)
    throw Error(ErrorCode::consistency,
                "backprop_scores: recorded channel argmax disagrees with recompute");
  BranchRepr check = canonicalize(std::move(fresh), repr.sorted);
  if (check.sort_perm != repr.sort_perm)
    throw Error(ErrorCode::consistency,
                "backprop_scores: recorded sort permutation disagrees with recompute");

  // Upstream -> dS via the sort permutation.
  std::vector<double> dS(repr.g * repr.gp, 0.0);
  for (std::size_t gj = 0; gj < repr.gp; ++gj)
    for (std::size_t rank = 0; rank < repr.g; ++rank)
      dS[static_cast<std::size_t>(repr.sort_perm[gj * repr.g + rank]) * repr.gp + gj] +=
          upstream[gj * repr.g + rank];

  // dS -> dphi through the bilinear scoring; max routes everything to the
  // recorded winner.
  Tensor dphi(phi.shape());
  const std::size_t c = routing.c;
  const std::size_t plane = theta.extent(2) * theta.extent(3);
  for (std::size_t gj = 0; gj < repr.gp; ++gj) {
    double* dbase = dphi.data() + gj * c * plane;
    for (std::size_t gi = 0; gi < repr.g; ++gi) {
      const double up = dS[gi * repr.gp + gj];
      if (up == 0.0) continue;
      const double* tbase = theta.data() + gi * c * plane;
      if (routing.channel_max) {
        const std::int32_t* winners = &routing.channel_argmax[(gi * repr.gp + gj) * c];
        for (std::size_t cj = 0; cj < c; ++cj) {
          const double* tw = tbase + static_cast<std::size_t>(winners[cj]) * plane;
          double* dp = dbase + cj * plane;
          for (std::size_t i = 0; i < plane; ++i) dp[i] += up * tw[i];
        }
      } else {
        for (std::size_t ci = 0; ci < c; ++ci) {
          const double* tw = tbase + ci * plane;
          double* dp = dbase + ci * plane;
          for (std::size_t i = 0; i < plane; ++i) dp[i] += up * tw[i];
        }
      }
    }
  }
  kernels::ensure_finite(dphi, "backprop_scores");
  return dphi;
}

Tensor reorder_filters(const Tensor& filters, const std::vector<std::size_t>& perm) {
  require(filters.rank() == 4 && perm.size() == filters.extent(0), ErrorCode::precondition,
          "reorder_filters: permutation length must equal filter count");
  Tensor out(filters.shape());
  const std::size_t block = filters.extent(1) * filters.extent(2) * filters.extent(3);
  for (std::size_t i = 0; i < perm.size(); ++i) {
    require(perm[i] < filters.extent(0), ErrorCode::precondition,
            "reorder_filters: invalid permutation entry");
    std::copy_n(filters.data() + perm[i] * block, block, out.data() + i * block);
  }
  return out;
}

Tensor reorder_channels(const Tensor& filters, const std::vector<std::size_t>& perm) {
  require(filters.rank() == 4 && perm.size() == filters.extent(1), ErrorCode::precondition,
          "reorder_channels: permutation length must equal channel count");
  Tensor out(filters.shape());
  const std::size_t g = filters.extent(0);
  const std::size_t c = filters.extent(1);
  const std::size_t plane = filters.extent(2) * filters.extent(3);
  for (std::size_t fg = 0; fg < g; ++fg)
    for (std::size_t i = 0; i < c; ++i) {
      require(perm[i] < c, ErrorCode::precondition, "reorder_channels: invalid entry");
      std::copy_n(filters.data() + (fg * c + perm[i]) * plane, plane,
                  out.data() + (fg * c + i) * plane);
    }
  return out;
}

ModelWeights permute_layer_filters(const ArchDescriptor& arch, const ModelWeights& w,
                                   std::size_t layer, const std::vector<std::size_t>& perm,
                                   bool compensate) {
  w.validate_against(arch);
  require(layer < w.conv.size(), ErrorCode::precondition,
          "permute_layer_filters: layer out of range");
  ModelWeights out = w;
  out.conv[layer] = reorder_filters(w.conv[layer], perm);
  if (!compensate) return out;
  if (layer + 1 < w.conv.size()) {
    out.conv[layer + 1] = reorder_channels(w.conv[layer + 1], perm);
  } else {
    // GAP keeps channel identity, so dense columns follow the permutation.
    const std::size_t n = w.fc_weight.extent(0);
    const std::size_t m = w.fc_weight.extent(1);
    require(perm.size() == m, ErrorCode::precondition,
            "permute_layer_filters: dense width mismatch");
    Tensor fcw({n, m});
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < m; ++j) fcw.at(i, j) = w.fc_weight.at(i, perm[j]);
    out.fc_weight = std::move(fcw);
  }
  return out;
}

double check_order_chain(const Checkpoint& ck, const Tensor& probe, std::uint64_t seed) {
  ck.arch.validate();
  require(probe.rank() == 3 &&
              probe.extent(0) == static_cast<std::size_t>(ck.arch.image_channels) &&
              probe.extent(1) == static_cast<std::size_t>(ck.arch.image_size) &&
              probe.extent(2) == static_cast<std::size_t>(ck.arch.image_size),
          ErrorCode::unsupported_arch,
          "check_order_chain: probe " + probe.shape_string() + " does not match the arch input");

  Rng rng(mix_seed(seed, kOrderChainSalt));
  ModelWeights permuted = ck.weights;
  for (std::size_t l = 0; l < ck.arch.conv.size(); ++l) {
    const auto perm = rng.permutation(static_cast<std::size_t>(ck.arch.conv[l].out_filters));
    permuted = permute_layer_filters(ck.arch, permuted, l, perm, /*compensate=*/true);
  }
  const Tensor base = forward_logits(ck.arch, ck.weights, probe);
  const Tensor moved = forward_logits(ck.arch, permuted, probe);
  double dev = 0.0;
  for (std::size_t i = 0; i < base.size(); ++i)
    dev = std::max(dev, std::abs(base[i] - moved[i]));
  return dev;
}

}  // namespace wsk::align
