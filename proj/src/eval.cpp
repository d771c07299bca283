#include "wsk/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

#include "wsk/log.hpp"
#include "wsk/rng.hpp"

namespace wsk::eval {

namespace {

constexpr std::uint64_t kSoInitSalt = 0x21e57;
constexpr std::uint64_t kSoTrainSalt = 0x21e58;
constexpr std::uint64_t kTransferPairSalt = 0x7a215;
constexpr std::uint64_t kTransferBatchSalt = 0x7a216;
constexpr std::uint64_t kTransferKmeansSalt = 0x7a217;

double comb2(double x) { return x * (x - 1.0) / 2.0; }

sonet::InitOptions options_for_mode(BaselineMode mode, const RunOptions& opts, std::size_t L) {
  require(mode != BaselineMode::random_prediction, ErrorCode::config,
          "random_prediction does not train a network");
  sonet::InitOptions init;
  init.input = mode == BaselineMode::fc_only ? sonet::BranchInput::raw_weights
                                             : sonet::BranchInput::sorted_scores;
  if (!opts.flags.empty()) {
    init.flags = opts.flags;
  } else if (mode == BaselineMode::frobenius_unaligned) {
    init.flags.assign(L, sonet::AlignFlags{false, false});
  } else {
    init.flags.assign(L, sonet::AlignFlags{true, true});
  }
  init.branch_weights =
      opts.branch_weights.empty() ? sonet::one_hot_weights(L, 0) : opts.branch_weights;
  return init;
}

// 1-based rank of the true label under descending probability; ties are
// broken toward lower class indices.
int label_rank(const Tensor& probs, int label) {
  const double p = probs[label];
  int rank = 1;
  for (std::size_t j = 0; j < probs.size(); ++j) {
    if (static_cast<int>(j) == label) continue;
    if (probs[j] > p || (probs[j] == p && static_cast<int>(j) < label)) ++rank;
  }
  return rank;
}

}  // namespace

const char* mode_name(BaselineMode mode) {
  switch (mode) {
    case BaselineMode::random_prediction: return "random_prediction";
    case BaselineMode::fc_only: return "fc_only";
    case BaselineMode::frobenius_unaligned: return "frobenius_unaligned";
    case BaselineMode::frobenius_aligned: return "frobenius_aligned";
  }
  return "?";
}

BaselineMode mode_from_name(const std::string& name) {
  for (int m = 0; m < 4; ++m) {
    const auto mode = static_cast<BaselineMode>(m);
    if (name == mode_name(mode)) return mode;
  }
  throw Error(ErrorCode::config, "unknown mode '" + name + "'");
}

// ---- primitives ------------------------------------------------------------

KMeansResult kmeans(std::span<const double> points, std::size_t n, std::size_t dim, int k,
                    std::uint64_t seed, int max_iters) {
  require(points.size() == n * dim, ErrorCode::precondition, "kmeans: points size mismatch");
  require(k >= 2 && static_cast<std::size_t>(k) <= n, ErrorCode::precondition,
          "kmeans: need 2 <= k <= n");
  require(max_iters >= 1, ErrorCode::precondition, "kmeans: max_iters must be >= 1");

  Rng rng(mix_seed(seed, 0x63a7));
  auto dist2 = [&](std::size_t i, const double* center) {
    const double* p = points.data() + i * dim;
    double acc = 0.0;
    for (std::size_t d = 0; d < dim; ++d) {
      const double diff = p[d] - center[d];
      acc += diff * diff;
    }
    return acc;
  };

  // k-means++ seeding.
  std::vector<double> centers(static_cast<std::size_t>(k) * dim);
  std::copy_n(points.data() + rng.below(n) * dim, dim, centers.begin());
  std::vector<double> best(n, std::numeric_limits<double>::infinity());
  for (int c = 1; c < k; ++c) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      best[i] = std::min(best[i], dist2(i, centers.data() + (c - 1) * dim));
      total += best[i];
    }
    std::size_t pick = 0;
    if (total > 0.0) {
      const double r = rng.uniform() * total;
      double acc = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        acc += best[i];
        if (acc >= r) {
          pick = i;
          break;
        }
      }
    } else {
      pick = rng.below(n);
    }
    std::copy_n(points.data() + pick * dim, dim, centers.begin() + c * dim);
  }

  KMeansResult result;
  result.labels.assign(n, 0);
  std::vector<int> counts(k, 0);
  for (int iter = 0; iter < max_iters; ++iter) {
    // Assignment; ties go to the lowest centroid index.
    bool changed = iter == 0;
    double objective = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      int best_c = 0;
      double best_d = dist2(i, centers.data());
      for (int c = 1; c < k; ++c) {
        const double d = dist2(i, centers.data() + static_cast<std::size_t>(c) * dim);
        if (d < best_d) {
          best_d = d;
          best_c = c;
        }
      }
      objective += best_d;
      if (result.labels[i] != best_c) {
        result.labels[i] = best_c;
        changed = true;
      }
    }
    result.objective.push_back(objective);
    result.iterations = iter + 1;
    if (!changed) {
      result.converged = true;
      break;
    }
    // Update.
    std::fill(centers.begin(), centers.end(), 0.0);
    std::fill(counts.begin(), counts.end(), 0);
    for (std::size_t i = 0; i < n; ++i) {
      double* c = centers.data() + static_cast<std::size_t>(result.labels[i]) * dim;
      const double* p = points.data() + i * dim;
      for (std::size_t d = 0; d < dim; ++d) c[d] += p[d];
      ++counts[result.labels[i]];
    }
    for (int c = 0; c < k; ++c) {
      if (counts[c] == 0) continue;
      double* center = centers.data() + static_cast<std::size_t>(c) * dim;
      for (std::size_t d = 0; d < dim; ++d) center[d] /= counts[c];
    }
    // Reseed empty clusters from the farthest point (deterministic).
    for (int c = 0; c < k; ++c) {
      if (counts[c] != 0) continue;
      std::size_t far = 0;
      double far_d = -1.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double d =
            dist2(i, centers.data() + static_cast<std::size_t>(result.labels[i]) * dim);
        if (d > far_d) {
          far_d = d;
          far = i;
        }
      }
      std::copy_n(points.data() + far * dim, dim,
                  centers.begin() + static_cast<std::size_t>(c) * dim);
    }
  }
  return result;
}

double ari(std::span<const int> a, std::span<const int> b) {
  require(a.size() == b.size(), ErrorCode::precondition, "ari: label vectors differ in length");
  require(!a.empty(), ErrorCode::precondition, "ari: empty labelings");
  const std::size_t n = a.size();
  std::map<int, int> map_a, map_b;
  for (int v : a) map_a.emplace(v, static_cast<int>(map_a.size()));
  for (int v : b) map_b.emplace(v, static_cast<int>(map_b.size()));
  const std::size_t ka = map_a.size(), kb = map_b.size();
  std::vector<double> contingency(ka * kb, 0.0), row(ka, 0.0), col(kb, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const int ia = map_a.at(a[i]);
    const int ib = map_b.at(b[i]);
    contingency[static_cast<std::size_t>(ia) * kb + ib] += 1.0;
    row[ia] += 1.0;
    col[ib] += 1.0;
  }
  double sum_cells = 0.0, sum_row = 0.0, sum_col = 0.0;
  for (double v : contingency) sum_cells += comb2(v);
  for (double v : row) sum_row += comb2(v);
  for (double v : col) sum_col += comb2(v);
  const double pairs = comb2(static_cast<double>(n));
  if (pairs == 0.0) return 1.0;
  const double expected = sum_row * sum_col / pairs;
  const double max_index = 0.5 * (sum_row + sum_col);
  if (max_index == expected) return sum_cells == expected ? 1.0 : 0.0;
  return (sum_cells - expected) / (max_index - expected);
}

namespace {

std::vector<double> average_ranks(std::span<const double> x) {
  const std::size_t n = x.size();
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && x[idx[j + 1]] == x[idx[i]]) ++j;
    const double rank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t t = i; t <= j; ++t) ranks[idx[t]] = rank;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

double spearman(std::span<const double> x, std::span<const double> y) {
  require(x.size() == y.size() && x.size() >= 2, ErrorCode::precondition,
          "spearman: need two equal-length series");
  const std::vector<double> rx = average_ranks(x);
  const std::vector<double> ry = average_ranks(y);
  const std::size_t n = x.size();
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += rx[i];
    my += ry[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double num = 0, vx = 0, vy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    num += (rx[i] - mx) * (ry[i] - my);
    vx += (rx[i] - mx) * (rx[i] - mx);
    vy += (ry[i] - my) * (ry[i] - my);
  }
  if (vx == 0.0 || vy == 0.0) return 0.0;
  return num / std::sqrt(vx * vy);
}

double random_top_k(int n_tasks, int k) {
  require(n_tasks >= 1 && k >= 1, ErrorCode::precondition, "random_top_k: bad arguments");
  return std::min(k, n_tasks) / static_cast<double>(n_tasks);
}

double random_rank_k(int gallery_size, int same_task, int k) {
  require(gallery_size >= 1 && same_task >= 0 && same_task <= gallery_size && k >= 1,
          ErrorCode::precondition, "random_rank_k: bad arguments");
  if (same_task == 0) return 0.0;
  double miss = 1.0;
  for (int i = 0; i < std::min(k, gallery_size); ++i) {
    const int remaining_others = gallery_size - same_task - i;
    if (remaining_others <= 0) return 1.0;
    miss *= static_cast<double>(remaining_others) / static_cast<double>(gallery_size - i);
  }
  return 1.0 - miss;
}

// ---- shared protocol machinery ---------------------------------------------

CheckpointCache::CheckpointCache(const ModelSet& modelset) : ms(modelset) {
  checkpoints.reserve(ms.rows.size());
  for (std::size_t i = 0; i < ms.rows.size(); ++i) checkpoints.push_back(ms.load_row(i));
}

CheckpointCache::CheckpointCache(const ModelSet& modelset, std::vector<Checkpoint> preloaded)
    : ms(modelset), checkpoints(std::move(preloaded)) {
  require(checkpoints.size() == ms.rows.size(), ErrorCode::precondition,
          "checkpoint cache: one checkpoint per manifest row required");
}

sonet::SecondOrderParams train_classification_net(const CheckpointCache& cache,
                                                  BaselineMode mode, const SplitPlan& split,
                                                  const RunOptions& opts) {
  const std::size_t L = cache.ms.arch.conv.size();
  sonet::SecondOrderParams params =
      init_params(cache.ms.arch, cache.ms.n_tasks(), options_for_mode(mode, opts, L),
                  mix_seed(split.seed, kSoInitSalt));
  std::vector<const Checkpoint*> train_set;
  std::vector<int> labels;
  for (std::size_t row : split.train_rows) {
    train_set.push_back(&cache.checkpoints[row]);
    labels.push_back(cache.ms.rows[row].task_id);
  }
  sonet::TrainConfig cfg = opts.train;
  cfg.seed = mix_seed(split.seed, kSoTrainSalt);
  sonet::train(params, train_set, labels, cfg);
  return params;
}

RetrievalNet train_retrieval_net(const CheckpointCache& cache, BaselineMode mode,
                                 const SplitPlan& split, const RunOptions& opts) {
  RetrievalNet net;
  net.train_tasks = split.train_tasks;  // ascending by construction
  std::vector<const Checkpoint*> train_set;
  std::vector<int> labels;
  for (std::size_t label = 0; label < net.train_tasks.size(); ++label) {
    for (std::size_t row : cache.ms.task_rows(net.train_tasks[label])) {
      train_set.push_back(&cache.checkpoints[row]);
      labels.push_back(static_cast<int>(label));
    }
  }
  const std::size_t L = cache.ms.arch.conv.size();
  net.params = init_params(cache.ms.arch, static_cast<int>(net.train_tasks.size()),
                           options_for_mode(mode, opts, L), mix_seed(split.seed, kSoInitSalt));
  sonet::TrainConfig cfg = opts.train;
  cfg.seed = mix_seed(split.seed, kSoTrainSalt);
  sonet::train(net.params, train_set, labels, cfg);
  return net;
}

// ---- protocols -------------------------------------------------------------

EvalReport eval_classification(const CheckpointCache& cache, BaselineMode mode,
                               std::span<const std::uint64_t> seeds, const RunOptions& opts) {
  require(!seeds.empty(), ErrorCode::precondition, "eval_classification: need >= 1 seed");
  EvalReport report;
  report.protocol = "classification";
  report.mode = mode_name(mode);
  report.seeds.assign(seeds.begin(), seeds.end());

  MetricRow row;
  row.name = mode_name(mode);
  if (mode == BaselineMode::random_prediction) {
    const int N = cache.ms.n_tasks();
    row.k1 = random_top_k(N, 1);
    row.k5 = random_top_k(N, 5);
    row.k10 = random_top_k(N, 10);
    row.per_seed_k1.assign(seeds.size(), row.k1);
    report.rows.push_back(std::move(row));
    return report;
  }

  for (std::uint64_t seed : seeds) {
    const SplitPlan split = make_split(cache.ms, SplitMode::classification, seed);
    const sonet::SecondOrderParams params =
        train_classification_net(cache, mode, split, opts);
    double hit1 = 0, hit5 = 0, hit10 = 0;
    for (std::size_t test_row : split.test_rows) {
      const int label = cache.ms.rows[test_row].task_id;
      const sonet::ForwardRecord record = forward(params, cache.checkpoints[test_row]);
      const int rank = label_rank(record.fused, label);
      if (rank <= 1) ++hit1;
      if (rank <= 5) ++hit5;
      if (rank <= 10) ++hit10;
      report.queries.push_back({seed, static_cast<int>(test_row), label, rank});
    }
    const double count = static_cast<double>(split.test_rows.size());
    row.per_seed_k1.push_back(hit1 / count);
    row.k1 += hit1 / count;
    row.k5 += hit5 / count;
    row.k10 += hit10 / count;
  }
  const double s = static_cast<double>(seeds.size());
  row.k1 /= s;
  row.k5 /= s;
  row.k10 /= s;
  report.rows.push_back(std::move(row));
  return report;
}

EvalReport eval_retrieval(const CheckpointCache& cache, BaselineMode mode,
                          std::span<const std::uint64_t> seeds, const RunOptions& opts) {
  require(!seeds.empty(), ErrorCode::precondition, "eval_retrieval: need >= 1 seed");
  EvalReport report;
  report.protocol = "retrieval";
  report.mode = mode_name(mode);
  report.seeds.assign(seeds.begin(), seeds.end());

  MetricRow row;
  row.name = mode_name(mode);
  for (std::uint64_t seed : seeds) {
    const SplitPlan split = make_split(cache.ms, SplitMode::retrieval, seed);
    const int G = static_cast<int>(split.gallery_rows.size());

    if (mode == BaselineMode::random_prediction) {
      double r1 = 0, r5 = 0, r10 = 0;
      for (std::size_t q : split.query_rows) {
        int same = 0;
        for (std::size_t g : split.gallery_rows)
          if (cache.ms.rows[g].task_id == cache.ms.rows[q].task_id) ++same;
        r1 += random_rank_k(G, same, 1);
        r5 += random_rank_k(G, same, 5);
        r10 += random_rank_k(G, same, 10);
      }
      const double nq = static_cast<double>(split.query_rows.size());
      row.per_seed_k1.push_back(r1 / nq);
      row.k1 += r1 / nq;
      row.k5 += r5 / nq;
      row.k10 += r10 / nq;
      continue;
    }

    const RetrievalNet net = train_retrieval_net(cache, mode, split, opts);
    std::vector<sonet::Feature> gallery;
    gallery.reserve(split.gallery_rows.size());
    for (std::size_t g : split.gallery_rows)
      gallery.push_back(
          extract_features(net.params, cache.checkpoints[g], opts.feature_branch));

    double r1 = 0, r5 = 0, r10 = 0;
    for (std::size_t q : split.query_rows) {
      const sonet::Feature qf =
          extract_features(net.params, cache.checkpoints[q], opts.feature_branch);
      std::vector<std::pair<double, std::size_t>> scored;  // (-cosine, position)
      scored.reserve(gallery.size());
      for (std::size_t gi = 0; gi < gallery.size(); ++gi) {
        double cosine = 0.0;
        if (!qf.degenerate && !gallery[gi].degenerate)
          for (std::size_t d = 0; d < qf.values.size(); ++d)
            cosine += qf.values[d] * gallery[gi].values[d];
        scored.emplace_back(-cosine, gi);
      }
      std::sort(scored.begin(), scored.end());
      int first_correct = G;
      for (int r = 0; r < G; ++r) {
        const std::size_t g = split.gallery_rows[scored[r].second];
        if (cache.ms.rows[g].task_id == cache.ms.rows[q].task_id) {
          first_correct = r + 1;
          break;
        }
      }
      report.queries.push_back(
          {seed, static_cast<int>(q), cache.ms.rows[q].task_id, first_correct});
      if (first_correct <= 1) ++r1;
      if (first_correct <= 5) ++r5;
      if (first_correct <= 10) ++r10;
    }
    const double nq = static_cast<double>(split.query_rows.size());
    row.per_seed_k1.push_back(r1 / nq);
    row.k1 += r1 / nq;
    row.k5 += r5 / nq;
    row.k10 += r10 / nq;
  }
  const double s = static_cast<double>(seeds.size());
  row.k1 /= s;
  row.k5 /= s;
  row.k10 /= s;
  report.rows.push_back(std::move(row));
  return report;
}

EvalReport eval_transferability(const CheckpointCache& cache,
                                const sonet::SecondOrderParams& params,
                                const TransferOptions& options) {
  require(options.n_pairs >= 10, ErrorCode::precondition,
          "eval_transferability: n_pairs must be >= 10");
  require(options.cluster_batch >= 4, ErrorCode::precondition,
          "eval_transferability: cluster batch too small");
  EvalReport report;
  report.protocol = "transferability";
  report.mode = "frobenius_aligned";
  report.seeds = {options.seed};

  const int N = cache.ms.n_tasks();
  Rng rng(mix_seed(options.seed, kTransferPairSalt));
  std::vector<std::pair<int, int>> combos;
  for (int s = 0; s < N; ++s)
    for (int t = 0; t < N; ++t) combos.emplace_back(s, t);
  rng.shuffle(combos);
  std::vector<std::pair<int, int>> picked;
  for (int i = 0; i < options.n_pairs; ++i)
    picked.push_back(combos[static_cast<std::size_t>(i) % combos.size()]);

  std::vector<double> sims, aris;
  for (std::size_t p = 0; p < picked.size(); ++p) {
    const auto [src, dst] = picked[p];
    const auto src_rows = cache.ms.task_rows(src);
    const auto dst_rows = cache.ms.task_rows(dst);
    const std::size_t src_row = src_rows[rng.below(src_rows.size())];
    const std::size_t dst_row = dst_rows[rng.below(dst_rows.size())];
    const Checkpoint& source = cache.checkpoints[src_row];

    const Batch batch =
        sample_batch(cache.ms.suite[dst], options.cluster_batch,
                     mix_seed(options.seed, kTransferBatchSalt + p));
    const std::size_t n = batch.images.extent(0);
    const std::size_t dim = static_cast<std::size_t>(cache.ms.arch.feature_dim());
    std::vector<double> points(n * dim);
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<double> image(batch.images.data() + i * 3 * batch.images.extent(2) *
                                    batch.images.extent(3),
                                batch.images.data() + (i + 1) * 3 * batch.images.extent(2) *
                                    batch.images.extent(3));
      const Tensor img = Tensor::from(
          {3, batch.images.extent(2), batch.images.extent(3)}, std::move(image));
      const Tensor feats = gap_features(cache.ms.arch, source.weights, img);
      std::copy_n(feats.data(), dim, points.begin() + i * dim);
    }
    const KMeansResult km = kmeans(points, n, dim, 2,
                                   mix_seed(options.seed, kTransferKmeansSalt + p),
                                   options.kmeans_max_iters);
    TransferPair pair;
    pair.source_task = src;
    pair.target_task = dst;
    pair.source_row = src_row;
    pair.target_row = dst_row;
    pair.flagged = !km.converged;
    pair.ari_value = ari(km.labels, batch.labels);
    pair.similarity =
        similarity(params, source, cache.checkpoints[dst_row], options.feature_branch).value;
    if (pair.flagged) {
      ++report.flagged_pairs;
    } else {
      sims.push_back(pair.similarity);
      aris.push_back(pair.ari_value);
    }
    report.pairs.push_back(pair);
  }
  require(sims.size() >= 2, ErrorCode::precondition,
          "eval_transferability: too many flagged pairs for a correlation");
  report.spearman_rho = spearman(sims, aris);
  return report;
}

EvalReport ablate_branches(const CheckpointCache& cache, std::span<const std::uint64_t> seeds,
                           const RunOptions& opts) {
  const std::size_t L = cache.ms.arch.conv.size();
  EvalReport report;
  report.protocol = "ablate_branches";
  report.mode = "per_branch";
  report.seeds.assign(seeds.begin(), seeds.end());
  for (std::size_t b = 0; b < L; ++b) {
    RunOptions branch_opts = opts;
    branch_opts.branch_weights = sonet::one_hot_weights(L, b);
    branch_opts.train = opts.train.extended();
    EvalReport sub =
        eval_classification(cache, BaselineMode::frobenius_aligned, seeds, branch_opts);
    sub.rows[0].name = "branch " + std::to_string(b + 1);
    report.rows.push_back(std::move(sub.rows[0]));
    for (QueryDetail& q : sub.queries) report.queries.push_back(q);
  }
  MetricRow random_row;
  random_row.name = "random_prediction";
  random_row.k1 = random_top_k(cache.ms.n_tasks(), 1);
  random_row.k5 = random_top_k(cache.ms.n_tasks(), 5);
  random_row.k10 = random_top_k(cache.ms.n_tasks(), 10);
  random_row.per_seed_k1.assign(seeds.size(), random_row.k1);
  report.rows.push_back(std::move(random_row));
  return report;
}

EvalReport ablate_alignment(const CheckpointCache& cache,
                            std::span<const std::uint64_t> seeds, const RunOptions& opts) {
  const std::size_t L = cache.ms.arch.conv.size();
  require(L >= 2, ErrorCode::precondition, "ablate_alignment: needs >= 2 branches");
  EvalReport report;
  report.protocol = "ablate_alignment";
  report.mode = "per_variant";
  report.seeds.assign(seeds.begin(), seeds.end());
  for (std::size_t b = 1; b < L; ++b) {
    for (const bool filter_on : {true, false}) {
      for (const bool channel_on : {true, false}) {
        RunOptions variant = opts;
        variant.branch_weights = sonet::one_hot_weights(L, b);
        variant.train = opts.train.extended();
        variant.flags.assign(L, sonet::AlignFlags{channel_on, filter_on});
        EvalReport sub =
            eval_classification(cache, BaselineMode::frobenius_aligned, seeds, variant);
        sub.rows[0].name = "branch " + std::to_string(b + 1) + " filter=" +
                           (filter_on ? "on" : "off") + " channel=" +
                           (channel_on ? "on" : "off");
        report.rows.push_back(std::move(sub.rows[0]));
      }
    }
  }
  return report;
}

}  // namespace wsk::eval
