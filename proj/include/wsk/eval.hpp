#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "wsk/modelset.hpp"
#include "wsk/second_order.hpp"

namespace wsk::eval {

enum class BaselineMode {
  random_prediction,
  fc_only,
  frobenius_unaligned,
  frobenius_aligned,
};

const char* mode_name(BaselineMode mode);
BaselineMode mode_from_name(const std::string& name);

// ---- primitives ------------------------------------------------------------

struct KMeansResult {
  std::vector<int> labels;
  int iterations = 0;
  bool converged = false;
  std::vector<double> objective;  // sum of squared distances after each assignment
};

// Lloyd's algorithm with k-means++ seeding; empty clusters are reseeded
// from the point farthest from its centroid. Deterministic in seed.
KMeansResult kmeans(std::span<const double> points, std::size_t n, std::size_t dim, int k,
                    std::uint64_t seed, int max_iters = 100);

// Adjusted rand index between two labelings (pair-counting, chance
// corrected), in [-1, 1].
double ari(std::span<const int> a, std::span<const int> b);

// Spearman rank correlation (average ranks on ties).
double spearman(std::span<const double> x, std::span<const double> y);

// Closed-form baselines: uniform label guess / uniform gallery order.
double random_top_k(int n_tasks, int k);
double random_rank_k(int gallery_size, int same_task, int k);

// ---- reports ---------------------------------------------------------------

struct MetricRow {
  std::string name;
  double k1 = 0, k5 = 0, k10 = 0;   // top-k or rank-k fractions, seed-averaged
  std::vector<double> per_seed_k1;  // k=1 value per split seed
};

struct QueryDetail {
  std::uint64_t seed = 0;
  int index = 0;       // row index of the evaluated checkpoint
  int true_label = 0;  // task id
  int hit_rank = 0;    // 1-based rank of the first correct answer
};

struct TransferPair {
  int source_task = 0, target_task = 0;
  std::size_t source_row = 0, target_row = 0;
  double similarity = 0;
  double ari_value = 0;
  bool flagged = false;  // k-means failed to converge; excluded from rho
};

struct EvalReport {
  std::string protocol;  // classification | retrieval | transferability | ...
  std::string mode;
  std::vector<std::uint64_t> seeds;
  std::vector<MetricRow> rows;
  std::vector<QueryDetail> queries;
  std::vector<TransferPair> pairs;
  double spearman_rho = 0.0;
  int flagged_pairs = 0;
  // Wall time, carried in memory for acceptance bounds; never serialized
  // (written reports must be byte-identical across runs).
  double runtime_seconds = 0.0;
};

// ---- protocol options ------------------------------------------------------

struct RunOptions {
  std::vector<double> branch_weights;    // empty -> one-hot on branch 1
  sonet::TrainConfig train;              // seed is derived from the split seed
  std::vector<sonet::AlignFlags> flags;  // empty -> implied by the mode
  std::size_t feature_branch = 0;        // retrieval / similarity branch
};

// Loads every manifest row once so repeated runs share checkpoints.
struct CheckpointCache {
  explicit CheckpointCache(const ModelSet& ms);
  // In-memory modelsets (tests, synthetic degenerate sets); checkpoints
  // must be indexed like ms.rows.
  CheckpointCache(const ModelSet& ms, std::vector<Checkpoint> preloaded);
  const ModelSet& ms;
  std::vector<Checkpoint> checkpoints;  // indexed like ms.rows
};

// Trains one second-order net for the mode on the given classification
// split and returns it (exposed for the transferability protocol and the
// CLI's train-second-order command).
sonet::SecondOrderParams train_classification_net(const CheckpointCache& cache,
                                                  BaselineMode mode, const SplitPlan& split,
                                                  const RunOptions& opts);
struct RetrievalNet {
  sonet::SecondOrderParams params;
  std::vector<int> train_tasks;  // ascending; label = position in this list
};
RetrievalNet train_retrieval_net(const CheckpointCache& cache, BaselineMode mode,
                                 const SplitPlan& split, const RunOptions& opts);

// ---- protocols -------------------------------------------------------------

EvalReport eval_classification(const CheckpointCache& cache, BaselineMode mode,
                               std::span<const std::uint64_t> seeds,
                               const RunOptions& opts = {});

EvalReport eval_retrieval(const CheckpointCache& cache, BaselineMode mode,
                          std::span<const std::uint64_t> seeds, const RunOptions& opts = {});

struct TransferOptions {
  int n_pairs = 60;
  int cluster_batch = 200;
  int kmeans_max_iters = 100;
  std::uint64_t seed = 0;
  std::size_t feature_branch = 0;
};

EvalReport eval_transferability(const CheckpointCache& cache,
                                const sonet::SecondOrderParams& params,
                                const TransferOptions& options);

// Per-branch one-hot runs on the 3x-length schedule.
EvalReport ablate_branches(const CheckpointCache& cache, std::span<const std::uint64_t> seeds,
                           const RunOptions& opts = {});

// For each branch >= 2: the four {filter on/off} x {channel on/off}
// variants, one-hot weighted, extended schedule.
EvalReport ablate_alignment(const CheckpointCache& cache,
                            std::span<const std::uint64_t> seeds, const RunOptions& opts = {});

}  // namespace wsk::eval
