#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "wsk/checkpoint.hpp"
#include "wsk/taskgen.hpp"
#include "wsk/trainer.hpp"

namespace wsk {

struct ManifestRow {
  std::string file;  // relative to the modelset root
  int task_id = 0;
  std::uint64_t seed = 0;
  double train_accuracy = 0.0;
  bool excluded = false;
};

// A manifest-indexed collection of checkpoints grouped by task.
struct ModelSet {
  std::filesystem::path root;
  std::vector<ManifestRow> rows;
  std::vector<TaskSpec> suite;
  ArchDescriptor arch;
  TrainConfig config;
  int repeats = 0;
  std::uint64_t base_seed = 0;

  int n_tasks() const { return static_cast<int>(suite.size()); }
  std::vector<std::size_t> task_rows(int task_id, bool include_excluded = false) const;
  std::vector<std::size_t> active_rows() const;  // non-excluded, manifest order
  Checkpoint load_row(std::size_t index) const;
};

struct BuildOptions {
  int repeats = 10;
  ArchDescriptor arch;
  TrainConfig config;
  std::uint64_t base_seed = 0;
  double accuracy_gate = 0.9;
  int max_retries = 3;  // fresh-seed retrainings after the first failure
  int jobs = 1;
};

// Trains repeats models per task (seeds base_seed + j), gates each on
// train accuracy, and persists checkpoints plus manifest.json under
// out_root. Failed attempts are kept as excluded manifest rows. Throws a
// build error naming the task if a slot exhausts its retries.
ModelSet build_modelset(const std::vector<TaskSpec>& suite, const BuildOptions& options,
                        const std::filesystem::path& out_root);

void save_manifest(const ModelSet& ms);
// verify = re-open every checkpoint and check the embedded task_id/seed
// and tensor shapes against the manifest row and arch.
ModelSet load_modelset(const std::filesystem::path& root, bool verify = true);

enum class SplitMode { classification, retrieval };

struct SplitPlan {
  SplitMode mode = SplitMode::classification;
  std::uint64_t seed = 0;
  // classification: row indices into ModelSet::rows
  std::vector<std::size_t> train_rows;
  std::vector<std::size_t> test_rows;
  // retrieval
  std::vector<int> train_tasks;
  std::vector<int> test_tasks;
  std::vector<std::size_t> query_rows;
  std::vector<std::size_t> gallery_rows;
};

// classification: per task ceil(0.8*m) train (capped at m-1 so a test
// checkpoint always remains), rest test. retrieval: floor(0.75*N) train
// tasks, rest test; per test task 2 query checkpoints, rest gallery.
// Deterministic in seed.
SplitPlan make_split(const ModelSet& ms, SplitMode mode, std::uint64_t seed);

}  // namespace wsk
