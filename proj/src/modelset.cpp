#include "wsk/modelset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "wsk/json_io.hpp"
#include "wsk/log.hpp"
#include "wsk/rng.hpp"

namespace wsk {

namespace {

constexpr std::uint64_t kRetrySeedStride = 1000003;
constexpr std::uint64_t kSplitSalt = 0x5b117;

std::string slot_file(int task_id, int repeat, int attempt) {
  char buf[64];
  if (attempt == 0)
    std::snprintf(buf, sizeof(buf), "task%02d_rep%02d.ckpt", task_id, repeat);
  else
    std::snprintf(buf, sizeof(buf), "task%02d_rep%02d_fail%d.ckpt", task_id, repeat, attempt);
  return buf;
}

Json config_to_json(const TrainConfig& c) {
  return Json{{"lr_initial", c.lr.initial},
              {"lr_decay_factor", c.lr.decay_factor},
              {"lr_decay_epochs", c.lr.decay_epochs},
              {"epochs", c.epochs},
              {"batch_size", c.batch_size},
              {"momentum", c.momentum},
              {"weight_decay", c.weight_decay},
              {"samples_per_class", c.samples_per_class},
              {"data_seed", c.data_seed}};
}

TrainConfig config_from_json(const Json& j) {
  TrainConfig c;
  c.lr.initial = j.at("lr_initial").get<double>();
  c.lr.decay_factor = j.at("lr_decay_factor").get<double>();
  c.lr.decay_epochs = j.at("lr_decay_epochs").get<std::vector<int>>();
  c.epochs = j.at("epochs").get<int>();
  c.batch_size = j.at("batch_size").get<int>();
  c.momentum = j.at("momentum").get<double>();
  c.weight_decay = j.at("weight_decay").get<double>();
  c.samples_per_class = j.at("samples_per_class").get<int>();
  c.data_seed = j.at("data_seed").get<std::uint64_t>();
  return c;
}

}  // namespace

std::vector<std::size_t> ModelSet::task_rows(int task_id, bool include_excluded) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < rows.size(); ++i)
    if (rows[i].task_id == task_id && (include_excluded || !rows[i].excluded))
      out.push_back(i);
  return out;
}

std::vector<std::size_t> ModelSet::active_rows() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < rows.size(); ++i)
    if (!rows[i].excluded) out.push_back(i);
  return out;
}

Checkpoint ModelSet::load_row(std::size_t index) const {
  require(index < rows.size(), ErrorCode::precondition, "modelset: row index out of range");
  return load_checkpoint(root / rows[index].file);
}

ModelSet build_modelset(const std::vector<TaskSpec>& suite, const BuildOptions& options,
                        const std::filesystem::path& out_root) {
  require(options.repeats >= 2, ErrorCode::precondition,
          "build_modelset: repeats must be >= 2 so intra-task pairs exist");
  require(!suite.empty(), ErrorCode::precondition, "build_modelset: empty suite");
  options.arch.validate();
  options.config.validate();
  std::filesystem::create_directories(out_root);

  struct SlotOutcome {
    std::vector<ManifestRow> rows;  // failed attempts then (if any) the pass
    bool ok = false;
    std::string error;
  };
  const int n_slots = static_cast<int>(suite.size()) * options.repeats;
  std::vector<SlotOutcome> outcomes(n_slots);

#pragma omp parallel for schedule(dynamic) num_threads(std::max(1, options.jobs))
  for (int slot = 0; slot < n_slots; ++slot) {
    const int t = slot / options.repeats;
    const int j = slot % options.repeats;
    SlotOutcome& outcome = outcomes[slot];
    try {
      for (int attempt = 0; attempt <= options.max_retries; ++attempt) {
        const std::uint64_t seed =
            options.base_seed + static_cast<std::uint64_t>(j) +
            static_cast<std::uint64_t>(attempt) * kRetrySeedStride;
        Checkpoint ck = train_first_order(suite[t], options.arch, options.config, seed);
        const bool pass = ck.train_accuracy >= options.accuracy_gate;
        const std::string file =
            pass ? slot_file(suite[t].task_id, j, 0) : slot_file(suite[t].task_id, j, attempt + 1);
        save_checkpoint(ck, out_root / file);
        outcome.rows.push_back(
            {file, ck.task_id, ck.seed, ck.train_accuracy, /*excluded=*/!pass});
        if (pass) {
          outcome.ok = true;
          break;
        }
        WSK_WARN("task %d repeat %d attempt %d: accuracy %.3f below gate %.2f",
                 suite[t].task_id, j, attempt, ck.train_accuracy, options.accuracy_gate);
      }
    } catch (const std::exception& e) {
      outcome.error = e.what();
    }
  }

  ModelSet ms;
  ms.root = out_root;
  ms.suite = suite;
  ms.arch = options.arch;
  ms.config = options.config;
  ms.repeats = options.repeats;
  ms.base_seed = options.base_seed;
  for (int slot = 0; slot < n_slots; ++slot) {
    const SlotOutcome& outcome = outcomes[slot];
    const int t = slot / options.repeats;
    if (!outcome.error.empty())
      throw Error(ErrorCode::build_error,
                  "build_modelset: task " + std::to_string(suite[t].task_id) + " (" +
                      suite[t].describe() + ") failed: " + outcome.error);
    if (!outcome.ok)
      throw Error(ErrorCode::build_error,
                  "build_modelset: task " + std::to_string(suite[t].task_id) + " (" +
                      suite[t].describe() + ") missed the accuracy gate in " +
                      std::to_string(options.max_retries + 1) + " attempts");
    for (const ManifestRow& row : outcome.rows) ms.rows.push_back(row);
  }
  save_manifest(ms);
  return ms;
}

void save_manifest(const ModelSet& ms) {
  Json suite = Json::array();
  for (const TaskSpec& t : ms.suite) suite.push_back(task_to_json(t));
  Json rows = Json::array();
  for (const ManifestRow& r : ms.rows)
    rows.push_back(Json{{"file", r.file},
                        {"task_id", r.task_id},
                        {"seed", r.seed},
                        {"train_accuracy", r.train_accuracy},
                        {"excluded", r.excluded}});
  Json manifest{{"schema_version", 1},
                {"suite", suite},
                {"arch", arch_to_json(ms.arch)},
                {"config", config_to_json(ms.config)},
                {"repeats", ms.repeats},
                {"base_seed", ms.base_seed},
                {"rows", rows}};
  const std::filesystem::path path = ms.root / "manifest.json";
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    require(static_cast<bool>(out), ErrorCode::io, "cannot write manifest " + path.string());
    out << manifest.dump(2) << "\n";
  }
  std::filesystem::rename(tmp, path);
}

ModelSet load_modelset(const std::filesystem::path& root, bool verify) {
  const std::filesystem::path path = root / "manifest.json";
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::io, "cannot open manifest " + path.string());
  Json manifest;
  try {
    in >> manifest;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::format, "manifest is not valid JSON: " + std::string(e.what()));
  }
  if (manifest.value("schema_version", 0) != 1)
    throw Error(ErrorCode::bad_version, "manifest schema_version unsupported");

  ModelSet ms;
  ms.root = root;
  try {
    for (const Json& j : manifest.at("suite")) ms.suite.push_back(task_from_json(j));
    ms.arch = arch_from_json(manifest.at("arch"));
    ms.config = config_from_json(manifest.at("config"));
    ms.repeats = manifest.at("repeats").get<int>();
    ms.base_seed = manifest.at("base_seed").get<std::uint64_t>();
    for (const Json& j : manifest.at("rows"))
      ms.rows.push_back(ManifestRow{j.at("file").get<std::string>(),
                                    j.at("task_id").get<int>(),
                                    j.at("seed").get<std::uint64_t>(),
                                    j.at("train_accuracy").get<double>(),
                                    j.at("excluded").get<bool>()});
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::format, "manifest field missing: " + std::string(e.what()));
  }

  if (verify) {
    for (const ManifestRow& row : ms.rows) {
      const Checkpoint ck = load_checkpoint(root / row.file);
      if (ck.task_id != row.task_id || ck.seed != row.seed)
        throw Error(ErrorCode::format,
                    "manifest row " + row.file + " disagrees with embedded metadata");
      if (!(ck.arch == ms.arch))
        throw Error(ErrorCode::format, "checkpoint " + row.file + " arch differs from manifest");
    }
    for (const TaskSpec& t : ms.suite)
      require(ms.task_rows(t.task_id).size() >= 2, ErrorCode::format,
              "modelset: task " + std::to_string(t.task_id) +
                  " has fewer than 2 usable checkpoints");
  }
  return ms;
}

SplitPlan make_split(const ModelSet& ms, SplitMode mode, std::uint64_t seed) {
  SplitPlan plan;
  plan.mode = mode;
  plan.seed = seed;
  Rng rng(mix_seed(seed, kSplitSalt));

  if (mode == SplitMode::classification) {
    for (const TaskSpec& t : ms.suite) {
      std::vector<std::size_t> rows = ms.task_rows(t.task_id);
      require(rows.size() >= 3, ErrorCode::split_error,
              "classification split: task " + std::to_string(t.task_id) +
                  " needs >= 3 checkpoints, has " + std::to_string(rows.size()));
      rng.shuffle(rows);
      const std::size_t m = rows.size();
      const std::size_t train_n =
          std::min(static_cast<std::size_t>(std::ceil(0.8 * static_cast<double>(m))), m - 1);
      for (std::size_t i = 0; i < m; ++i)
        (i < train_n ? plan.train_rows : plan.test_rows).push_back(rows[i]);
    }
    std::sort(plan.train_rows.begin(), plan.train_rows.end());
    std::sort(plan.test_rows.begin(), plan.test_rows.end());
    return plan;
  }

  require(ms.n_tasks() >= 4, ErrorCode::split_error,
          "retrieval split: needs >= 4 tasks, modelset has " + std::to_string(ms.n_tasks()));
  std::vector<int> tasks;
  for (const TaskSpec& t : ms.suite) tasks.push_back(t.task_id);
  rng.shuffle(tasks);
  const std::size_t train_n = std::max<std::size_t>(
      1, std::min(tasks.size() - 1,
                  static_cast<std::size_t>(0.75 * static_cast<double>(tasks.size()))));
  plan.train_tasks.assign(tasks.begin(), tasks.begin() + train_n);
  plan.test_tasks.assign(tasks.begin() + train_n, tasks.end());
  std::sort(plan.train_tasks.begin(), plan.train_tasks.end());
  std::sort(plan.test_tasks.begin(), plan.test_tasks.end());

  for (int t : plan.test_tasks) {
    std::vector<std::size_t> rows = ms.task_rows(t);
    require(rows.size() >= 3, ErrorCode::split_error,
            "retrieval split: test task " + std::to_string(t) +
                " needs >= 3 checkpoints (2 queries + gallery)");
    rng.shuffle(rows);
    plan.query_rows.push_back(rows[0]);
    plan.query_rows.push_back(rows[1]);
    for (std::size_t i = 2; i < rows.size(); ++i) plan.gallery_rows.push_back(rows[i]);
  }
  std::sort(plan.query_rows.begin(), plan.query_rows.end());
  std::sort(plan.gallery_rows.begin(), plan.gallery_rows.end());
  return plan;
}

}  // namespace wsk
