#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "wsk/tensor.hpp"

namespace wsk {

enum class PatternKind {
  stripes,
  checkerboard,
  blobs,
  radial_gradient,
  color_field,
  noise_texture,
};

const char* pattern_kind_name(PatternKind k);
PatternKind pattern_kind_from_name(const std::string& name);

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
  bool operator==(const Interval&) const = default;
};

// One visual class: a pattern kind plus the parameter intervals images are
// drawn from. Two canonical variants per kind (disjoint sub-ranges) give
// 12 distinct class descriptors.
struct PatternFamily {
  PatternKind kind = PatternKind::stripes;
  int variant = 0;
  Interval angle_deg;            // stripes orientation
  Interval scale_px;             // period / cell / radius / blur cell
  Interval count;                // blob count
  std::array<Interval, 3> color_a;  // primary RGB box
  std::array<Interval, 3> color_b;  // secondary RGB box

  bool operator==(const PatternFamily&) const = default;
  void validate(int image_size) const;
  std::string describe() const;  // e.g. "stripes/0"
};

PatternFamily make_family(PatternKind kind, int variant);
constexpr int kFamilyVariants = 2;
constexpr int kFamilyCount = 6 * kFamilyVariants;

// A binary classification task: class_a vs class_b.
struct TaskSpec {
  int task_id = -1;
  PatternFamily class_a;
  PatternFamily class_b;
  double noise_std = 0.04;
  int image_size = 16;
  static constexpr int channels = 3;

  bool same_classes(const TaskSpec& other) const {
    return class_a == other.class_a && class_b == other.class_b;
  }
  std::string describe() const;  // e.g. "stripes/0 vs blobs/1"
};

// n_tasks pairwise-distinct ordered (class_a, class_b) pairs, task_id 0..n-1,
// deterministic in seed. Throws a capacity error past 12*11 combinations.
std::vector<TaskSpec> generate_task_suite(int n_tasks, std::uint64_t seed);

struct Batch {
  Tensor images;            // (n, 3, S, S)
  std::vector<int> labels;  // 0 = class_a, 1 = class_b; alternating, balanced
  Tensor one_hot;           // (n, 2)
};

// Deterministic in (task, n, seed); image i depends only on (task, seed, i).
// Pixels in [0,1] before noise and clamped to [0,1] after.
Batch sample_batch(const TaskSpec& task, int n, std::uint64_t seed);

}  // namespace wsk
