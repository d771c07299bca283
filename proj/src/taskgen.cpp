#include "wsk/taskgen.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "wsk/rng.hpp"

namespace wsk {

namespace {

constexpr std::uint64_t kImageSalt = 0x1a6e5;

struct Rgb {
  double r, g, b;
};

Rgb sample_color(Rng& rng, const std::array<Interval, 3>& box) {
  return {rng.uniform(box[0].lo, box[0].hi), rng.uniform(box[1].lo, box[1].hi),
          rng.uniform(box[2].lo, box[2].hi)};
}

Rgb mix(const Rgb& a, const Rgb& b, double t) {
  return {a.r + (b.r - a.r) * t, a.g + (b.g - a.g) * t, a.b + (b.b - a.b) * t};
}

void put(double* r_plane, double* g_plane, double* b_plane, int idx, const Rgb& c) {
  r_plane[idx] = c.r;
  g_plane[idx] = c.g;
  b_plane[idx] = c.b;
}

void render_stripes(const PatternFamily& f, Rng& rng, int S, double* r, double* g, double* b) {
  const double angle = rng.uniform(f.angle_deg.lo, f.angle_deg.hi) * std::numbers::pi / 180.0;
  const double period = rng.uniform(f.scale_px.lo, f.scale_px.hi);
  const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const Rgb ca = sample_color(rng, f.color_a);
  const Rgb cb = sample_color(rng, f.color_b);
  const double cx = std::cos(angle), sy = std::sin(angle);
  for (int y = 0; y < S; ++y)
    for (int x = 0; x < S; ++x) {
      const double t =
          0.5 + 0.5 * std::sin(2.0 * std::numbers::pi * (x * cx + y * sy) / period + phase);
      put(r, g, b, y * S + x, mix(cb, ca, t));
    }
}

void render_checkerboard(const PatternFamily& f, Rng& rng, int S, double* r, double* g,
                         double* b) {
  const double cell = rng.uniform(f.scale_px.lo, f.scale_px.hi);
  const double ox = rng.uniform(0.0, cell);
  const double oy = rng.uniform(0.0, cell);
  const Rgb ca = sample_color(rng, f.color_a);
  const Rgb cb = sample_color(rng, f.color_b);
  for (int y = 0; y < S; ++y)
    for (int x = 0; x < S; ++x) {
      const long tile = static_cast<long>(std::floor((x + ox) / cell)) +
                        static_cast<long>(std::floor((y + oy) / cell));
      put(r, g, b, y * S + x, (tile & 1) ? ca : cb);
    }
}

void render_blobs(const PatternFamily& f, Rng& rng, int S, double* r, double* g, double* b) {
  const int count = static_cast<int>(std::lround(rng.uniform(f.count.lo, f.count.hi)));
  const Rgb bg = sample_color(rng, f.color_b);
  for (int i = 0; i < S * S; ++i) put(r, g, b, i, bg);
  for (int k = 0; k < count; ++k) {
    const double bx = rng.uniform(0.0, static_cast<double>(S));
    const double by = rng.uniform(0.0, static_cast<double>(S));
    const double rad = rng.uniform(f.scale_px.lo, f.scale_px.hi);
    const Rgb cc = sample_color(rng, f.color_a);
    for (int y = 0; y < S; ++y)
      for (int x = 0; x < S; ++x) {
        const double d2 = (x - bx) * (x - bx) + (y - by) * (y - by);
        const double w = std::exp(-d2 / (2.0 * rad * rad));
        const int idx = y * S + x;
        const Rgb cur{r[idx], g[idx], b[idx]};
        put(r, g, b, idx, mix(cur, cc, w));
      }
  }
}

void render_radial(const PatternFamily& f, Rng& rng, int S, double* r, double* g, double* b) {
  const double cx = rng.uniform(0.25 * S, 0.75 * S);
  const double cy = rng.uniform(0.25 * S, 0.75 * S);
  const double rad = rng.uniform(f.scale_px.lo, f.scale_px.hi);
  const Rgb ca = sample_color(rng, f.color_a);
  const Rgb cb = sample_color(rng, f.color_b);
  for (int y = 0; y < S; ++y)
    for (int x = 0; x < S; ++x) {
      const double d = std::sqrt((x - cx) * (x - cx) + (y - cy) * (y - cy));
      const double t = std::clamp(d / rad, 0.0, 1.0);
      put(r, g, b, y * S + x, mix(ca, cb, t));
    }
}

void render_color_field(const PatternFamily& f, Rng& rng, int S, double* r, double* g,
                        double* b) {
  const Rgb ca = sample_color(rng, f.color_a);
  const Rgb cb = sample_color(rng, f.color_b);
  const double gx = rng.uniform(-1.0, 1.0);
  const double gy = rng.uniform(-1.0, 1.0);
  for (int y = 0; y < S; ++y)
    for (int x = 0; x < S; ++x) {
      const double t =
          0.35 * std::clamp(0.5 + 0.5 * (gx * (2.0 * x / S - 1.0) + gy * (2.0 * y / S - 1.0)),
                            0.0, 1.0);
      put(r, g, b, y * S + x, mix(ca, cb, t));
    }
}

void render_noise_texture(const PatternFamily& f, Rng& rng, int S, double* r, double* g,
                          double* b) {
  const Rgb base = sample_color(rng, f.color_a);
  const double cell = rng.uniform(f.scale_px.lo, f.scale_px.hi);
  const double amp = 0.45;
  // Value-noise lattice per channel, bilinear between nodes.
  const int nodes = static_cast<int>(std::ceil(S / cell)) + 2;
  std::vector<double> lattice(static_cast<std::size_t>(3) * nodes * nodes);
  for (double& v : lattice) v = rng.uniform();
  auto node = [&](int ch, int i, int j) {
    return lattice[(static_cast<std::size_t>(ch) * nodes + std::min(i, nodes - 1)) * nodes +
                   std::min(j, nodes - 1)];
  };
  const double bases[3] = {base.r, base.g, base.b};
  double* planes[3] = {r, g, b};
  for (int ch = 0; ch < 3; ++ch)
    for (int y = 0; y < S; ++y)
      for (int x = 0; x < S; ++x) {
        const double fy = y / cell, fx = x / cell;
        const int i = static_cast<int>(fy), j = static_cast<int>(fx);
        const double ty = fy - i, tx = fx - j;
        const double n00 = node(ch, i, j), n01 = node(ch, i, j + 1);
        const double n10 = node(ch, i + 1, j), n11 = node(ch, i + 1, j + 1);
        const double n = (n00 * (1 - tx) + n01 * tx) * (1 - ty) +
                         (n10 * (1 - tx) + n11 * tx) * ty;
        planes[ch][y * S + x] = std::clamp(bases[ch] + amp * (n - 0.5), 0.0, 1.0);
      }
}

void render(const PatternFamily& f, Rng& rng, int S, double* r, double* g, double* b) {
  switch (f.kind) {
    case PatternKind::stripes: render_stripes(f, rng, S, r, g, b); break;
    case PatternKind::checkerboard: render_checkerboard(f, rng, S, r, g, b); break;
    case PatternKind::blobs: render_blobs(f, rng, S, r, g, b); break;
    case PatternKind::radial_gradient: render_radial(f, rng, S, r, g, b); break;
    case PatternKind::color_field: render_color_field(f, rng, S, r, g, b); break;
    case PatternKind::noise_texture: render_noise_texture(f, rng, S, r, g, b); break;
  }
}

Interval iv(double lo, double hi) { return {lo, hi}; }

}  // namespace

const char* pattern_kind_name(PatternKind k) {
  switch (k) {
    case PatternKind::stripes: return "stripes";
    case PatternKind::checkerboard: return "checkerboard";
    case PatternKind::blobs: return "blobs";
    case PatternKind::radial_gradient: return "radial_gradient";
    case PatternKind::color_field: return "color_field";
    case PatternKind::noise_texture: return "noise_texture";
  }
  return "?";
}

PatternKind pattern_kind_from_name(const std::string& name) {
  for (int i = 0; i < 6; ++i) {
    const auto k = static_cast<PatternKind>(i);
    if (name == pattern_kind_name(k)) return k;
  }
  throw Error(ErrorCode::config, "unknown pattern kind '" + name + "'");
}

void PatternFamily::validate(int image_size) const {
  require(variant >= 0 && variant < kFamilyVariants, ErrorCode::precondition,
          "pattern variant out of range");
  auto check = [&](const Interval& i, double lo, double hi, const char* what) {
    if (i.lo == 0.0 && i.hi == 0.0) return;  // unused by this kind
    require(i.hi >= i.lo && i.lo >= lo && i.hi <= hi, ErrorCode::precondition,
            std::string("pattern interval out of bounds: ") + what);
  };
  check(angle_deg, 0.0, 180.0, "angle_deg");
  check(scale_px, 1.0, static_cast<double>(image_size), "scale_px");
  check(count, 0.0, 16.0, "count");
  for (const Interval& i : color_a) check(i, 0.0, 1.0, "color_a");
  for (const Interval& i : color_b) check(i, 0.0, 1.0, "color_b");
}

std::string PatternFamily::describe() const {
  return std::string(pattern_kind_name(kind)) + "/" + std::to_string(variant);
}

std::string TaskSpec::describe() const {
  return class_a.describe() + " vs " + class_b.describe();
}

PatternFamily make_family(PatternKind kind, int variant) {
  require(variant >= 0 && variant < kFamilyVariants, ErrorCode::precondition,
          "make_family: variant must be in [0," + std::to_string(kFamilyVariants) + ")");
  PatternFamily f;
  f.kind = kind;
  f.variant = variant;
  // Variant palettes: v0 warm-on-dark, v1 cool-on-light.
  const std::array<Interval, 3> warm{iv(0.7, 1.0), iv(0.2, 0.5), iv(0.0, 0.3)};
  const std::array<Interval, 3> dark{iv(0.0, 0.2), iv(0.0, 0.2), iv(0.1, 0.3)};
  const std::array<Interval, 3> cool{iv(0.0, 0.3), iv(0.3, 0.6), iv(0.7, 1.0)};
  const std::array<Interval, 3> light{iv(0.7, 0.9), iv(0.7, 0.9), iv(0.5, 0.8)};
  f.color_a = variant == 0 ? warm : cool;
  f.color_b = variant == 0 ? dark : light;
  switch (kind) {
    case PatternKind::stripes:
      f.angle_deg = variant == 0 ? iv(0.0, 60.0) : iv(90.0, 150.0);
      f.scale_px = iv(3.0, 6.0);
      break;
    case PatternKind::checkerboard:
      f.scale_px = variant == 0 ? iv(2.0, 3.0) : iv(4.0, 6.0);
      break;
    case PatternKind::blobs:
      f.count = variant == 0 ? iv(2.0, 4.0) : iv(6.0, 9.0);
      f.scale_px = iv(1.5, 3.0);
      break;
    case PatternKind::radial_gradient:
      f.scale_px = variant == 0 ? iv(5.0, 8.0) : iv(10.0, 15.0);
      break;
    case PatternKind::color_field:
      break;
    case PatternKind::noise_texture:
      f.scale_px = variant == 0 ? iv(1.0, 2.0) : iv(4.0, 6.0);
      break;
  }
  return f;
}

std::vector<TaskSpec> generate_task_suite(int n_tasks, std::uint64_t seed) {
  require(n_tasks >= 2, ErrorCode::precondition, "generate_task_suite: n_tasks must be >= 2");
  std::vector<PatternFamily> families;
  for (int k = 0; k < 6; ++k)
    for (int v = 0; v < kFamilyVariants; ++v)
      families.push_back(make_family(static_cast<PatternKind>(k), v));

  std::vector<std::pair<int, int>> pairs;
  for (int a = 0; a < static_cast<int>(families.size()); ++a)
    for (int b = 0; b < static_cast<int>(families.size()); ++b)
      if (a != b) pairs.emplace_back(a, b);
  if (n_tasks > static_cast<int>(pairs.size()))
    throw Error(ErrorCode::capacity,
                "generate_task_suite: " + std::to_string(n_tasks) +
                    " tasks requested but only " + std::to_string(pairs.size()) +
                    " distinct class pairs exist");

  Rng rng(mix_seed(seed, 0xc1a55));
  rng.shuffle(pairs);
  std::vector<TaskSpec> suite;
  suite.reserve(n_tasks);
  for (int t = 0; t < n_tasks; ++t) {
    TaskSpec spec;
    spec.task_id = t;
    spec.class_a = families[pairs[t].first];
    spec.class_b = families[pairs[t].second];
    spec.class_a.validate(spec.image_size);
    spec.class_b.validate(spec.image_size);
    suite.push_back(spec);
  }
  return suite;
}

Batch sample_batch(const TaskSpec& task, int n, std::uint64_t seed) {
  require(n >= 1, ErrorCode::precondition, "sample_batch: n must be >= 1");
  require(!(task.class_a == task.class_b), ErrorCode::precondition,
          "sample_batch: task classes must differ");
  const int S = task.image_size;
  Batch batch;
  batch.images = Tensor({static_cast<std::size_t>(n), 3, static_cast<std::size_t>(S),
                         static_cast<std::size_t>(S)});
  batch.one_hot = Tensor({static_cast<std::size_t>(n), 2});
  batch.labels.resize(n);
  const std::size_t plane = static_cast<std::size_t>(S) * S;
  for (int i = 0; i < n; ++i) {
    const int label = i % 2;  // alternating keeps classes balanced within 1
    batch.labels[i] = label;
    batch.one_hot.at(i, label) = 1.0;
    Rng rng(mix_seed(mix_seed(seed, kImageSalt), static_cast<std::uint64_t>(i)));
    double* base = batch.images.data() + static_cast<std::size_t>(i) * 3 * plane;
    render(label == 0 ? task.class_a : task.class_b, rng, S, base, base + plane,
           base + 2 * plane);
    if (task.noise_std > 0.0)
      for (std::size_t p = 0; p < 3 * plane; ++p)
        base[p] = std::clamp(base[p] + task.noise_std * rng.normal(), 0.0, 1.0);
    else
      for (std::size_t p = 0; p < 3 * plane; ++p) base[p] = std::clamp(base[p], 0.0, 1.0);
  }
  return batch;
}

}  // namespace wsk
