#include "wsk/json_io.hpp"

namespace wsk {

Json arch_to_json(const ArchDescriptor& arch) {
  Json layers = Json::array();
  for (const ConvSpec& s : arch.conv)
    layers.push_back(Json{{"in", s.in_channels},
                          {"out", s.out_filters},
                          {"kh", s.kernel_h},
                          {"kw", s.kernel_w},
                          {"stride", s.stride},
                          {"pad", s.padding},
                          {"relu", s.relu}});
  return Json{{"conv", layers},
              {"n_classes", arch.n_classes},
              {"image_channels", arch.image_channels},
              {"image_size", arch.image_size}};
}

ArchDescriptor arch_from_json(const Json& j) {
  ArchDescriptor arch;
  for (const Json& l : j.at("conv")) {
    ConvSpec s;
    s.in_channels = l.at("in").get<int>();
    s.out_filters = l.at("out").get<int>();
    s.kernel_h = l.at("kh").get<int>();
    s.kernel_w = l.at("kw").get<int>();
    s.stride = l.at("stride").get<int>();
    s.padding = l.at("pad").get<int>();
    s.relu = l.at("relu").get<bool>();
    arch.conv.push_back(s);
  }
  arch.n_classes = j.at("n_classes").get<int>();
  arch.image_channels = j.at("image_channels").get<int>();
  arch.image_size = j.at("image_size").get<int>();
  return arch;
}

namespace {

Json interval_to_json(const Interval& i) { return Json{{"lo", i.lo}, {"hi", i.hi}}; }

Interval interval_from_json(const Json& j) {
  return Interval{j.at("lo").get<double>(), j.at("hi").get<double>()};
}

Json color_to_json(const std::array<Interval, 3>& c) {
  return Json::array({interval_to_json(c[0]), interval_to_json(c[1]), interval_to_json(c[2])});
}

std::array<Interval, 3> color_from_json(const Json& j) {
  return {interval_from_json(j.at(0)), interval_from_json(j.at(1)),
          interval_from_json(j.at(2))};
}

}  // namespace

Json family_to_json(const PatternFamily& f) {
  return Json{{"kind", pattern_kind_name(f.kind)},
              {"variant", f.variant},
              {"angle_deg", interval_to_json(f.angle_deg)},
              {"scale_px", interval_to_json(f.scale_px)},
              {"count", interval_to_json(f.count)},
              {"color_a", color_to_json(f.color_a)},
              {"color_b", color_to_json(f.color_b)}};
}

PatternFamily family_from_json(const Json& j) {
  PatternFamily f;
  f.kind = pattern_kind_from_name(j.at("kind").get<std::string>());
  f.variant = j.at("variant").get<int>();
  f.angle_deg = interval_from_json(j.at("angle_deg"));
  f.scale_px = interval_from_json(j.at("scale_px"));
  f.count = interval_from_json(j.at("count"));
  f.color_a = color_from_json(j.at("color_a"));
  f.color_b = color_from_json(j.at("color_b"));
  return f;
}

Json task_to_json(const TaskSpec& t) {
  return Json{{"task_id", t.task_id},
              {"class_a", family_to_json(t.class_a)},
              {"class_b", family_to_json(t.class_b)},
              {"noise_std", t.noise_std},
              {"image_size", t.image_size}};
}

TaskSpec task_from_json(const Json& j) {
  TaskSpec t;
  t.task_id = j.at("task_id").get<int>();
  t.class_a = family_from_json(j.at("class_a"));
  t.class_b = family_from_json(j.at("class_b"));
  t.noise_std = j.at("noise_std").get<double>();
  t.image_size = j.at("image_size").get<int>();
  return t;
}

}  // namespace wsk
