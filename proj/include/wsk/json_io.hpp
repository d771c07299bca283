#pragma once

// JSON bindings for the domain types that appear in file formats
// (checkpoint metadata, modelset manifests, run configs, reports).

#include <json.hpp>

#include "wsk/arch.hpp"
#include "wsk/taskgen.hpp"

namespace wsk {

using Json = nlohmann::ordered_json;

Json arch_to_json(const ArchDescriptor& arch);
ArchDescriptor arch_from_json(const Json& j);

Json family_to_json(const PatternFamily& f);
PatternFamily family_from_json(const Json& j);

Json task_to_json(const TaskSpec& t);
TaskSpec task_from_json(const Json& j);

}  // namespace wsk
