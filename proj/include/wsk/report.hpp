#pragma once

#include <filesystem>
#include <string>

#include "wsk/eval.hpp"

namespace wsk::report {

// Deterministic serializations of an EvalReport (runtime is deliberately
// left out so identical runs produce identical bytes).
std::string to_json_text(const eval::EvalReport& report);
std::string to_csv_text(const eval::EvalReport& report);

void write_json(const eval::EvalReport& report, const std::filesystem::path& path);
void write_csv(const eval::EvalReport& report, const std::filesystem::path& path);

// Standalone figures: a similarity-vs-ARI scatter for transferability
// reports, a per-row k1 bar chart otherwise.
void write_svg(const eval::EvalReport& report, const std::filesystem::path& path);

}  // namespace wsk::report
