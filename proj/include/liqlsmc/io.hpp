#pragma once

#include <string>

#include "liqlsmc/lsmc.hpp"
#include "liqlsmc/model.hpp"

namespace liqlsmc {

/// JSON text for a policy: grid, basis spec, w0, utility tag and every
/// coefficient as an {n, j, k, value} entry. Doubles round-trip exactly.
std::string policy_to_json(const Policy& p);
Policy policy_from_json(const std::string& text);

std::string var1_to_json(const Var1Model& m);
Var1Model var1_from_json(const std::string& text);

void save_text(const std::string& path, const std::string& text);
std::string load_text(const std::string& path);

}  // namespace liqlsmc
