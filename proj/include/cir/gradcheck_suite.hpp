#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace cir {

struct GradCheckEntry {
  std::string name;
  double max_rel_error = 0.0;
};

// Central-difference checks for every differentiable primitive plus the
// full training objective on a toy model (B=6, E=8, C=4, qk=4). Randomized
// inputs are drawn from the given seed, steered away from relu kinks.
std::vector<GradCheckEntry> run_gradcheck_battery(std::uint64_t seed);

}  // namespace cir
