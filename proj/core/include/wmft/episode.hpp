#pragma once

#include <string>
#include <vector>

#include "wmft/netcore.hpp"

namespace wmft {

// One recorded interaction sequence. states has one more entry than the
// per-step arrays: states[t] -> actions[t] -> (rewards[t], states[t + 1]).
struct Episode {
  std::vector<Vector> states;
  std::vector<Vector> actions;
  std::vector<double> rewards;
  std::vector<bool> dones;
  bool success = false;
  std::string provenance;

  std::size_t length() const { return actions.size(); }
  double total_return() const;
};

// Throws FormatError naming the first inconsistency.
void validate_episode(const Episode& ep);

}  // namespace wmft
