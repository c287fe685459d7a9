#pragma once

#include <cstdint>
#include <vector>

#include "wmft/netcore.hpp"

namespace wmft {

enum class Source : std::uint8_t { kOffline = 0, kOnline = 1 };

// Identifies a subsequence start inside a buffer. Episode ids are never
// reused, so a ref to an evicted episode stays recognisably stale.
struct SampleRef {
  std::uint64_t episode_id = 0;
  int start = 0;
};

// Length-h windows gathered column-wise: entry t of each per-step vector holds
// step t of every sample, one sample per column.
struct SubsequenceBatch {
  int horizon = 0;
  std::vector<Matrix> states;       // state_dim x B
  std::vector<Matrix> actions;      // action_dim x B
  std::vector<RowVector> rewards;   // 1 x B
  std::vector<Matrix> next_states;  // state_dim x B
  std::vector<RowVector> terminal;  // 1 where bootstrapping stops
  std::vector<RowVector> valid;     // 0 on padding past the true episode end

  std::vector<Source> sources;
  std::vector<SampleRef> refs;
  RowVector importance_weights;  // 1 x B, max-normalised per source

  Eigen::Index size() const { return importance_weights.size(); }
};

// Throws ShapeError if per-step arrays disagree in count or width.
void validate_batch(const SubsequenceBatch& batch);

}  // namespace wmft
