#pragma once

#include <cstdint>
#include <deque>
#include <span>
#include <vector>

#include "wmft/batch.hpp"
#include "wmft/episode.hpp"
#include "wmft/rng.hpp"
#include "wmft/sum_tree.hpp"

namespace wmft {

struct PerConfig {
  double alpha = 0.6;           // sampling probability ~ priority^alpha
  double beta = 0.4;            // importance-weight exponent
  double priority_floor = 1e-6; // added to |TD error|
};

// Episodes plus one priority per transition, each the start of a length-h
// subsequence. Subsequences never cross episode boundaries. With a non-zero
// capacity, whole episodes are evicted oldest first once the transition count
// exceeds it.
class EpisodeBuffer {
 public:
  EpisodeBuffer(Source source, int horizon, std::size_t capacity = 0, PerConfig per = {});

  // Every episode is padded with h - 1 copies of its final transition (zero
  // reward, done = true) so that subsequences starting near the end stay in
  // bounds; padded steps are marked invalid in sampled batches.
  void add_episode(Episode ep);

  // priority <- td_error + floor. Refs to evicted episodes are skipped.
  void update_priorities(std::span<const SampleRef> refs, std::span<const double> td_errors,
                         double floor);

  struct Draw {
    SampleRef ref;
    double probability = 0.0;
  };
  std::vector<Draw> draw(std::size_t count, Rng& rng) const;

  bool empty() const { return episodes_.empty(); }
  Source source() const { return source_; }
  int horizon() const { return horizon_; }
  std::size_t capacity() const { return capacity_; }
  const PerConfig& per() const { return per_; }
  std::size_t num_episodes() const { return episodes_.size(); }
  std::size_t num_transitions() const { return transitions_; }
  std::size_t num_starts() const { return live_starts_; }
  std::uint64_t total_added() const { return total_added_; }
  std::uint64_t total_evicted() const { return total_evicted_; }

  // nullptr if the referenced episode has been evicted.
  const Episode* find(std::uint64_t episode_id) const;
  std::size_t true_length(std::uint64_t episode_id) const;
  double priority(const SampleRef& ref) const;  // 0 for stale refs
  double max_priority() const;

  struct Stored {
    std::uint64_t id = 0;
    Episode episode;
    std::size_t true_length = 0;
    std::size_t first_slot = 0;
    std::vector<std::size_t> slots;  // one per start
  };
  const std::deque<Stored>& episodes() const { return episodes_; }

 private:
  const Stored* stored(std::uint64_t id) const;
  void evict_oldest();
  std::size_t acquire_slot();

  Source source_;
  int horizon_;
  std::size_t capacity_;
  PerConfig per_;
  std::deque<Stored> episodes_;
  SumTree tree_;
  std::vector<double> raw_priority_;  // per slot; 0 when free
  std::vector<SampleRef> slot_ref_;
  std::vector<std::size_t> free_slots_;
  std::size_t next_slot_ = 0;
  std::size_t transitions_ = 0;
  std::size_t live_starts_ = 0;
  std::uint64_t next_id_ = 0;
  std::uint64_t total_added_ = 0;
  std::uint64_t total_evicted_ = 0;
};

// Gathers the subsequences behind `draws` from one buffer into a batch.
SubsequenceBatch gather(const EpisodeBuffer& buffer, std::span<const EpisodeBuffer::Draw> draws);

// Concatenates batches sample-wise; all must share the horizon.
SubsequenceBatch concat_batches(const std::vector<SubsequenceBatch>& parts);

// Half the batch from each buffer when both hold data, otherwise all of it
// from the non-empty one. Within a buffer, starts are drawn in proportion to
// priority^alpha and weighted by (P(i) n)^-beta, normalised by the largest
// weight drawn from that buffer.
SubsequenceBatch sample_balanced(const EpisodeBuffer& offline, const EpisodeBuffer& online,
                                 int batch_size, int horizon, Rng& rng);

// Routes TD errors back to the buffer each sample came from.
void update_priorities(EpisodeBuffer& offline, EpisodeBuffer& online,
                       const SubsequenceBatch& batch, std::span<const double> td_errors);

}  // namespace wmft
