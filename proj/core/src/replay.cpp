#include "wmft/replay.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "wmft/errors.hpp"

namespace wmft {

double Episode::total_return() const {
  double s = 0.0;
  for (double r : rewards) s += r;
  return s;
}

void validate_episode(const Episode& ep) {
  if (ep.actions.empty()) throw FormatError("episode has no transitions");
  if (ep.states.size() != ep.actions.size() + 1) {
    throw FormatError("episode has " + std::to_string(ep.states.size()) + " states for " +
                      std::to_string(ep.actions.size()) + " actions");
  }
  if (ep.rewards.size() != ep.actions.size() || ep.dones.size() != ep.actions.size()) {
    throw FormatError("episode reward/done arrays do not match action count");
  }
  const auto sdim = ep.states.front().size();
  const auto adim = ep.actions.front().size();
  if (sdim == 0 || adim == 0) throw FormatError("episode has zero-width states or actions");
  for (const auto& s : ep.states) {
    if (s.size() != sdim) throw FormatError("episode states have inconsistent width");
    if (!s.allFinite()) throw FormatError("episode contains a non-finite state");
  }
  for (const auto& a : ep.actions) {
    if (a.size() != adim) throw FormatError("episode actions have inconsistent width");
    if (!a.allFinite()) throw FormatError("episode contains a non-finite action");
  }
  for (double r : ep.rewards) {
    if (!std::isfinite(r)) throw FormatError("episode contains a non-finite reward");
  }
}

EpisodeBuffer::EpisodeBuffer(Source source, int horizon, std::size_t capacity, PerConfig per)
    : source_(source), horizon_(horizon), capacity_(capacity), per_(per), tree_(64) {
  if (horizon < 1) throw ConfigError("buffer horizon must be at least 1");
  if (per.alpha < 0.0 || per.beta < 0.0 || per.priority_floor < 0.0) {
    throw ConfigError("PER exponents and floor must be non-negative");
  }
}

const EpisodeBuffer::Stored* EpisodeBuffer::stored(std::uint64_t id) const {
  if (episodes_.empty()) return nullptr;
  const std::uint64_t first = episodes_.front().id;
  if (id < first || id - first >= episodes_.size()) return nullptr;
  return &episodes_[static_cast<std::size_t>(id - first)];
}

const Episode* EpisodeBuffer::find(std::uint64_t episode_id) const {
  const Stored* s = stored(episode_id);
  return s == nullptr ? nullptr : &s->episode;
}

std::size_t EpisodeBuffer::true_length(std::uint64_t episode_id) const {
  const Stored* s = stored(episode_id);
  return s == nullptr ? 0 : s->true_length;
}

double EpisodeBuffer::priority(const SampleRef& ref) const {
  const Stored* s = stored(ref.episode_id);
  if (s == nullptr || ref.start < 0 || static_cast<std::size_t>(ref.start) >= s->slots.size()) {
    return 0.0;
  }
  return raw_priority_[s->slots[static_cast<std::size_t>(ref.start)]];
}

double EpisodeBuffer::max_priority() const {
  double best = 0.0;
  for (const auto& s : episodes_) {
    for (std::size_t slot : s.slots) best = std::max(best, raw_priority_[slot]);
  }
  return best > 0.0 ? best : 1.0;
}

std::size_t EpisodeBuffer::acquire_slot() {
  if (!free_slots_.empty()) {
    const std::size_t slot = free_slots_.back();
    free_slots_.pop_back();
    return slot;
  }
  const std::size_t slot = next_slot_++;
  if (slot >= raw_priority_.size()) {
    raw_priority_.resize(slot + 1, 0.0);
    slot_ref_.resize(slot + 1);
  }
  return slot;
}

void EpisodeBuffer::evict_oldest() {
  Stored& s = episodes_.front();
  for (std::size_t slot : s.slots) {
    tree_.set(slot, 0.0);
    raw_priority_[slot] = 0.0;
    free_slots_.push_back(slot);
  }
  transitions_ -= s.true_length;
  live_starts_ -= s.slots.size();
  total_evicted_ += s.true_length;
  episodes_.pop_front();
}

void EpisodeBuffer::add_episode(Episode ep) {
  validate_episode(ep);
  const std::size_t true_len = ep.length();
  if (capacity_ > 0 && true_len > capacity_) {
    throw ConfigError("episode of " + std::to_string(true_len) +
                      " transitions exceeds buffer capacity " + std::to_string(capacity_));
  }
  if (!episodes_.empty()) {
    const auto& ref = episodes_.front().episode;
    if (ref.states.front().size() != ep.states.front().size() ||
        ref.actions.front().size() != ep.actions.front().size()) {
      throw FormatError("episode dimensions differ from buffered episodes");
    }
  }
  const auto h = static_cast<std::size_t>(horizon_);
  while (ep.length() < true_len + h - 1) {
    const Vector last_state = ep.states.back();
    const Vector last_action = ep.actions.back();
    ep.actions.push_back(last_action);
    ep.rewards.push_back(0.0);
    ep.dones.push_back(true);
    ep.states.push_back(last_state);
  }

  const double init_priority = max_priority();
  if (capacity_ > 0) {
    while (!episodes_.empty() && transitions_ + true_len > capacity_) evict_oldest();
  }

  Stored s;
  s.id = next_id_++;
  s.true_length = true_len;
  const std::size_t n_starts = true_len;
  for (std::size_t k = 0; k < n_starts; ++k) {
    const std::size_t slot = acquire_slot();
    raw_priority_[slot] = init_priority;
    slot_ref_[slot] = SampleRef{s.id, static_cast<int>(k)};
    tree_.set(slot, std::pow(init_priority, per_.alpha));
    s.slots.push_back(slot);
  }
  s.episode = std::move(ep);
  transitions_ += true_len;
  live_starts_ += n_starts;
  total_added_ += true_len;
  episodes_.push_back(std::move(s));
}

void EpisodeBuffer::update_priorities(std::span<const SampleRef> refs,
                                      std::span<const double> td_errors, double floor) {
  if (refs.size() != td_errors.size()) {
    throw ShapeError("update_priorities: refs and td_errors differ in length");
  }
  for (std::size_t i = 0; i < refs.size(); ++i) {
    const Stored* s = stored(refs[i].episode_id);
    if (s == nullptr || refs[i].start < 0 ||
        static_cast<std::size_t>(refs[i].start) >= s->slots.size()) {
      continue;
    }
    const double td = td_errors[i];
    if (!(td >= 0.0) || !std::isfinite(td)) {
      throw NumericError("update_priorities: td errors must be finite and non-negative");
    }
    const std::size_t slot = s->slots[static_cast<std::size_t>(refs[i].start)];
    raw_priority_[slot] = td + floor;
    tree_.set(slot, std::pow(raw_priority_[slot], per_.alpha));
  }
}

std::vector<EpisodeBuffer::Draw> EpisodeBuffer::draw(std::size_t count, Rng& rng) const {
  if (episodes_.empty()) throw EmptyBufferError("cannot sample from an empty buffer");
  const double total = tree_.total();
  if (!(total > 0.0)) throw EmptyBufferError("buffer has no positive priorities");
  std::uniform_real_distribution<double> dist(0.0, total);
  std::vector<Draw> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t slot = tree_.find(dist(rng));
    out.push_back({slot_ref_[slot], tree_.get(slot) / total});
  }
  return out;
}

SubsequenceBatch gather(const EpisodeBuffer& buffer, std::span<const EpisodeBuffer::Draw> draws) {
  const int h = buffer.horizon();
  const auto bsz = static_cast<Eigen::Index>(draws.size());
  SubsequenceBatch batch;
  batch.horizon = h;
  if (draws.empty()) {
    batch.importance_weights.resize(0);
    return batch;
  }
  const Episode* first = buffer.find(draws.front().ref.episode_id);
  if (first == nullptr) throw EmptyBufferError("gather: stale reference");
  const auto sdim = first->states.front().size();
  const auto adim = first->actions.front().size();
  for (int t = 0; t < h; ++t) {
    batch.states.emplace_back(sdim, bsz);
    batch.actions.emplace_back(adim, bsz);
    batch.rewards.emplace_back(bsz);
    batch.next_states.emplace_back(sdim, bsz);
    batch.terminal.emplace_back(bsz);
    batch.valid.emplace_back(bsz);
  }
  batch.importance_weights.resize(bsz);

  const double n = static_cast<double>(buffer.num_starts());
  const double beta = buffer.per().beta;
  double max_w = 0.0;
  for (Eigen::Index b = 0; b < bsz; ++b) {
    const auto& d = draws[static_cast<std::size_t>(b)];
    const Episode* ep = buffer.find(d.ref.episode_id);
    if (ep == nullptr) throw EmptyBufferError("gather: stale reference");
    const std::size_t true_len = buffer.true_length(d.ref.episode_id);
    for (int t = 0; t < h; ++t) {
      const auto j = static_cast<std::size_t>(d.ref.start + t);
      const auto ts = static_cast<std::size_t>(t);
      batch.states[ts].col(b) = ep->states[j];
      batch.actions[ts].col(b) = ep->actions[j];
      batch.rewards[ts](b) = ep->rewards[j];
      batch.next_states[ts].col(b) = ep->states[j + 1];
      const bool valid = j < true_len;
      batch.valid[ts](b) = valid ? 1.0 : 0.0;
      batch.terminal[ts](b) = (!valid || (ep->dones[j] && ep->success)) ? 1.0 : 0.0;
    }
    batch.sources.push_back(buffer.source());
    batch.refs.push_back(d.ref);
    const double w = std::pow(d.probability * n, -beta);
    batch.importance_weights(b) = w;
    max_w = std::max(max_w, w);
  }
  if (max_w > 0.0 && std::isfinite(max_w)) batch.importance_weights /= max_w;
  return batch;
}

SubsequenceBatch concat_batches(const std::vector<SubsequenceBatch>& parts) {
  std::vector<const SubsequenceBatch*> live;
  for (const auto& p : parts) {
    if (p.size() > 0) live.push_back(&p);
  }
  if (live.empty()) throw EmptyBufferError("concat_batches: nothing to concatenate");
  if (live.size() == 1) return *live.front();
  const int h = live.front()->horizon;
  Eigen::Index total = 0;
  for (const auto* p : live) {
    if (p->horizon != h) throw ShapeError("concat_batches: horizon mismatch");
    total += p->size();
  }
  SubsequenceBatch out;
  out.horizon = h;
  auto cat = [&](auto member) {
    using M = std::remove_cvref_t<decltype((live.front()->*member)[0])>;
    std::vector<M> result;
    for (int t = 0; t < h; ++t) {
      const auto ts = static_cast<std::size_t>(t);
      M joined((live.front()->*member)[ts].rows(), total);
      Eigen::Index off = 0;
      for (const auto* p : live) {
        const auto& blk = (p->*member)[ts];
        joined.middleCols(off, blk.cols()) = blk;
        off += blk.cols();
      }
      result.push_back(std::move(joined));
    }
    return result;
  };
  out.states = cat(&SubsequenceBatch::states);
  out.actions = cat(&SubsequenceBatch::actions);
  out.rewards = cat(&SubsequenceBatch::rewards);
  out.next_states = cat(&SubsequenceBatch::next_states);
  out.terminal = cat(&SubsequenceBatch::terminal);
  out.valid = cat(&SubsequenceBatch::valid);
  out.importance_weights.resize(total);
  Eigen::Index off = 0;
  for (const auto* p : live) {
    out.importance_weights.segment(off, p->size()) = p->importance_weights;
    off += p->size();
    out.sources.insert(out.sources.end(), p->sources.begin(), p->sources.end());
    out.refs.insert(out.refs.end(), p->refs.begin(), p->refs.end());
  }
  return out;
}

SubsequenceBatch sample_balanced(const EpisodeBuffer& offline, const EpisodeBuffer& online,
                                 int batch_size, int horizon, Rng& rng) {
  if (offline.empty() && online.empty()) {
    throw EmptyBufferError("sample_balanced: both buffers are empty");
  }
  if (batch_size <= 0 || batch_size % 2 != 0) {
    throw ConfigError("sample_balanced: batch size must be positive and even");
  }
  if (offline.horizon() != horizon || online.horizon() != horizon) {
    throw ConfigError("sample_balanced: buffer horizon differs from requested horizon");
  }
  std::size_t n_on = 0;
  if (!online.empty()) n_on = offline.empty() ? static_cast<std::size_t>(batch_size)
                                              : static_cast<std::size_t>(batch_size / 2);
  const std::size_t n_off = static_cast<std::size_t>(batch_size) - n_on;

  std::vector<SubsequenceBatch> parts;
  if (n_off > 0) {
    const auto draws = offline.draw(n_off, rng);
    parts.push_back(gather(offline, draws));
  }
  if (n_on > 0) {
    const auto draws = online.draw(n_on, rng);
    parts.push_back(gather(online, draws));
  }
  return concat_batches(parts);
}

void update_priorities(EpisodeBuffer& offline, EpisodeBuffer& online,
                       const SubsequenceBatch& batch, std::span<const double> td_errors) {
  if (td_errors.size() != batch.refs.size()) {
    throw ShapeError("update_priorities: one td error per sample required");
  }
  std::vector<SampleRef> off_refs, on_refs;
  std::vector<double> off_td, on_td;
  for (std::size_t i = 0; i < batch.refs.size(); ++i) {
    if (batch.sources[i] == Source::kOffline) {
      off_refs.push_back(batch.refs[i]);
      off_td.push_back(td_errors[i]);
    } else {
      on_refs.push_back(batch.refs[i]);
      on_td.push_back(td_errors[i]);
    }
  }
  offline.update_priorities(off_refs, off_td, offline.per().priority_floor);
  online.update_priorities(on_refs, on_td, online.per().priority_floor);
}

}  // namespace wmft
