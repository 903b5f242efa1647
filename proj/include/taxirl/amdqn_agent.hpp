#pragma once

#include <cstdint>
#include <deque>
#include <iosfwd>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "taxirl/qnet.hpp"
#include "taxirl/simulator.hpp"
#include "taxirl/zone_graph.hpp"

namespace taxirl {

using Rng = std::mt19937_64;

struct Hyperparams {
  double gamma = 0.99;
  double alpha = 1e-6;
  std::size_t replay_capacity = 10000;
  std::size_t minibatch = 32;
  std::int64_t sync_period = 10000;
  double epsilon = 0.1;
  double lambda = 20;
  int hidden = 256;
  /// Discount a trip transition by gamma^duration instead of gamma.
  bool discount_by_duration = false;

  /// Throws std::invalid_argument on out-of-range values.
  void validate() const;
};

/// Exploration probability ε + (1-ε)·exp(-t/λ).
double anneal_threshold(double t, double epsilon, double lambda);

struct Transition {
  MdpState state;
  ActionIndex action = 0;
  double reward = 0;
  MdpState next;
  /// Minutes between the two decision states.
  Minute elapsed = 1;

  bool operator==(const Transition&) const = default;
};

/// Bounded FIFO of transitions; the oldest entry is evicted when full.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity);

  void push(const Transition& tr);
  std::size_t size() const { return items_.size(); }
  std::size_t capacity() const { return capacity_; }
  bool empty() const { return items_.empty(); }
  const Transition& operator[](std::size_t i) const { return items_[i]; }

  /// n draws, without replacement when the buffer holds at least n entries and
  /// with replacement otherwise.
  std::vector<Transition> sample(std::size_t n, Rng& rng) const;

 private:
  std::size_t capacity_;
  std::deque<Transition> items_;
};

/// Explores (uniform over unmasked actions) when a uniform draw in [0,1) is at
/// most `threshold`, otherwise takes the masked argmax of the network.
ActionIndex select_action(const MdpState& s, const QNetwork& net, const ActionMask& mask,
                          double threshold, Rng& rng);

/// r + γ·max over the next zone's unmasked actions of the target network.
double td_target(const Transition& tr, const QNetwork& target, const ActionMask& next_mask,
                 double gamma);

/// θ' ← θ.
void sync_target(const QNetwork& policy, QNetwork& target);

struct CurvePoint {
  Minute cycle = 0;
  std::optional<double> loss;
  double cumulative_reward = 0;
  std::size_t buffer_size = 0;

  bool operator==(const CurvePoint&) const = default;
};

void write_learning_curve(std::ostream& out, std::span<const CurvePoint> curve);

/// Policy and target networks plus replay memory, trained against a simulator
/// with all vacant drivers sharing one policy.
class AmDqnAgent {
 public:
  AmDqnAgent(const ZoneNetwork& network, Hyperparams hp, std::uint64_t init_seed,
             std::uint64_t policy_seed);

  /// Runs `cycles` cycles of `env`, learning online. Multiple calls continue
  /// the annealing clock and the sync schedule.
  std::vector<CurvePoint> train(Simulator& env, Minute cycles);

  /// Action under a fixed exploration probability, no learning.
  ActionIndex act(const MdpState& s, double threshold);

  const QNetwork& policy() const { return policy_; }
  const QNetwork& target() const { return target_; }
  const ReplayBuffer& buffer() const { return buffer_; }
  const Hyperparams& hyperparams() const { return hp_; }
  /// Cycles trained so far; the annealing clock.
  std::int64_t cycles_trained() const { return cycles_trained_; }

 private:
  double discount(const Transition& tr) const;

  const ZoneNetwork* network_;
  Hyperparams hp_;
  QNetwork policy_;
  QNetwork target_;
  ReplayBuffer buffer_;
  Rng rng_;
  std::int64_t cycles_trained_ = 0;
};

}  // namespace taxirl
