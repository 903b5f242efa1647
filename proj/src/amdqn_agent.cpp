#include "taxirl/amdqn_agent.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <stdexcept>

namespace taxirl {

void Hyperparams::validate() const {
  if (!(gamma >= 0 && gamma <= 1)) throw std::invalid_argument("gamma must lie in [0,1]");
  if (!(alpha >= 0) || !std::isfinite(alpha)) {
    throw std::invalid_argument("alpha must be finite and >= 0");
  }
  if (replay_capacity < 1) throw std::invalid_argument("replay capacity must be >= 1");
  if (minibatch < 1) throw std::invalid_argument("minibatch must be >= 1");
  if (sync_period < 1) throw std::invalid_argument("sync period must be >= 1");
  if (!(epsilon >= 0 && epsilon <= 1)) throw std::invalid_argument("epsilon must lie in [0,1]");
  if (!(lambda > 0)) throw std::invalid_argument("lambda must be > 0");
  if (hidden < 1) throw std::invalid_argument("hidden width must be >= 1");
}

double anneal_threshold(double t, double epsilon, double lambda) {
  return epsilon + (1.0 - epsilon) * std::exp(-t / lambda);
}

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw std::invalid_argument("replay buffer capacity must be >= 1");
}

void ReplayBuffer::push(const Transition& tr) {
  if (items_.size() == capacity_) items_.pop_front();
  items_.push_back(tr);
}

std::vector<Transition> ReplayBuffer::sample(std::size_t n, Rng& rng) const {
  if (items_.empty()) throw std::logic_error("cannot sample from an empty replay buffer");
  if (n == 0) throw std::invalid_argument("minibatch size must be >= 1");
  std::vector<Transition> out;
  out.reserve(n);
  if (items_.size() < n) {
    std::uniform_int_distribution<std::size_t> pick(0, items_.size() - 1);
    for (std::size_t i = 0; i < n; ++i) out.push_back(items_[pick(rng)]);
  } else {
    std::sample(items_.begin(), items_.end(), std::back_inserter(out), n, rng);
  }
  return out;
}

ActionIndex select_action(const MdpState& s, const QNetwork& net, const ActionMask& mask,
                          double threshold, Rng& rng) {
  if (mask.zone() != s.zone) throw std::logic_error("mask built for a different zone");
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  if (coin(rng) > threshold) {
    const int zones = net.input_dim() - kMinutesPerDay - kDaysPerWeek;
    return masked_max(net.forward(encode_state(s, zones)), mask).index;
  }
  std::uniform_int_distribution<ActionIndex> pick(0, mask.pass_count() - 1);
  return pick(rng);
}

double td_target(const Transition& tr, const QNetwork& target, const ActionMask& next_mask,
                 double gamma) {
  if (next_mask.zone() != tr.next.zone) {
    throw std::logic_error("td_target: mask does not belong to the next state's zone");
  }
  if (gamma == 0) return tr.reward;
  const int zones = target.input_dim() - kMinutesPerDay - kDaysPerWeek;
  const double best = masked_max(target.forward(encode_state(tr.next, zones)), next_mask).value;
  return tr.reward + gamma * best;
}

void sync_target(const QNetwork& policy, QNetwork& target) {
  target.copy_parameters_from(policy);
}

void write_learning_curve(std::ostream& out, std::span<const CurvePoint> curve) {
  out << "cycle,mean_loss,cumulative_reward,buffer_size\n";
  for (const CurvePoint& p : curve) {
    out << p.cycle << ',';
    if (p.loss) {
      out << *p.loss;
    } else {
      out << "NA";
    }
    out << ',' << p.cumulative_reward << ',' << p.buffer_size << '\n';
  }
}

namespace {

QNetwork make_policy(const ZoneNetwork& network, const Hyperparams& hp, std::uint64_t seed) {
  hp.validate();
  Rng rng(seed);
  return QNetwork::glorot(state_input_dim(network.zone_count()), hp.hidden,
                          network.head_width(), rng);
}

}  // namespace

AmDqnAgent::AmDqnAgent(const ZoneNetwork& network, Hyperparams hp, std::uint64_t init_seed,
                       std::uint64_t policy_seed)
    : network_(&network),
      hp_(hp),
      policy_(make_policy(network, hp, init_seed)),
      target_(policy_),
      buffer_(hp.replay_capacity),
      rng_(policy_seed) {}

ActionIndex AmDqnAgent::act(const MdpState& s, double threshold) {
  return select_action(s, policy_, network_->action_mask(s.zone), threshold, rng_);
}

double AmDqnAgent::discount(const Transition& tr) const {
  if (!hp_.discount_by_duration) return hp_.gamma;
  return std::pow(hp_.gamma, static_cast<double>(tr.elapsed));
}

std::vector<CurvePoint> AmDqnAgent::train(Simulator& env, Minute cycles) {
  if (&env.network() != network_) {
    throw std::logic_error("simulator runs on a different zone network");
  }
  const int zones = network_->zone_count();
  std::vector<CurvePoint> curve;
  curve.reserve(static_cast<std::size_t>(std::max<Minute>(cycles, 0)));
  double cumulative = 0;

  std::vector<Transition> sampled;
  std::vector<EncodedState> next_states;
  std::vector<TrainingExample> batch;

  for (Minute c = 0; c < cycles; ++c) {
    const double threshold =
        anneal_threshold(static_cast<double>(cycles_trained_), hp_.epsilon, hp_.lambda);
    Simulator::ActionMap actions;
    for (DriverId d : env.vacant_drivers()) {
      actions.emplace(d, act(env.observe_state(d), threshold));
    }
    const StepOutcome outcome = env.step(actions);
    const bool final_cycle = c + 1 == cycles;

    sampled.clear();
    for (const Decision& dec : outcome.decisions) {
      cumulative += dec.reward;
      // The last decision of the episode has no successor to bootstrap from.
      if (!final_cycle) {
        buffer_.push({dec.state, dec.action, dec.reward, dec.next_state, dec.elapsed});
      }
      if (buffer_.size() >= hp_.minibatch) {
        auto mini = buffer_.sample(hp_.minibatch, rng_);
        sampled.insert(sampled.end(), mini.begin(), mini.end());
      }
    }

    CurvePoint point{cycles_trained_, std::nullopt, cumulative, buffer_.size()};
    if (!sampled.empty()) {
      next_states.clear();
      for (const Transition& tr : sampled) next_states.push_back(encode_state(tr.next, zones));
      const Eigen::MatrixXd q_next = target_.forward_batch(next_states);

      batch.clear();
      for (std::size_t i = 0; i < sampled.size(); ++i) {
        const Transition& tr = sampled[i];
        const double gamma = discount(tr);
        double y = tr.reward;
        if (gamma != 0) {
          const auto& mask = network_->action_mask(tr.next.zone);
          y += gamma * masked_max(q_next.col(static_cast<Eigen::Index>(i)), mask).value;
        }
        batch.push_back({encode_state(tr.state, zones), tr.action, y});
      }
      point.loss = policy_.sgd_step(batch, hp_.alpha);
    }
    curve.push_back(point);

    ++cycles_trained_;
    if (cycles_trained_ % hp_.sync_period == 0) sync_target(policy_, target_);
  }
  return curve;
}

}  // namespace taxirl
