#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <random>
#include <span>
#include <stdexcept>
#include <utility>

#include <Eigen/Dense>

#include "taxirl/simulator.hpp"
#include "taxirl/zone_graph.hpp"

namespace taxirl {

class QNetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Input width for a network over `zone_count` zones: minute-of-day block,
/// day-of-week block, zone block.
constexpr int state_input_dim(int zone_count) {
  return kMinutesPerDay + kDaysPerWeek + zone_count;
}

/// One-hot state encoding, stored as its three active positions.
struct EncodedState {
  std::array<int, 3> active{};
  int input_dim = 0;

  bool operator==(const EncodedState&) const = default;
  Eigen::VectorXd dense() const;
};

EncodedState encode_state(const MdpState& s, int zone_count);

/// (state, taken action, regression target) for the sparse input path.
struct TrainingExample {
  EncodedState state;
  ActionIndex action = 0;
  double target = 0;
};

/// Same, with an arbitrary dense input. Used for gradient checks on small
/// networks.
struct DenseExample {
  Eigen::VectorXd input;
  ActionIndex action = 0;
  double target = 0;
};

struct DenseLayer {
  Eigen::MatrixXd weights;  // out x in
  Eigen::VectorXd bias;
};

struct Gradients {
  std::array<DenseLayer, 3> layers;
};

struct LossGradient {
  double loss = 0;
  Gradients grad;
};

double elu(double x);
double elu_derivative(double x);

/// input -> hidden -> hidden -> head, ELU on both hidden layers, identity on
/// the output.
class QNetwork {
 public:
  /// Zero-initialized.
  QNetwork(int input_dim, int hidden, int head_width);

  /// Weights uniform in +-sqrt(6/(fan_in+fan_out)), biases zero.
  static QNetwork glorot(int input_dim, int hidden, int head_width, std::mt19937_64& rng);

  int input_dim() const { return input_dim_; }
  int hidden() const { return hidden_; }
  int head_width() const { return head_width_; }
  std::size_t parameter_count() const;

  Eigen::VectorXd forward(const EncodedState& x) const;
  Eigen::VectorXd forward(const Eigen::VectorXd& x) const;
  /// Column j holds the q-vector of states[j].
  Eigen::MatrixXd forward_batch(std::span<const EncodedState> states) const;

  /// Mean squared TD error over the batch, with gradients flowing only through
  /// each example's taken action.
  double loss(std::span<const TrainingExample> batch) const;
  double loss(std::span<const DenseExample> batch) const;
  LossGradient loss_gradient(std::span<const TrainingExample> batch) const;
  LossGradient loss_gradient(std::span<const DenseExample> batch) const;

  /// theta <- theta - alpha * grad L. Returns L before the update.
  double sgd_step(std::span<const TrainingExample> batch, double alpha);
  double sgd_step(std::span<const DenseExample> batch, double alpha);
  void apply_gradients(const Gradients& g, double alpha);

  /// Copies every parameter; shapes must agree.
  void copy_parameters_from(const QNetwork& other);

  std::array<DenseLayer, 3>& layers() { return layers_; }
  const std::array<DenseLayer, 3>& layers() const { return layers_; }

  /// Flat parameter access in a fixed order (layer, weights column-major,
  /// then bias). Used by finite-difference checks.
  double& parameter(std::size_t index);

  bool operator==(const QNetwork& other) const;

  void save(std::ostream& out) const;
  static QNetwork load(std::istream& in);

 private:
  struct Backward {
    double loss = 0;
    Gradients grad;            // first-layer weights left empty
    Eigen::MatrixXd d1;        // first-layer deltas, one column per example
    Eigen::MatrixXd x_dense;   // dense inputs (dense path only)
  };
  template <typename Example>
  Backward backward(std::span<const Example> batch) const;

  int input_dim_;
  int hidden_;
  int head_width_;
  std::array<DenseLayer, 3> layers_;
};

/// Best unmasked entry of `q`. Ties go to the lowest index.
struct MaskedMax {
  double value = 0;
  ActionIndex index = 0;
};
MaskedMax masked_max(const Eigen::VectorXd& q, const ActionMask& mask);

/// Largest relative disagreement between analytic and central-difference
/// gradients of the loss on one example. `tamper` may edit the analytic
/// gradients before comparison.
double grad_check(const QNetwork& net, const Eigen::VectorXd& x, ActionIndex a, double y,
                  double epsilon,
                  const std::function<void(Gradients&)>& tamper = {});

}  // namespace taxirl
