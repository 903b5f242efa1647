#include "taxirl/qnet.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>
#include <limits>
#include <ostream>
#include <string>

namespace taxirl {

Eigen::VectorXd EncodedState::dense() const {
  Eigen::VectorXd x = Eigen::VectorXd::Zero(input_dim);
  for (int i : active) x[i] = 1.0;
  return x;
}

EncodedState encode_state(const MdpState& s, int zone_count) {
  if (s.minute < 0 || s.minute >= kMinutesPerDay) {
    throw QNetError("encode_state: minute " + std::to_string(s.minute) + " out of range");
  }
  if (s.day < 0 || s.day >= kDaysPerWeek) {
    throw QNetError("encode_state: day " + std::to_string(s.day) + " out of range");
  }
  if (s.zone < 0 || s.zone >= zone_count) {
    throw QNetError("encode_state: zone " + std::to_string(s.zone) + " out of range");
  }
  EncodedState e;
  e.active = {s.minute, kMinutesPerDay + s.day, kMinutesPerDay + kDaysPerWeek + s.zone};
  e.input_dim = state_input_dim(zone_count);
  return e;
}

double elu(double x) { return x > 0 ? x : std::expm1(x); }
double elu_derivative(double x) { return x > 0 ? 1.0 : std::exp(x); }

namespace {

Eigen::MatrixXd elu(const Eigen::MatrixXd& z) {
  return z.unaryExpr([](double v) { return taxirl::elu(v); });
}

Eigen::MatrixXd elu_derivative(const Eigen::MatrixXd& z) {
  return z.unaryExpr([](double v) { return taxirl::elu_derivative(v); });
}

DenseLayer zero_layer(int in, int out) {
  return {Eigen::MatrixXd::Zero(out, in), Eigen::VectorXd::Zero(out)};
}

}  // namespace

QNetwork::QNetwork(int input_dim, int hidden, int head_width)
    : input_dim_(input_dim), hidden_(hidden), head_width_(head_width) {
  if (input_dim < 1 || hidden < 1 || head_width < 1) {
    throw QNetError("network dimensions must be positive");
  }
  layers_ = {zero_layer(input_dim, hidden), zero_layer(hidden, hidden),
             zero_layer(hidden, head_width)};
}

QNetwork QNetwork::glorot(int input_dim, int hidden, int head_width,
                          std::mt19937_64& rng) {
  QNetwork net(input_dim, hidden, head_width);
  for (DenseLayer& layer : net.layers_) {
    const double fan = static_cast<double>(layer.weights.rows() + layer.weights.cols());
    std::uniform_real_distribution<double> u(-std::sqrt(6.0 / fan), std::sqrt(6.0 / fan));
    for (Eigen::Index c = 0; c < layer.weights.cols(); ++c) {
      for (Eigen::Index r = 0; r < layer.weights.rows(); ++r) {
        layer.weights(r, c) = u(rng);
      }
    }
  }
  return net;
}

std::size_t QNetwork::parameter_count() const {
  std::size_t n = 0;
  for (const DenseLayer& l : layers_) {
    n += static_cast<std::size_t>(l.weights.size() + l.bias.size());
  }
  return n;
}

namespace {

template <typename Layers>
auto& flat_parameter(Layers& layers, std::size_t index) {
  for (auto& l : layers) {
    const auto w = static_cast<std::size_t>(l.weights.size());
    if (index < w) return l.weights.data()[index];
    index -= w;
    const auto b = static_cast<std::size_t>(l.bias.size());
    if (index < b) return l.bias.data()[index];
    index -= b;
  }
  throw QNetError("parameter index out of range");
}

// First-layer pre-activations, one column per example.
Eigen::MatrixXd first_layer(const DenseLayer& l, std::span<const EncodedState> xs,
                            int input_dim) {
  Eigen::MatrixXd z(l.weights.rows(), static_cast<Eigen::Index>(xs.size()));
  for (std::size_t j = 0; j < xs.size(); ++j) {
    if (xs[j].input_dim != input_dim) throw QNetError("input dimension mismatch");
    auto col = z.col(static_cast<Eigen::Index>(j));
    col = l.bias;
    for (int i : xs[j].active) col += l.weights.col(i);
  }
  return z;
}

Eigen::MatrixXd first_layer(const DenseLayer& l, const Eigen::MatrixXd& x) {
  if (x.rows() != l.weights.cols()) throw QNetError("input dimension mismatch");
  Eigen::MatrixXd z = l.weights * x;
  z.colwise() += l.bias;
  return z;
}

const EncodedState& input_of(const TrainingExample& e) { return e.state; }
const Eigen::VectorXd& input_of(const DenseExample& e) { return e.input; }

}  // namespace

double& QNetwork::parameter(std::size_t index) { return flat_parameter(layers_, index); }

Eigen::VectorXd QNetwork::forward(const EncodedState& x) const {
  return forward_batch(std::span<const EncodedState>(&x, 1)).col(0);
}

Eigen::VectorXd QNetwork::forward(const Eigen::VectorXd& x) const {
  Eigen::MatrixXd h1 = elu(first_layer(layers_[0], x));
  Eigen::MatrixXd z2 = layers_[1].weights * h1;
  z2.colwise() += layers_[1].bias;
  Eigen::MatrixXd q = layers_[2].weights * elu(z2);
  q.colwise() += layers_[2].bias;
  return q.col(0);
}

Eigen::MatrixXd QNetwork::forward_batch(std::span<const EncodedState> states) const {
  Eigen::MatrixXd h1 = elu(first_layer(layers_[0], states, input_dim_));
  Eigen::MatrixXd z2 = layers_[1].weights * h1;
  z2.colwise() += layers_[1].bias;
  Eigen::MatrixXd q = layers_[2].weights * elu(z2);
  q.colwise() += layers_[2].bias;
  return q;
}

// Backward pass of the mean squared TD loss. The first-layer weight gradient
// is left factored as d1 * x^T so the sparse path never materializes it.
template <typename Example>
QNetwork::Backward QNetwork::backward(std::span<const Example> batch) const {
  if (batch.empty()) throw QNetError("empty training batch");
  const auto n = static_cast<Eigen::Index>(batch.size());
  Backward out;

  Eigen::MatrixXd z1;
  if constexpr (std::is_same_v<Example, TrainingExample>) {
    std::vector<EncodedState> xs;
    xs.reserve(batch.size());
    for (const auto& e : batch) xs.push_back(e.state);
    z1 = first_layer(layers_[0], xs, input_dim_);
  } else {
    out.x_dense.resize(input_dim_, n);
    for (Eigen::Index j = 0; j < n; ++j) {
      const auto& in = input_of(batch[static_cast<std::size_t>(j)]);
      if (in.size() != input_dim_) throw QNetError("input dimension mismatch");
      out.x_dense.col(j) = in;
    }
    z1 = first_layer(layers_[0], out.x_dense);
  }
  const Eigen::MatrixXd h1 = elu(z1);
  Eigen::MatrixXd z2 = layers_[1].weights * h1;
  z2.colwise() += layers_[1].bias;
  const Eigen::MatrixXd h2 = elu(z2);
  Eigen::MatrixXd q = layers_[2].weights * h2;
  q.colwise() += layers_[2].bias;

  Eigen::MatrixXd d3 = Eigen::MatrixXd::Zero(head_width_, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const auto& e = batch[static_cast<std::size_t>(j)];
    if (e.action < 0 || e.action >= head_width_) {
      throw QNetError("action index " + std::to_string(e.action) + " out of range");
    }
    const double diff = q(e.action, j) - e.target;
    out.loss += diff * diff;
    d3(e.action, j) = 2.0 * diff / static_cast<double>(n);
  }
  out.loss /= static_cast<double>(n);

  out.grad.layers[2] = {d3 * h2.transpose(), d3.rowwise().sum()};
  const Eigen::MatrixXd d2 =
      (layers_[2].weights.transpose() * d3).cwiseProduct(elu_derivative(z2));
  out.grad.layers[1] = {d2 * h1.transpose(), d2.rowwise().sum()};
  out.d1 = (layers_[1].weights.transpose() * d2).cwiseProduct(elu_derivative(z1));
  out.grad.layers[0].bias = out.d1.rowwise().sum();
  return out;
}

namespace {

template <typename Example>
double mean_loss(const QNetwork& net, std::span<const Example> batch) {
  if (batch.empty()) throw QNetError("empty training batch");
  double loss = 0;
  for (const auto& e : batch) {
    const Eigen::VectorXd q = net.forward(input_of(e));
    if (e.action < 0 || e.action >= q.size()) throw QNetError("action index out of range");
    const double diff = q[e.action] - e.target;
    loss += diff * diff;
  }
  return loss / static_cast<double>(batch.size());
}

}  // namespace

double QNetwork::loss(std::span<const TrainingExample> batch) const {
  return mean_loss(*this, batch);
}
double QNetwork::loss(std::span<const DenseExample> batch) const {
  return mean_loss(*this, batch);
}

LossGradient QNetwork::loss_gradient(std::span<const TrainingExample> batch) const {
  Backward b = backward(batch);
  Eigen::MatrixXd gw1 = Eigen::MatrixXd::Zero(hidden_, input_dim_);
  for (std::size_t j = 0; j < batch.size(); ++j) {
    for (int i : batch[j].state.active) gw1.col(i) += b.d1.col(static_cast<Eigen::Index>(j));
  }
  b.grad.layers[0].weights = std::move(gw1);
  return {b.loss, std::move(b.grad)};
}

LossGradient QNetwork::loss_gradient(std::span<const DenseExample> batch) const {
  Backward b = backward(batch);
  b.grad.layers[0].weights = b.d1 * b.x_dense.transpose();
  return {b.loss, std::move(b.grad)};
}

double QNetwork::sgd_step(std::span<const TrainingExample> batch, double alpha) {
  const Backward b = backward(batch);
  for (std::size_t k = 1; k < layers_.size(); ++k) {
    layers_[k].weights.noalias() -= alpha * b.grad.layers[k].weights;
    layers_[k].bias.noalias() -= alpha * b.grad.layers[k].bias;
  }
  layers_[0].bias.noalias() -= alpha * b.grad.layers[0].bias;
  // Only the active input columns receive gradient.
  for (std::size_t j = 0; j < batch.size(); ++j) {
    for (int i : batch[j].state.active) {
      layers_[0].weights.col(i).noalias() -= alpha * b.d1.col(static_cast<Eigen::Index>(j));
    }
  }
  return b.loss;
}

double QNetwork::sgd_step(std::span<const DenseExample> batch, double alpha) {
  LossGradient lg = loss_gradient(batch);
  apply_gradients(lg.grad, alpha);
  return lg.loss;
}

void QNetwork::apply_gradients(const Gradients& g, double alpha) {
  for (std::size_t k = 0; k < layers_.size(); ++k) {
    if (g.layers[k].weights.rows() != layers_[k].weights.rows() ||
        g.layers[k].weights.cols() != layers_[k].weights.cols() ||
        g.layers[k].bias.size() != layers_[k].bias.size()) {
      throw QNetError("gradient shape mismatch");
    }
    layers_[k].weights.noalias() -= alpha * g.layers[k].weights;
    layers_[k].bias.noalias() -= alpha * g.layers[k].bias;
  }
}

void QNetwork::copy_parameters_from(const QNetwork& other) {
  if (other.input_dim_ != input_dim_ || other.hidden_ != hidden_ ||
      other.head_width_ != head_width_) {
    throw QNetError("cannot copy parameters between networks of different shape");
  }
  layers_ = other.layers_;
}

bool QNetwork::operator==(const QNetwork& other) const {
  if (input_dim_ != other.input_dim_ || hidden_ != other.hidden_ ||
      head_width_ != other.head_width_) {
    return false;
  }
  for (std::size_t k = 0; k < layers_.size(); ++k) {
    if (layers_[k].weights != other.layers_[k].weights ||
        layers_[k].bias != other.layers_[k].bias) {
      return false;
    }
  }
  return true;
}

// Checkpoint layout (text):
//   taxirl-qnet 1
//   <input_dim> <hidden> <head_width>
//   per layer: "W <rows> <cols>" then one line per column, "b <size>" then one line
// Values use the shortest round-trip decimal form.
namespace {

void write_values(std::ostream& out, const double* data, Eigen::Index count) {
  char buf[32];
  for (Eigen::Index i = 0; i < count; ++i) {
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, data[i]);
    if (i > 0) out.put(' ');
    out.write(buf, end - buf);
  }
  out.put('\n');
}

void read_values(std::istream& in, double* data, Eigen::Index count) {
  std::string token;
  for (Eigen::Index i = 0; i < count; ++i) {
    if (!(in >> token)) throw QNetError("checkpoint truncated");
    auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), data[i]);
    if (ec != std::errc{} || ptr != token.data() + token.size()) {
      throw QNetError("checkpoint: bad value '" + token + "'");
    }
  }
}

void expect(std::istream& in, const std::string& word) {
  std::string got;
  if (!(in >> got) || got != word) {
    throw QNetError("checkpoint: expected '" + word + "', got '" + got + "'");
  }
}

}  // namespace

void QNetwork::save(std::ostream& out) const {
  out << "taxirl-qnet 1\n" << input_dim_ << ' ' << hidden_ << ' ' << head_width_ << '\n';
  for (const DenseLayer& l : layers_) {
    out << "W " << l.weights.rows() << ' ' << l.weights.cols() << '\n';
    for (Eigen::Index c = 0; c < l.weights.cols(); ++c) {
      write_values(out, l.weights.col(c).data(), l.weights.rows());
    }
    out << "b " << l.bias.size() << '\n';
    write_values(out, l.bias.data(), l.bias.size());
  }
  if (!out) throw QNetError("checkpoint write failed");
}

QNetwork QNetwork::load(std::istream& in) {
  expect(in, "taxirl-qnet");
  int version = 0;
  if (!(in >> version) || version != 1) throw QNetError("checkpoint: unsupported version");
  int input_dim = 0, hidden = 0, head = 0;
  if (!(in >> input_dim >> hidden >> head)) throw QNetError("checkpoint: bad dimensions");
  QNetwork net(input_dim, hidden, head);
  for (DenseLayer& l : net.layers_) {
    Eigen::Index rows = 0, cols = 0, size = 0;
    expect(in, "W");
    if (!(in >> rows >> cols) || rows != l.weights.rows() || cols != l.weights.cols()) {
      throw QNetError("checkpoint: weight shape mismatch");
    }
    read_values(in, l.weights.data(), l.weights.size());
    expect(in, "b");
    if (!(in >> size) || size != l.bias.size()) {
      throw QNetError("checkpoint: bias shape mismatch");
    }
    read_values(in, l.bias.data(), l.bias.size());
  }
  return net;
}

MaskedMax masked_max(const Eigen::VectorXd& q, const ActionMask& mask) {
  if (static_cast<std::size_t>(q.size()) != mask.size()) {
    throw QNetError("q-vector and mask lengths differ");
  }
  MaskedMax best{-std::numeric_limits<double>::infinity(), -1};
  for (Eigen::Index i = 0; i < q.size(); ++i) {
    if (!mask.passes(static_cast<ActionIndex>(i))) continue;
    if (best.index < 0 || q[i] > best.value) best = {q[i], static_cast<ActionIndex>(i)};
  }
  if (best.index < 0) throw QNetError("mask blocks every action");
  return best;
}

double grad_check(const QNetwork& net, const Eigen::VectorXd& x, ActionIndex a, double y,
                  double epsilon, const std::function<void(Gradients&)>& tamper) {
  const DenseExample example{x, a, y};
  const std::span<const DenseExample> batch(&example, 1);
  LossGradient analytic = net.loss_gradient(batch);
  if (tamper) tamper(analytic.grad);

  QNetwork probe = net;
  double worst = 0;
  for (std::size_t i = 0; i < probe.parameter_count(); ++i) {
    double& p = probe.parameter(i);
    const double original = p;
    p = original + epsilon;
    const double up = probe.loss(batch);
    p = original - epsilon;
    const double down = probe.loss(batch);
    p = original;

    const double numeric = (up - down) / (2 * epsilon);
    const double exact = flat_parameter(analytic.grad.layers, i);
    const double scale = std::max(std::abs(numeric), std::abs(exact));
    if (scale > 0) worst = std::max(worst, std::abs(numeric - exact) / scale);
  }
  return worst;
}

}  // namespace taxirl
