#include "bnnlv/diffcore.hpp"

#include <stdexcept>

namespace bnnlv {

std::vector<double> leaky_relu(std::span<const double> a, double slope) {
  if (!(slope > 0.0 && slope < 1.0)) throw DomainError("leaky_relu: slope must lie in (0, 1)");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = leaky_relu(a[i], slope);
  return out;
}

double Var::value() const {
  if (!tape_) throw std::logic_error("Var::value on an unbound variable");
  return tape_->value(*this);
}

std::vector<Var> Tape::variables(std::span<const double> values) {
  std::vector<Var> out;
  out.reserve(values.size());
  for (double v : values) out.push_back(variable(v));
  return out;
}

Gradients Tape::backward(Var root) const {
  if (root.tape_ != this) throw std::invalid_argument("backward: root does not belong to this tape");
  std::vector<double> adj(nodes_.size(), 0.0);
  adj[root.index_] = 1.0;
  // Nodes are appended in evaluation order, so reverse index order is a reverse topological order.
  for (std::size_t k = root.index_ + 1; k-- > 0;) {
    const Node& n = nodes_[k];
    const double g = adj[k];
    if (g == 0.0) continue;
    for (std::uint8_t p = 0; p < n.arity; ++p) adj[n.parents[p]] += g * n.partials[p];
  }
  return Gradients(std::move(adj));
}

Gradients backward(std::span<const Var> roots) {
  if (roots.size() != 1) throw ShapeError("backward: loss must be a scalar (got " + std::to_string(roots.size()) + " roots)");
  return backward(roots[0]);
}

Gradients backward(Var root) {
  if (!root.valid()) throw std::invalid_argument("backward: unbound root");
  return root.tape()->backward(root);
}

namespace {

Tape& same_tape(Var a, Var b) {
  if (!a.valid() || a.tape() != b.tape()) throw std::invalid_argument("Var operands live on different tapes");
  return *a.tape();
}

Tape& tape_of(Var a) {
  if (!a.valid()) throw std::invalid_argument("operation on an unbound Var");
  return *a.tape();
}

}  // namespace

Var operator+(Var a, Var b) { return same_tape(a, b).binary(a, b, a.value() + b.value(), 1.0, 1.0, OpTag::Add); }
Var operator-(Var a, Var b) { return same_tape(a, b).binary(a, b, a.value() - b.value(), 1.0, -1.0, OpTag::Sub); }
Var operator*(Var a, Var b) {
  return same_tape(a, b).binary(a, b, a.value() * b.value(), b.value(), a.value(), OpTag::Mul);
}
Var operator/(Var a, Var b) {
  const double bv = b.value();
  return same_tape(a, b).binary(a, b, a.value() / bv, 1.0 / bv, -a.value() / (bv * bv), OpTag::Div);
}
Var operator-(Var a) { return tape_of(a).unary(a, -a.value(), -1.0, OpTag::Neg); }
Var operator+(Var a, double b) { return tape_of(a).unary(a, a.value() + b, 1.0, OpTag::Add); }
Var operator+(double a, Var b) { return b + a; }
Var operator-(Var a, double b) { return tape_of(a).unary(a, a.value() - b, 1.0, OpTag::Sub); }
Var operator-(double a, Var b) { return tape_of(b).unary(b, a - b.value(), -1.0, OpTag::Sub); }
Var operator*(Var a, double b) { return tape_of(a).unary(a, a.value() * b, b, OpTag::Mul); }
Var operator*(double a, Var b) { return b * a; }
Var operator/(Var a, double b) { return tape_of(a).unary(a, a.value() / b, 1.0 / b, OpTag::Div); }
Var operator/(double a, Var b) {
  const double bv = b.value();
  return tape_of(b).unary(b, a / bv, -a / (bv * bv), OpTag::Div);
}

Var exp(Var a) {
  const double e = std::exp(a.value());
  return tape_of(a).unary(a, e, e, OpTag::Exp);
}
Var log(Var a) { return tape_of(a).unary(a, std::log(a.value()), 1.0 / a.value(), OpTag::Log); }
Var sqrt(Var a) {
  const double s = std::sqrt(a.value());
  return tape_of(a).unary(a, s, 0.5 / s, OpTag::Sqrt);
}
Var abs(Var a) {
  const double v = a.value();
  return tape_of(a).unary(a, std::abs(v), v > 0 ? 1.0 : (v < 0 ? -1.0 : 0.0), OpTag::Abs);
}
Var square(Var a) { return tape_of(a).unary(a, a.value() * a.value(), 2.0 * a.value(), OpTag::Square); }
Var tanh(Var a) {
  const double t = std::tanh(a.value());
  return tape_of(a).unary(a, t, 1.0 - t * t, OpTag::Tanh);
}
Var leaky_relu(Var a, double slope) {
  const double v = a.value();
  return tape_of(a).unary(a, leaky_relu(v, slope), leaky_relu_derivative(v, slope), OpTag::LeakyRelu);
}
Var softplus(Var a) {
  const double v = a.value();
  return tape_of(a).unary(a, softplus(v), sigmoid(v), OpTag::Softplus);
}

void Architecture::validate() const {
  if (input_dim_x == 0) throw ConfigError("architecture: input_dim_x must be >= 1");
  if (output_dim == 0) throw ConfigError("architecture: output_dim must be >= 1");
  for (std::size_t h : hidden)
    if (h == 0) throw ConfigError("architecture: hidden widths must be >= 1");
  if (!(leaky_slope > 0.0 && leaky_slope < 1.0)) throw ConfigError("architecture: leaky slope must lie in (0, 1)");
}

std::size_t Architecture::parameter_count() const {
  std::size_t count = 0;
  std::size_t in = input_dim();
  for (std::size_t h : hidden) {
    count += h * in + h;
    in = h;
  }
  return count + output_dim * in + output_dim;
}

LayerSlice Architecture::layer(std::size_t l) const {
  if (l >= num_layers()) throw ShapeError("architecture: layer index out of range");
  std::size_t offset = 0;
  std::size_t in = input_dim();
  for (std::size_t k = 0; k < l; ++k) {
    offset += hidden[k] * in + hidden[k];
    in = hidden[k];
  }
  const std::size_t out = l < hidden.size() ? hidden[l] : output_dim;
  return LayerSlice{offset, offset + out * in, in, out};
}

std::vector<std::size_t> Architecture::latent_input_weight_indices() const {
  std::vector<std::size_t> idx;
  const LayerSlice s = layer(0);
  for (std::size_t o = 0; o < s.out; ++o)
    for (std::size_t k = 0; k < input_dim_z; ++k) idx.push_back(s.weight_offset + o * s.in + input_dim_x + k);
  return idx;
}

}  // namespace bnnlv
