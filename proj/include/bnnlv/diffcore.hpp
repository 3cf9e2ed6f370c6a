#pragma once

// Reverse-mode automatic differentiation on a scalar tape, the dense LeakyReLU
// MLP shared by every model in the library, and the Gaussian reparameterization.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "bnnlv/errors.hpp"

namespace bnnlv {

// ---------------------------------------------------------------------------
// Scalar helpers
// ---------------------------------------------------------------------------

inline double softplus(double r) { return std::max(r, 0.0) + std::log1p(std::exp(-std::abs(r))); }
inline double sigmoid(double r) {
  if (r >= 0) return 1.0 / (1.0 + std::exp(-r));
  const double e = std::exp(r);
  return e / (1.0 + e);
}
// Inverse of softplus, for initializing rho from a target standard deviation.
inline double softplus_inverse(double s) { return s > 30.0 ? s : std::log(std::expm1(s)); }

inline double leaky_relu(double a, double slope) { return a > 0.0 ? a : slope * a; }
// Subgradient at 0 uses the negative-branch slope.
inline double leaky_relu_derivative(double a, double slope) { return a > 0.0 ? 1.0 : slope; }
inline double leaky_relu_inverse(double y, double slope) { return y > 0.0 ? y : y / slope; }

std::vector<double> leaky_relu(std::span<const double> a, double slope);

// ---------------------------------------------------------------------------
// Tape
// ---------------------------------------------------------------------------

enum class OpTag : std::uint8_t {
  Leaf, Constant, Add, Sub, Mul, Div, Neg, Exp, Log, Sqrt, Abs, Square, LeakyRelu, Softplus, Tanh
};

class Tape;

// Handle to a node on a Tape. Cheap to copy; only valid while its tape lives.
class Var {
 public:
  Var() = default;
  double value() const;
  std::size_t index() const { return index_; }
  Tape* tape() const { return tape_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* t, std::size_t i) : tape_(t), index_(i) {}
  Tape* tape_ = nullptr;
  std::size_t index_ = 0;
};

class Gradients {
 public:
  explicit Gradients(std::vector<double> adj) : adjoint_(std::move(adj)) {}
  double operator[](Var v) const { return adjoint_.at(v.index()); }
  double operator[](std::size_t node) const { return adjoint_.at(node); }
  std::size_t size() const { return adjoint_.size(); }

 private:
  std::vector<double> adjoint_;
};

class Tape {
 public:
  Tape() { nodes_.reserve(1024); }
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var variable(double v) { return push(v, OpTag::Leaf, 0, {}, {}); }
  Var constant(double v) { return push(v, OpTag::Constant, 0, {}, {}); }
  std::vector<Var> variables(std::span<const double> values);

  double value(Var v) const { return nodes_[v.index_].value; }
  OpTag op(Var v) const { return nodes_[v.index_].op; }
  std::size_t size() const { return nodes_.size(); }

  // Exact reverse-mode adjoints of `root` with respect to every node on the tape.
  Gradients backward(Var root) const;

  Var unary(Var a, double value, double partial, OpTag op) {
    return push(value, op, 1, {a.index_, 0}, {partial, 0.0});
  }
  Var binary(Var a, Var b, double value, double pa, double pb, OpTag op) {
    return push(value, op, 2, {a.index_, b.index_}, {pa, pb});
  }

 private:
  struct Node {
    double value;
    std::size_t parents[2];
    double partials[2];
    std::uint8_t arity;
    OpTag op;
  };
  struct Pair {
    std::size_t a = 0, b = 0;
  };
  struct Partials {
    double a = 0.0, b = 0.0;
  };
  Var push(double value, OpTag op, std::uint8_t arity, Pair parents, Partials partials) {
    nodes_.push_back(Node{value, {parents.a, parents.b}, {partials.a, partials.b}, arity, op});
    return Var(this, nodes_.size() - 1);
  }

  std::vector<Node> nodes_;
};

// A "root" given as an array must hold exactly one element.
Gradients backward(std::span<const Var> roots);
Gradients backward(Var root);

Var operator+(Var a, Var b);
Var operator-(Var a, Var b);
Var operator*(Var a, Var b);
Var operator/(Var a, Var b);
Var operator-(Var a);
Var operator+(Var a, double b);
Var operator+(double a, Var b);
Var operator-(Var a, double b);
Var operator-(double a, Var b);
Var operator*(Var a, double b);
Var operator*(double a, Var b);
Var operator/(Var a, double b);
Var operator/(double a, Var b);
Var exp(Var a);
Var log(Var a);
Var sqrt(Var a);
Var abs(Var a);
Var square(Var a);
Var tanh(Var a);
Var leaky_relu(Var a, double slope);
Var softplus(Var a);

inline double square(double a) { return a * a; }

// ---------------------------------------------------------------------------
// Architecture and MLP
// ---------------------------------------------------------------------------

struct LayerSlice {
  std::size_t weight_offset;  // out x in row-major
  std::size_t bias_offset;
  std::size_t in;
  std::size_t out;
};

struct Architecture {
  std::size_t input_dim_x = 1;
  std::size_t input_dim_z = 1;
  std::vector<std::size_t> hidden{50};
  std::size_t output_dim = 1;
  double leaky_slope = 0.01;

  void validate() const;
  std::size_t input_dim() const { return input_dim_x + input_dim_z; }
  std::size_t num_layers() const { return hidden.size() + 1; }
  std::size_t parameter_count() const;
  LayerSlice layer(std::size_t l) const;
  // Flat indices of first-layer weights that read latent inputs.
  std::vector<std::size_t> latent_input_weight_indices() const;

  bool operator==(const Architecture&) const = default;
};

template <class T>
struct ActivationOps;

template <>
struct ActivationOps<double> {
  static double act(double a, double slope) { return leaky_relu(a, slope); }
};

template <>
struct ActivationOps<Var> {
  static Var act(Var a, double slope) { return leaky_relu(a, slope); }
};

// f(x, z; W): dense layers over [x; z], LeakyReLU on hidden layers, identity output.
template <class T>
std::vector<T> mlp_forward(const Architecture& arch, std::span<const T> w, std::span<const T> x,
                           std::span<const T> z) {
  if (w.size() != arch.parameter_count()) throw ShapeError("mlp_forward: weight vector length mismatch");
  if (x.size() != arch.input_dim_x || z.size() != arch.input_dim_z)
    throw ShapeError("mlp_forward: input dimension mismatch");
  std::vector<T> act(x.begin(), x.end());
  act.insert(act.end(), z.begin(), z.end());
  for (std::size_t l = 0; l < arch.num_layers(); ++l) {
    const LayerSlice s = arch.layer(l);
    const bool hidden = l + 1 < arch.num_layers();
    std::vector<T> next;
    next.reserve(s.out);
    for (std::size_t o = 0; o < s.out; ++o) {
      T a = w[s.bias_offset + o];
      for (std::size_t i = 0; i < s.in; ++i) a = a + w[s.weight_offset + o * s.in + i] * act[i];
      next.push_back(hidden ? ActivationOps<T>::act(a, arch.leaky_slope) : a);
    }
    act = std::move(next);
  }
  return act;
}

inline std::vector<double> mlp_forward(const Architecture& arch, std::span<const double> w,
                                       std::span<const double> x, std::span<const double> z) {
  return mlp_forward<double>(arch, w, x, z);
}

// mu + softplus(rho) * eps
inline double gaussian_reparam(double mu, double rho, double eps) { return mu + softplus(rho) * eps; }
inline Var gaussian_reparam(Var mu, Var rho, double eps) { return mu + softplus(rho) * eps; }

}  // namespace bnnlv
