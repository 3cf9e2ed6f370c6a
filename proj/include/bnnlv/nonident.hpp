#pragma once

// Constructions that move explanatory power between weights and latent inputs
// while leaving the likelihood unchanged, and Monte Carlo checks of the
// resulting preference of the posterior for the transformed parameters.

#include <cstdint>
#include <span>
#include <vector>

#include "bnnlv/data.hpp"
#include "bnnlv/diffcore.hpp"
#include "bnnlv/matrix.hpp"
#include "bnnlv/model.hpp"

namespace bnnlv {

struct NodeTransformResult {
  double weight;
  double latent;
};

// (W, z) -> (W / C, (C - 1) x + C z). Leaves g(W (x + z)) unchanged for C > 0.
NodeTransformResult node_transform(double w, double x, double z, double c);

// Single-hidden-node network g(W x + W z) with unit output weight, as a weight vector over
// Architecture{1, 1, {1}, 1}.
Architecture node_architecture(double leaky_slope = 0.01);
std::vector<double> node_weights(double w);

// First layer of a network whose latent input has the same width as x.
struct FirstLayer {
  Matrix wx;              // H x D
  Matrix wz;              // H x D
  std::vector<double> b;  // H
};

FirstLayer first_layer(const Architecture& arch, std::span<const double> w);
void set_first_layer(const Architecture& arch, const FirstLayer& layer, std::span<double> w);

// Requires W^z = R T with T invertible.
struct LayerTransformSpec {
  std::vector<double> s;  // diagonal of S, length D
  std::vector<double> u;  // length D
  Matrix r;               // H x D
  Matrix t;               // D x D

  void validate(const Matrix& wz) const;
};

// S = I, U = 0, T = diag(t), R = W^z T^-1, so z_hat = t * (z - x).
LayerTransformSpec scaled_identity_spec(const Matrix& wz, std::span<const double> t);
// S = 0, U = 0, T = I, R = W^z.
LayerTransformSpec identity_spec(const Matrix& wz);

struct LayerTransformResult {
  FirstLayer layer;
  std::vector<double> latent;
};

// W^x + W^z S, R, b + R U and z_hat = T z - T S x - U for one observation.
LayerTransformResult layer_transform(const FirstLayer& layer, const LayerTransformSpec& spec,
                                     std::span<const double> x, std::span<const double> z);

struct NetworkTransform {
  std::vector<double> w;
  Matrix z;
};

// Applies layer_transform to the first layer of a full network and to every row of (X, Z).
NetworkTransform transform_network(const Architecture& arch, std::span<const double> w,
                                   const LayerTransformSpec& spec, const Matrix& x, const Matrix& z);

// Single hidden layer, latent width D, one output: zero x-weights and biases, all-ones latent
// weights, output weights 1 / (D H) and z_hat[n][d] = g^-1(y_n) for every d.
NetworkTransform y_encoding_transform(const Architecture& arch, const Matrix& x, const Matrix& y);

// log_joint(W_hat, Z_hat) - log_joint(W, Z)
double posterior_gap(const Architecture& arch, std::span<const double> w, const Matrix& z,
                     std::span<const double> w_hat, const Matrix& z_hat, const PriorConfig& priors, const Matrix& x,
                     const Matrix& y);

// Lower end of the C interval on which the node transform is preferred asymptotically.
double c_lower_bound(double mu_x, double sigma2_x, double sigma2_z);
// Largest |t_d| for which the scaled-identity layer transform is preferred asymptotically.
double t_upper_bound(double mu_xd, double sigma2_xd, double sigma2_z);

enum class BiasTransform { Identity, Node, Layer };

struct BiasDemoConfig {
  BiasTransform transform = BiasTransform::Node;
  double c = 0.99;              // node transform constant
  double node_weight = 1.0;     // W of the single-node network
  double t_fraction = 0.5;      // layer transform: t = t_fraction * t_upper_bound
  std::size_t hidden = 2;       // layer transform network width
  double weight_sd = 1.0;       // layer transform network weights ~ N(0, weight_sd^2)
};

struct BiasRow {
  std::size_t n = 0;
  double positive_fraction = 0.0;  // fraction of trials with D_N > 0 strictly
  double mean_gap = 0.0;           // mean D_N / N
  double mean_latent_gap = 0.0;    // mean latent-prior part of D_N, divided by N
};

// For each N: fresh x ~ sampler, z ~ N(0, s_z), y from the network plus output noise,
// transform, then D_N. Trials use derived seeds and run in parallel.
std::vector<BiasRow> bias_probability(const BiasDemoConfig& cfg, std::span<const std::size_t> ns,
                                      std::size_t trials, const PriorConfig& priors, const XSampler& x_sampler,
                                      std::uint64_t seed);

// Mean and variance of a sampler (uniform, normal and mixture kinds).
double sampler_mean(const XSampler& s);
double sampler_variance(const XSampler& s);

}  // namespace bnnlv
