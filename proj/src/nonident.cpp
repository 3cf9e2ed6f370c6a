#include "bnnlv/nonident.hpp"

#include <Eigen/Dense>
#include <cmath>

#include "bnnlv/errors.hpp"
#include "bnnlv/kernels.hpp"
#include "bnnlv/rng.hpp"

namespace bnnlv {

NodeTransformResult node_transform(double w, double x, double z, double c) {
  if (c == 0.0) throw DomainError("node_transform: C must be nonzero");
  return {w / c, (c - 1.0) * x + c * z};
}

Architecture node_architecture(double leaky_slope) {
  Architecture a;
  a.input_dim_x = 1;
  a.input_dim_z = 1;
  a.hidden = {1};
  a.output_dim = 1;
  a.leaky_slope = leaky_slope;
  return a;
}

std::vector<double> node_weights(double w) { return {w, w, 0.0, 1.0, 0.0}; }

FirstLayer first_layer(const Architecture& arch, std::span<const double> w) {
  if (arch.input_dim_z != arch.input_dim_x) throw PreconditionError("first_layer: latent width must equal x width");
  if (w.size() != arch.parameter_count()) throw ShapeError("first_layer: weight length mismatch");
  const LayerSlice s = arch.layer(0);
  const std::size_t d = arch.input_dim_x;
  FirstLayer l{Matrix(s.out, d), Matrix(s.out, d), std::vector<double>(s.out)};
  for (std::size_t h = 0; h < s.out; ++h) {
    for (std::size_t j = 0; j < d; ++j) {
      l.wx(h, j) = w[s.weight_offset + h * s.in + j];
      l.wz(h, j) = w[s.weight_offset + h * s.in + d + j];
    }
    l.b[h] = w[s.bias_offset + h];
  }
  return l;
}

void set_first_layer(const Architecture& arch, const FirstLayer& l, std::span<double> w) {
  const LayerSlice s = arch.layer(0);
  const std::size_t d = arch.input_dim_x;
  if (l.wx.rows != s.out || l.wx.cols != d || !l.wz.same_shape(l.wx) || l.b.size() != s.out)
    throw ShapeError("set_first_layer: layer shape mismatch");
  for (std::size_t h = 0; h < s.out; ++h) {
    for (std::size_t j = 0; j < d; ++j) {
      w[s.weight_offset + h * s.in + j] = l.wx(h, j);
      w[s.weight_offset + h * s.in + d + j] = l.wz(h, j);
    }
    w[s.bias_offset + h] = l.b[h];
  }
}

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Eigen::Map<const RowMat> view(const Matrix& m) {
  return {m.data.data(), static_cast<Eigen::Index>(m.rows), static_cast<Eigen::Index>(m.cols)};
}

}  // namespace

void LayerTransformSpec::validate(const Matrix& wz) const {
  const std::size_t d = wz.cols;
  if (s.size() != d || u.size() != d || t.rows != d || t.cols != d || r.rows != wz.rows || r.cols != d)
    throw ShapeError("layer transform spec: shapes do not match W^z");
  const Eigen::MatrixXd tm = view(t);
  Eigen::FullPivLU<Eigen::MatrixXd> lu(tm);
  if (!lu.isInvertible()) throw DomainError("layer transform spec: T is singular");
  const Eigen::MatrixXd rt = Eigen::MatrixXd(view(r)) * tm;
  const double scale = std::max(1.0, Eigen::MatrixXd(view(wz)).cwiseAbs().maxCoeff());
  if ((rt - Eigen::MatrixXd(view(wz))).cwiseAbs().maxCoeff() > 1e-10 * scale)
    throw DomainError("layer transform spec: R T does not reproduce W^z");
}

LayerTransformSpec scaled_identity_spec(const Matrix& wz, std::span<const double> t) {
  const std::size_t d = wz.cols;
  if (t.size() != d) throw ShapeError("scaled_identity_spec: t length must equal D");
  LayerTransformSpec spec{std::vector<double>(d, 1.0), std::vector<double>(d, 0.0), Matrix(wz.rows, d), Matrix(d, d)};
  for (std::size_t j = 0; j < d; ++j) {
    if (t[j] == 0.0) throw DomainError("scaled_identity_spec: t entries must be nonzero");
    spec.t(j, j) = t[j];
    for (std::size_t h = 0; h < wz.rows; ++h) spec.r(h, j) = wz(h, j) / t[j];
  }
  return spec;
}

LayerTransformSpec identity_spec(const Matrix& wz) {
  const std::size_t d = wz.cols;
  LayerTransformSpec spec{std::vector<double>(d, 0.0), std::vector<double>(d, 0.0), wz, Matrix(d, d)};
  for (std::size_t j = 0; j < d; ++j) spec.t(j, j) = 1.0;
  return spec;
}

LayerTransformResult layer_transform(const FirstLayer& layer, const LayerTransformSpec& spec,
                                     std::span<const double> x, std::span<const double> z) {
  spec.validate(layer.wz);
  const std::size_t d = layer.wz.cols;
  const std::size_t h = layer.wz.rows;
  if (x.size() != d || z.size() != d) throw ShapeError("layer_transform: x and z must have length D");
  LayerTransformResult out{layer, std::vector<double>(d)};
  for (std::size_t i = 0; i < h; ++i)
    for (std::size_t j = 0; j < d; ++j) {
      out.layer.wx(i, j) = layer.wx(i, j) + layer.wz(i, j) * spec.s[j];
      out.layer.wz(i, j) = spec.r(i, j);
    }
  for (std::size_t i = 0; i < h; ++i) {
    double ru = 0.0;
    for (std::size_t j = 0; j < d; ++j) ru += spec.r(i, j) * spec.u[j];
    out.layer.b[i] = layer.b[i] + ru;
  }
  for (std::size_t a = 0; a < d; ++a) {
    double v = -spec.u[a];
    for (std::size_t j = 0; j < d; ++j) v += spec.t(a, j) * (z[j] - spec.s[j] * x[j]);
    out.latent[a] = v;
  }
  return out;
}

NetworkTransform transform_network(const Architecture& arch, std::span<const double> w,
                                   const LayerTransformSpec& spec, const Matrix& x, const Matrix& z) {
  const FirstLayer layer = first_layer(arch, w);
  spec.validate(layer.wz);
  if (x.rows != z.rows || x.cols != arch.input_dim_x || z.cols != arch.input_dim_z)
    throw ShapeError("transform_network: data shape mismatch");
  NetworkTransform out{std::vector<double>(w.begin(), w.end()), Matrix(z.rows, z.cols)};
  FirstLayer new_layer = layer;
  for (std::size_t n = 0; n < x.rows; ++n) {
    LayerTransformResult r = layer_transform(layer, spec, x.row(n), z.row(n));
    std::copy(r.latent.begin(), r.latent.end(), out.z.row(n).begin());
    if (n == 0) new_layer = std::move(r.layer);
  }
  if (x.rows == 0) new_layer = layer_transform(layer, spec, std::vector<double>(arch.input_dim_x),
                                               std::vector<double>(arch.input_dim_z)).layer;
  set_first_layer(arch, new_layer, out.w);
  return out;
}

NetworkTransform y_encoding_transform(const Architecture& arch, const Matrix& x, const Matrix& y) {
  if (arch.hidden.size() != 1) throw PreconditionError("y_encoding_transform: needs exactly one hidden layer");
  if (arch.input_dim_z != arch.input_dim_x) throw PreconditionError("y_encoding_transform: latent width must equal D");
  if (arch.output_dim != 1 || y.cols != 1) throw PreconditionError("y_encoding_transform: single output only");
  if (!(arch.leaky_slope > 0.0)) throw DomainError("y_encoding_transform: activation is not invertible");
  if (x.rows != y.rows || x.cols != arch.input_dim_x) throw ShapeError("y_encoding_transform: data shape mismatch");
  const std::size_t d = arch.input_dim_x;
  const std::size_t h = arch.hidden[0];
  NetworkTransform out{std::vector<double>(arch.parameter_count(), 0.0), Matrix(x.rows, d)};
  const LayerSlice first = arch.layer(0);
  for (std::size_t i = 0; i < h; ++i)
    for (std::size_t j = 0; j < d; ++j) out.w[first.weight_offset + i * first.in + d + j] = 1.0;
  const LayerSlice last = arch.layer(1);
  for (std::size_t i = 0; i < h; ++i) out.w[last.weight_offset + i] = 1.0 / static_cast<double>(d * h);
  for (std::size_t n = 0; n < x.rows; ++n) {
    const double pre = leaky_relu_inverse(y(n, 0), arch.leaky_slope);
    for (std::size_t j = 0; j < d; ++j) out.z(n, j) = pre;
  }
  return out;
}

double posterior_gap(const Architecture& arch, std::span<const double> w, const Matrix& z,
                     std::span<const double> w_hat, const Matrix& z_hat, const PriorConfig& priors, const Matrix& x,
                     const Matrix& y) {
  return log_joint(arch, w_hat, z_hat, x, y, priors) - log_joint(arch, w, z, x, y, priors);
}

double c_lower_bound(double mu_x, double sigma2_x, double sigma2_z) {
  const double second = sigma2_x + mu_x * mu_x;
  if (!(second + sigma2_z > 0.0)) throw DomainError("c_lower_bound: denominator must be positive");
  return (second - sigma2_z) / (second + sigma2_z);
}

double t_upper_bound(double mu_xd, double sigma2_xd, double sigma2_z) {
  const double denom = mu_xd * mu_xd + sigma2_xd + sigma2_z;
  if (!(denom > 0.0)) throw DomainError("t_upper_bound: denominator must be positive");
  return std::sqrt(sigma2_z / denom);
}

double sampler_mean(const XSampler& s) {
  switch (s.kind) {
    case XSampler::Kind::Uniform: return 0.5 * (s.params[0] + s.params[1]);
    case XSampler::Kind::Normal: return s.params[0];
    case XSampler::Kind::Mixture: {
      double m = 0.0;
      for (std::size_t i = 0; i < s.params.size(); i += 2) m += s.params[i];
      return m / static_cast<double>(s.params.size() / 2);
    }
    case XSampler::Kind::ShiftedExp: break;
  }
  throw ConfigError("sampler moments are not available for shifted_exp");
}

double sampler_variance(const XSampler& s) {
  switch (s.kind) {
    case XSampler::Kind::Uniform: return square(s.params[1] - s.params[0]) / 12.0;
    case XSampler::Kind::Normal: return s.params[1];
    case XSampler::Kind::Mixture: {
      double second = 0.0;
      for (std::size_t i = 0; i < s.params.size(); i += 2) second += s.params[i + 1] + square(s.params[i]);
      second /= static_cast<double>(s.params.size() / 2);
      return second - square(sampler_mean(s));
    }
    case XSampler::Kind::ShiftedExp: break;
  }
  throw ConfigError("sampler moments are not available for shifted_exp");
}

std::vector<BiasRow> bias_probability(const BiasDemoConfig& cfg, std::span<const std::size_t> ns,
                                      std::size_t trials, const PriorConfig& priors, const XSampler& x_sampler,
                                      std::uint64_t seed) {
  if (trials == 0) throw PreconditionError("bias_probability: trials must be >= 1");
  priors.validate();
  Architecture arch = node_architecture();
  double t = 1.0;
  if (cfg.transform == BiasTransform::Layer) {
    arch.hidden = {cfg.hidden};
    t = cfg.t_fraction * t_upper_bound(sampler_mean(x_sampler), sampler_variance(x_sampler), priors.sigma2_z);
  }
  if (cfg.transform == BiasTransform::Node && !(cfg.c > 0.0)) throw DomainError("bias_probability: C must be positive");
  std::vector<BiasRow> rows;
  for (std::size_t ni = 0; ni < ns.size(); ++ni) {
    const std::size_t n = ns[ni];
    std::vector<double> gap(trials), latent_gap(trials);
    const auto count = static_cast<std::ptrdiff_t>(trials);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t tr = 0; tr < count; ++tr) {
      Rng rng(derive_seed(derive_seed(seed, ni), static_cast<std::uint64_t>(tr)));
      Matrix x(n, 1), z(n, 1);
      for (std::size_t i = 0; i < n; ++i) {
        x(i, 0) = x_sampler.draw(rng);
        z(i, 0) = rng.normal(0.0, std::sqrt(priors.sigma2_z));
      }
      std::vector<double> w;
      if (cfg.transform == BiasTransform::Layer) {
        w.resize(arch.parameter_count());
        for (auto& v : w) v = cfg.weight_sd * rng.normal();
      } else {
        w = node_weights(cfg.node_weight);
      }
      Matrix y = kernels::omp::mlp_predict(arch, w, x, z);
      for (auto& v : y.data) v += std::sqrt(priors.sigma2_eps) * rng.normal();
      NetworkTransform hat{w, z};
      if (cfg.transform == BiasTransform::Node) {
        const NodeTransformResult r0 = node_transform(cfg.node_weight, 0.0, 0.0, cfg.c);
        hat.w = node_weights(r0.weight);
        for (std::size_t i = 0; i < n; ++i) hat.z(i, 0) = node_transform(cfg.node_weight, x(i, 0), z(i, 0), cfg.c).latent;
      } else if (cfg.transform == BiasTransform::Layer) {
        const FirstLayer layer = first_layer(arch, w);
        const std::vector<double> tv(1, t);
        hat = transform_network(arch, w, scaled_identity_spec(layer.wz, tv), x, z);
      }
      gap[static_cast<std::size_t>(tr)] = posterior_gap(arch, w, z, hat.w, hat.z, priors, x, y);
      latent_gap[static_cast<std::size_t>(tr)] = log_prior_z(hat.z, priors.sigma2_z) - log_prior_z(z, priors.sigma2_z);
    }
    BiasRow row;
    row.n = n;
    std::size_t positive = 0;
    for (std::size_t i = 0; i < trials; ++i) {
      positive += gap[i] > 0.0;
      row.mean_gap += gap[i];
      row.mean_latent_gap += latent_gap[i];
    }
    const double tn = static_cast<double>(trials);
    row.positive_fraction = static_cast<double>(positive) / tn;
    row.mean_gap /= tn * static_cast<double>(n);
    row.mean_latent_gap /= tn * static_cast<double>(n);
    rows.push_back(row);
  }
  return rows;
}

}  // namespace bnnlv
