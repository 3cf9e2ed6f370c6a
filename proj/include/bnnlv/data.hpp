#pragma once

// Data sets: synthetic generators with known noise structure, CSV ingestion,
// train/validation/test splitting and train-statistics standardization.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "bnnlv/diffcore.hpp"
#include "bnnlv/matrix.hpp"
#include "bnnlv/rng.hpp"

namespace bnnlv {

// Input distribution, written as a spec string:
//   uniform:lo:hi   normal:mean:var   mixture:m1/v1,m2/v2,...   shifted_exp:rate:shift:lo:hi
// Mixture components are equally weighted; shifted_exp draws Exp(rate) - shift, clipped to [lo, hi].
struct XSampler {
  enum class Kind { Uniform, Normal, Mixture, ShiftedExp };
  Kind kind = Kind::Uniform;
  std::vector<double> params;  // uniform {lo,hi}; normal {mean,var}; mixture {m,v,...}; shifted_exp {rate,shift,lo,hi}

  double draw(Rng& rng) const;
};

XSampler parse_x_sampler(const std::string& spec);

struct SplitIndices {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
  std::vector<std::size_t> test;

  bool empty() const { return train.empty() && val.empty() && test.empty(); }
};

// Per-column affine map: standardized = (raw - mean) / std.
struct Standardization {
  std::vector<double> x_mean, x_std;
  std::vector<double> y_mean, y_std;

  bool active() const { return !x_mean.empty(); }
  Matrix apply_x(const Matrix& x) const;
  Matrix apply_y(const Matrix& y) const;
  Matrix invert_x(const Matrix& x) const;
  Matrix invert_y(const Matrix& y) const;
};

struct GroundTruth {
  std::string function;          // generator name, or "network" when w_true is set
  Matrix z_true;                 // N x K, zero columns when the generator has no latent
  std::vector<double> w_true;    // filled only by distillation
  std::optional<Architecture> w_arch;
};

struct DataSet {
  std::string name;
  Matrix x;  // N x D
  Matrix y;  // N x L
  std::optional<GroundTruth> truth;
  SplitIndices split;
  Standardization transform;
  // Noise settings the generator used; zero when unknown (CSV data).
  double sigma2_eps = 0.0;
  double sigma2_z = 0.0;

  std::size_t size() const { return x.rows; }
  std::size_t input_dim() const { return x.cols; }
  std::size_t output_dim() const { return y.cols; }
  // Rows of the named part; an empty split means every row is training data.
  DataSet part(const std::vector<std::size_t>& rows) const;
  DataSet train_part() const;
  DataSet val_part() const;
  DataSet test_part() const;
};

struct SyntheticInfo {
  std::string name;
  std::size_t n_train, n_val, n_test;
  double sigma2_eps;  // homoscedastic noise variance; 0 for the x-dependent generators
  double sigma2_z;    // 0 when the generator has no latent input
  std::string x_sampler;
  std::vector<std::size_t> hidden;  // reference architecture
};

const std::vector<std::string>& synthetic_names();
SyntheticInfo synthetic_info(const std::string& name);

// Noise-free response of a named generator. `z` is ignored by generators without a latent.
double synthetic_function(const std::string& name, double x, double z);
// Output-noise variance at x (constant for the latent-noise generators).
double synthetic_noise_variance(const std::string& name, double x);

DataSet gen_synthetic(const std::string& name, std::uint64_t seed);

// Final `target_cols` columns are targets.
DataSet load_csv(const std::string& path, std::size_t target_cols = 1, std::size_t max_rows = 0);
void write_csv(const std::string& path, const DataSet& data);

DataSet split(const DataSet& data, double train_ratio, double val_ratio, double test_ratio, std::uint64_t seed);
inline DataSet split(const DataSet& data, std::uint64_t seed) { return split(data, 0.7, 0.2, 0.1, seed); }

// Z-scores every x and y column with training-split statistics.
DataSet standardize(const DataSet& data);

}  // namespace bnnlv
