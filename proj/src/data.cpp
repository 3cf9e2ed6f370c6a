#include "bnnlv/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <numeric>
#include <sstream>

#include "bnnlv/errors.hpp"

namespace bnnlv {

namespace {

std::vector<std::string> split_on(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) out.push_back(cur);
  if (!s.empty() && s.back() == sep) out.emplace_back();
  return out;
}

bool parse_double(const std::string& raw, double& out) {
  std::size_t b = raw.find_first_not_of(" \t\r");
  std::size_t e = raw.find_last_not_of(" \t\r");
  if (b == std::string::npos) return false;
  const std::string s = raw.substr(b, e - b + 1);
  char* end = nullptr;
  out = std::strtod(s.c_str(), &end);
  return end == s.c_str() + s.size();
}

double sampler_number(const std::string& s, const std::string& spec) {
  double v = 0.0;
  if (!parse_double(s, v)) throw ConfigError("x sampler: bad number '" + s + "' in '" + spec + "'");
  return v;
}

struct GeneratorRow {
  const char* name;
  std::size_t n_train, n_val, n_test;
  double sigma2_eps, sigma2_z;
  const char* sampler;
  std::vector<std::size_t> hidden;
};

const std::vector<GeneratorRow>& generator_table() {
  static const std::vector<GeneratorRow> table = {
      {"heavy_tail", 300, 300, 300, 0.1, 0.01, "uniform:-4:4", {50}},
      {"depeweg", 750, 250, 250, 0.1, 1.0, "mixture:-4/0.16,0/0.81,4/0.16", {50}},
      {"bimodal", 750, 250, 250, 1.0, 0.1, "shifted_exp:2:0.5:-0.5:2", {50, 50}},
      {"goldberg", 200, 200, 200, 0.0, 0.0, "uniform:0:1", {20}},
      {"yuan", 200, 200, 200, 0.0, 0.0, "uniform:0:1", {20}},
      {"williams", 200, 200, 200, 0.0, 0.0, "uniform:0:1", {20, 20}},
  };
  return table;
}

const GeneratorRow& generator(const std::string& name) {
  for (const auto& g : generator_table())
    if (name == g.name) return g;
  throw ConfigError("unknown synthetic data set '" + name + "'");
}

std::vector<std::size_t> iota_range(std::size_t begin, std::size_t count) {
  std::vector<std::size_t> v(count);
  std::iota(v.begin(), v.end(), begin);
  return v;
}

void column_stats(const Matrix& m, const std::vector<std::size_t>& rows, std::vector<double>& mean,
                  std::vector<double>& sd, const char* label) {
  mean.assign(m.cols, 0.0);
  sd.assign(m.cols, 0.0);
  const double n = static_cast<double>(rows.size());
  for (std::size_t j = 0; j < m.cols; ++j) {
    double acc = 0.0;
    for (std::size_t r : rows) acc += m(r, j);
    mean[j] = acc / n;
    double ss = 0.0;
    for (std::size_t r : rows) ss += square(m(r, j) - mean[j]);
    sd[j] = std::sqrt(ss / n);
    if (!(sd[j] > 0.0))
      throw DomainError(std::string("standardize: ") + label + " column " + std::to_string(j) +
                        " has zero variance on the training split");
  }
}

Matrix affine(const Matrix& m, const std::vector<double>& mean, const std::vector<double>& sd, bool forward) {
  if (m.cols != mean.size()) throw ShapeError("standardization: column count mismatch");
  Matrix out = m;
  for (std::size_t i = 0; i < m.rows; ++i)
    for (std::size_t j = 0; j < m.cols; ++j)
      out(i, j) = forward ? (m(i, j) - mean[j]) / sd[j] : m(i, j) * sd[j] + mean[j];
  return out;
}

}  // namespace

double XSampler::draw(Rng& rng) const {
  switch (kind) {
    case Kind::Uniform:
      return rng.uniform(params[0], params[1]);
    case Kind::Normal:
      return rng.normal(params[0], std::sqrt(params[1]));
    case Kind::Mixture: {
      const std::size_t c = rng.index(params.size() / 2);
      return rng.normal(params[2 * c], std::sqrt(params[2 * c + 1]));
    }
    case Kind::ShiftedExp:
      return std::clamp(rng.exponential(params[0]) - params[1], params[2], params[3]);
  }
  return 0.0;
}

XSampler parse_x_sampler(const std::string& spec) {
  const auto parts = split_on(spec, ':');
  if (parts.empty()) throw ConfigError("x sampler: empty spec");
  XSampler s;
  const std::string& kind = parts[0];
  if (kind == "uniform" || kind == "normal") {
    if (parts.size() != 3) throw ConfigError("x sampler: '" + spec + "' needs two parameters");
    s.kind = kind == "uniform" ? XSampler::Kind::Uniform : XSampler::Kind::Normal;
    s.params = {sampler_number(parts[1], spec), sampler_number(parts[2], spec)};
    if (s.kind == XSampler::Kind::Uniform && !(s.params[0] < s.params[1]))
      throw ConfigError("x sampler: uniform bounds must satisfy lo < hi");
    if (s.kind == XSampler::Kind::Normal && !(s.params[1] > 0.0))
      throw ConfigError("x sampler: normal variance must be positive");
  } else if (kind == "mixture") {
    if (parts.size() != 2) throw ConfigError("x sampler: '" + spec + "' needs a component list");
    s.kind = XSampler::Kind::Mixture;
    for (const auto& comp : split_on(parts[1], ',')) {
      const auto mv = split_on(comp, '/');
      if (mv.size() != 2) throw ConfigError("x sampler: mixture component '" + comp + "' is not mean/var");
      const double var = sampler_number(mv[1], spec);
      if (!(var > 0.0)) throw ConfigError("x sampler: mixture variance must be positive");
      s.params.push_back(sampler_number(mv[0], spec));
      s.params.push_back(var);
    }
    if (s.params.empty()) throw ConfigError("x sampler: mixture has no components");
  } else if (kind == "shifted_exp") {
    if (parts.size() != 5) throw ConfigError("x sampler: '" + spec + "' needs rate:shift:lo:hi");
    s.kind = XSampler::Kind::ShiftedExp;
    for (std::size_t i = 1; i < 5; ++i) s.params.push_back(sampler_number(parts[i], spec));
    if (!(s.params[0] > 0.0) || !(s.params[2] < s.params[3]))
      throw ConfigError("x sampler: shifted_exp needs rate > 0 and lo < hi");
  } else {
    throw ConfigError("x sampler: unknown kind '" + kind + "'");
  }
  return s;
}

Matrix Standardization::apply_x(const Matrix& x) const { return active() ? affine(x, x_mean, x_std, true) : x; }
Matrix Standardization::apply_y(const Matrix& y) const { return active() ? affine(y, y_mean, y_std, true) : y; }
Matrix Standardization::invert_x(const Matrix& x) const { return active() ? affine(x, x_mean, x_std, false) : x; }
Matrix Standardization::invert_y(const Matrix& y) const { return active() ? affine(y, y_mean, y_std, false) : y; }

DataSet DataSet::part(const std::vector<std::size_t>& rows) const {
  DataSet d;
  d.name = name;
  d.x = x.select_rows(rows);
  d.y = y.select_rows(rows);
  if (truth) {
    d.truth = truth;
    d.truth->z_true = truth->z_true.rows == x.rows ? truth->z_true.select_rows(rows) : Matrix(rows.size(), 0);
  }
  d.transform = transform;
  d.sigma2_eps = sigma2_eps;
  d.sigma2_z = sigma2_z;
  return d;
}

DataSet DataSet::train_part() const { return split.empty() ? *this : part(split.train); }
DataSet DataSet::val_part() const { return part(split.val); }
DataSet DataSet::test_part() const { return part(split.test); }

const std::vector<std::string>& synthetic_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> v;
    for (const auto& g : generator_table()) v.emplace_back(g.name);
    return v;
  }();
  return names;
}

SyntheticInfo synthetic_info(const std::string& name) {
  const GeneratorRow& g = generator(name);
  return {g.name, g.n_train, g.n_val, g.n_test, g.sigma2_eps, g.sigma2_z, g.sampler, g.hidden};
}

double synthetic_function(const std::string& name, double x, double z) {
  constexpr double pi = std::numbers::pi;
  if (name == "heavy_tail") return 6.0 * std::tanh(0.1 * x * x * x * std::pow(z + 1.0, 6) - 10.0 * x * z * z + z);
  if (name == "depeweg") return 7.0 * std::sin(x) + 3.0 * std::abs(std::cos(x / 2.0)) * z;
  if (name == "bimodal") return z > 0.0 ? 10.0 * std::sin(x) : 10.0 * std::cos(x);
  if (name == "goldberg") return 2.0 * std::sin(2.0 * pi * x);
  if (name == "yuan") return 2.0 * std::exp(-30.0 * square(x - 0.25) + std::sin(pi * x * x)) - 2.0;
  if (name == "williams") return std::sin(2.5 * x) * std::sin(1.5 * x);
  throw ConfigError("unknown synthetic data set '" + name + "'");
}

double synthetic_noise_variance(const std::string& name, double x) {
  constexpr double pi = std::numbers::pi;
  if (name == "goldberg") return x + 0.5;
  if (name == "yuan") return std::exp(std::sin(2.0 * pi * x));
  if (name == "williams") return 0.01 + 0.25 * square(1.0 - std::sin(2.5 * x));
  return generator(name).sigma2_eps;
}

DataSet gen_synthetic(const std::string& name, std::uint64_t seed) {
  const GeneratorRow& g = generator(name);
  const XSampler sampler = parse_x_sampler(g.sampler);
  const std::size_t n = g.n_train + g.n_val + g.n_test;
  const bool latent = g.sigma2_z > 0.0;
  Rng rng(seed);
  DataSet d;
  d.name = name;
  d.x = Matrix(n, 1);
  d.y = Matrix(n, 1);
  GroundTruth truth;
  truth.function = name;
  truth.z_true = Matrix(n, latent ? 1 : 0);
  for (std::size_t i = 0; i < n; ++i) {
    const double x = sampler.draw(rng);
    const double z = latent ? rng.normal(0.0, std::sqrt(g.sigma2_z)) : 0.0;
    const double eps = rng.normal(0.0, std::sqrt(synthetic_noise_variance(name, x)));
    d.x(i, 0) = x;
    if (latent) truth.z_true(i, 0) = z;
    d.y(i, 0) = synthetic_function(name, x, z) + eps;
  }
  d.truth = std::move(truth);
  d.split.train = iota_range(0, g.n_train);
  d.split.val = iota_range(g.n_train, g.n_val);
  d.split.test = iota_range(g.n_train + g.n_val, g.n_test);
  d.sigma2_eps = g.sigma2_eps;
  d.sigma2_z = g.sigma2_z;
  return d;
}

DataSet load_csv(const std::string& path, std::size_t target_cols, std::size_t max_rows) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open '" + path + "'");
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line)) throw ParseError("missing header row in '" + path + "'", 1);
  ++line_no;
  const std::size_t cols = split_on(line, ',').size();
  if (target_cols == 0 || cols <= target_cols)
    throw ConfigError("load_csv: need at least one feature column besides " + std::to_string(target_cols) +
                      " target column(s)");
  std::vector<double> values;
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto cells = split_on(line, ',');
    if (cells.size() != cols)
      throw ParseError("expected " + std::to_string(cols) + " cells, found " + std::to_string(cells.size()), line_no);
    for (const auto& c : cells) {
      double v = 0.0;
      if (!parse_double(c, v)) throw ParseError("non-numeric cell '" + c + "'", line_no);
      values.push_back(v);
    }
    if (++rows == max_rows) break;
  }
  if (rows == 0) throw ParseError("no data rows in '" + path + "'", line_no);
  DataSet d;
  d.name = std::filesystem::path(path).stem().string();
  const std::size_t dx = cols - target_cols;
  d.x = Matrix(rows, dx);
  d.y = Matrix(rows, target_cols);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) {
      const double v = values[i * cols + j];
      if (j < dx)
        d.x(i, j) = v;
      else
        d.y(i, j - dx) = v;
    }
  return d;
}

void write_csv(const std::string& path, const DataSet& data) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write '" + path + "'");
  for (std::size_t j = 0; j < data.x.cols; ++j) out << "x" << j << ",";
  for (std::size_t j = 0; j < data.y.cols; ++j) out << "y" << j << (j + 1 < data.y.cols ? "," : "\n");
  char buf[32];
  for (std::size_t i = 0; i < data.size(); ++i) {
    for (std::size_t j = 0; j < data.x.cols; ++j) {
      std::snprintf(buf, sizeof buf, "%.17g", data.x(i, j));
      out << buf << ",";
    }
    for (std::size_t j = 0; j < data.y.cols; ++j) {
      std::snprintf(buf, sizeof buf, "%.17g", data.y(i, j));
      out << buf << (j + 1 < data.y.cols ? "," : "\n");
    }
  }
}

DataSet split(const DataSet& data, double train_ratio, double val_ratio, double test_ratio, std::uint64_t seed) {
  if (train_ratio < 0 || val_ratio < 0 || test_ratio < 0 || std::abs(train_ratio + val_ratio + test_ratio - 1.0) > 1e-9)
    throw ConfigError("split: ratios must be non-negative and sum to 1");
  const std::size_t n = data.size();
  const auto n_train = static_cast<std::size_t>(std::llround(train_ratio * static_cast<double>(n)));
  const auto n_val = static_cast<std::size_t>(std::llround(val_ratio * static_cast<double>(n)));
  if (n_train + n_val > n) throw PreconditionError("split: ratios overflow the row count");
  const std::size_t n_test = n - n_train - n_val;
  if ((train_ratio > 0 && n_train == 0) || (val_ratio > 0 && n_val == 0) || (test_ratio > 0 && n_test == 0))
    throw PreconditionError("split: a requested part is empty at N=" + std::to_string(n));
  std::vector<std::size_t> perm = iota_range(0, n);
  Rng rng(seed);
  std::shuffle(perm.begin(), perm.end(), rng.engine());
  DataSet out = data;
  out.split.train.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_train));
  out.split.val.assign(perm.begin() + static_cast<std::ptrdiff_t>(n_train),
                       perm.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
  out.split.test.assign(perm.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), perm.end());
  return out;
}

DataSet standardize(const DataSet& data) {
  const std::vector<std::size_t> rows = data.split.empty() ? iota_range(0, data.size()) : data.split.train;
  if (rows.empty()) throw PreconditionError("standardize: empty training split");
  DataSet out = data;
  if (data.transform.active()) {
    out.x = data.transform.invert_x(data.x);
    out.y = data.transform.invert_y(data.y);
  }
  Standardization t;
  column_stats(out.x, rows, t.x_mean, t.x_std, "x");
  column_stats(out.y, rows, t.y_mean, t.y_std, "y");
  out.x = t.apply_x(out.x);
  out.y = t.apply_y(out.y);
  out.transform = std::move(t);
  return out;
}

}  // namespace bnnlv
