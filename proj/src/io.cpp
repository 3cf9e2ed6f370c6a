#include "bnnlv/io.hpp"

#include <fstream>
#include <sstream>
#include <utility>

#include "bnnlv/errors.hpp"

namespace bnnlv {

namespace {

template <class T>
T field(const Json& j, const char* key) {
  if (!j.contains(key)) throw ParseError(std::string("json: missing field '") + key + "'", 0);
  return j.at(key).get<T>();
}

template <class T>
void maybe(const Json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

Json to_json(const Matrix& m) { return Json{{"rows", m.rows}, {"cols", m.cols}, {"data", m.data}}; }

Matrix matrix_from_json(const Json& j) {
  Matrix m(field<std::size_t>(j, "rows"), field<std::size_t>(j, "cols"));
  auto data = field<std::vector<double>>(j, "data");
  if (data.size() != m.data.size()) throw ShapeError("json: matrix data length does not match rows * cols");
  m.data = std::move(data);
  return m;
}

Json to_json(const Architecture& a) {
  return Json{{"input_dim_x", a.input_dim_x},
              {"input_dim_z", a.input_dim_z},
              {"hidden", a.hidden},
              {"output_dim", a.output_dim},
              {"leaky_slope", a.leaky_slope}};
}

Architecture architecture_from_json(const Json& j) {
  Architecture a;
  a.input_dim_x = field<std::size_t>(j, "input_dim_x");
  a.input_dim_z = field<std::size_t>(j, "input_dim_z");
  a.hidden = field<std::vector<std::size_t>>(j, "hidden");
  a.output_dim = field<std::size_t>(j, "output_dim");
  maybe(j, "leaky_slope", a.leaky_slope);
  a.validate();
  return a;
}

Json to_json(const PriorConfig& p) {
  return Json{{"sigma2_w", p.sigma2_w},         {"sigma2_z", p.sigma2_z},         {"sigma2_eps", p.sigma2_eps},
              {"ig_alpha", p.ig_alpha},         {"ig_beta", p.ig_beta},           {"eb_enabled_w", p.eb_enabled_w},
              {"eb_enabled_z", p.eb_enabled_z}};
}

PriorConfig priors_from_json(const Json& j) {
  PriorConfig p;
  maybe(j, "sigma2_w", p.sigma2_w);
  maybe(j, "sigma2_z", p.sigma2_z);
  maybe(j, "sigma2_eps", p.sigma2_eps);
  maybe(j, "ig_alpha", p.ig_alpha);
  maybe(j, "ig_beta", p.ig_beta);
  maybe(j, "eb_enabled_w", p.eb_enabled_w);
  maybe(j, "eb_enabled_z", p.eb_enabled_z);
  p.validate();
  return p;
}

Json to_json(const NcaiConfig& c) {
  return Json{{"lambda1", c.lambda1}, {"lambda2", c.lambda2}, {"lambda3", c.lambda3},
              {"eps_t", c.eps_t},     {"eps_x", c.eps_x},     {"eps_y", c.eps_y},
              {"ridge", c.ridge},     {"exp_cap", c.exp_cap}};
}

NcaiConfig ncai_from_json(const Json& j) {
  NcaiConfig c;
  maybe(j, "lambda1", c.lambda1);
  maybe(j, "lambda2", c.lambda2);
  maybe(j, "lambda3", c.lambda3);
  maybe(j, "eps_t", c.eps_t);
  maybe(j, "eps_x", c.eps_x);
  maybe(j, "eps_y", c.eps_y);
  maybe(j, "ridge", c.ridge);
  maybe(j, "exp_cap", c.exp_cap);
  c.validate();
  return c;
}

Json to_json(const MeanFieldPosterior& q) {
  return Json{{"arch", to_json(q.arch)},
              {"mu_w", q.mu_w},
              {"rho_w", q.rho_w},
              {"mu_z", to_json(q.mu_z)},
              {"rho_z", to_json(q.rho_z)}};
}

MeanFieldPosterior posterior_from_json(const Json& j) {
  MeanFieldPosterior q;
  q.arch = architecture_from_json(field<Json>(j, "arch"));
  q.mu_w = field<std::vector<double>>(j, "mu_w");
  q.rho_w = field<std::vector<double>>(j, "rho_w");
  q.mu_z = matrix_from_json(field<Json>(j, "mu_z"));
  q.rho_z = matrix_from_json(field<Json>(j, "rho_z"));
  q.validate();
  return q;
}

Json to_json(const Standardization& s) {
  return Json{{"x_mean", s.x_mean}, {"x_std", s.x_std}, {"y_mean", s.y_mean}, {"y_std", s.y_std}};
}

Standardization standardization_from_json(const Json& j) {
  Standardization s;
  maybe(j, "x_mean", s.x_mean);
  maybe(j, "x_std", s.x_std);
  maybe(j, "y_mean", s.y_mean);
  maybe(j, "y_std", s.y_std);
  if (s.x_mean.size() != s.x_std.size() || s.y_mean.size() != s.y_std.size())
    throw ShapeError("json: standardization mean and std lengths differ");
  return s;
}

Json to_json(const GroundTruth& g) {
  Json j{{"function", g.function}, {"z_true", to_json(g.z_true)}};
  if (!g.w_true.empty()) j["w_true"] = g.w_true;
  if (g.w_arch) j["w_arch"] = to_json(*g.w_arch);
  return j;
}

Json to_json(const TrainHistory& h) {
  return Json{{"objective", h.objective}, {"elbo", h.elbo}, {"hz", h.hz}, {"offdiag", h.offdiag},
              {"pc_x", h.pc_x},           {"pc_y", h.pc_y}, {"s_w", h.s_w}, {"s_z", h.s_z}};
}

Json to_json(const MetricsReport& r) {
  const std::pair<const char*, const std::optional<double>*> fields[] = {
      {"test_avg_ll", &r.test_avg_ll},
      {"train_avg_ll", &r.train_avg_ll},
      {"test_avg_ll_logmeanexp", &r.test_avg_ll_logmeanexp},
      {"train_avg_ll_logmeanexp", &r.train_avg_ll_logmeanexp},
      {"rmse_test", &r.rmse_test},
      {"rmse_train", &r.rmse_train},
      {"rmse_test_unnorm", &r.rmse_test_unnorm},
      {"rmse_train_unnorm", &r.rmse_train_unnorm},
      {"recon_mse", &r.recon_mse},
      {"picp95", &r.picp95},
      {"mpiw95", &r.mpiw95},
      {"mpiw95_unnorm", &r.mpiw95_unnorm},
      {"mi_x_muz", &r.mi_x_muz},
      {"mi_x_z", &r.mi_x_z},
      {"hz_of_means", &r.hz_of_means},
      {"ks_stat", &r.ks_stat},
      {"js_divergence", &r.js_divergence},
      {"pc_x_muz", &r.pc_x_muz},
      {"pc_y_muz", &r.pc_y_muz},
      {"s_w_star", &r.s_w_star},
      {"s_z_star", &r.s_z_star},
  };
  Json j = Json::object();
  for (const auto& [name, value] : fields) j[name] = *value ? Json(**value) : Json(nullptr);
  return j;
}

Json model_to_json(const TrainResult& r, const Standardization& transform) {
  return Json{{"method", to_string(r.method)},
              {"priors", to_json(r.priors)},
              {"posterior", to_json(r.q)},
              {"standardization", to_json(transform)}};
}

SavedModel model_from_json(const Json& j) {
  SavedModel m;
  m.result.method = parse_method(field<std::string>(j, "method"));
  m.result.priors = priors_from_json(field<Json>(j, "priors"));
  m.result.q = posterior_from_json(field<Json>(j, "posterior"));
  m.transform = standardization_from_json(field<Json>(j, "standardization"));
  return m;
}

void write_text_atomic(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ConfigError("cannot open " + tmp.string() + " for writing");
    out << text;
    out.flush();
    if (!out) throw ConfigError("write to " + tmp.string() + " failed");
  }
  std::filesystem::rename(tmp, path);
}

void write_json_atomic(const std::filesystem::path& path, const Json& j) { write_text_atomic(path, j.dump(2) + "\n"); }

Json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return Json::parse(ss.str());
  } catch (const Json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what(), 0);
  }
}

}  // namespace bnnlv
