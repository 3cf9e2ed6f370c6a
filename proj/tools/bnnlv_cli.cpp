// Command-line front end: data generation, training, evaluation, the
// non-identifiability and MAP demonstrations, uncertainty decomposition and
// grid search. Every command writes manifest.json next to its outputs.
//
// Exit codes: 0 success, 2 bad input (config, parse, shape, precondition,
// domain), 3 divergence, 1 anything else. Errors go to stderr as one JSON line.

#include <CLI11.hpp>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "bnnlv/data.hpp"
#include "bnnlv/errors.hpp"
#include "bnnlv/io.hpp"
#include "bnnlv/metrics.hpp"
#include "bnnlv/ncai.hpp"
#include "bnnlv/nonident.hpp"
#include "bnnlv/train.hpp"

namespace fs = std::filesystem;
using namespace bnnlv;

namespace {

constexpr const char* kVersion = "0.1.0";

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

// Every key the commands understand; anything else is a typo.
const std::set<std::string>& known_keys() {
  static const std::set<std::string> keys = {
      "method", "data", "targets", "max_rows", "hidden", "latent_dim", "sigma2_w", "sigma2_z", "sigma2_eps",
      "ig_alpha", "ig_beta", "eb_w", "eb_z", "lambda1", "lambda2", "lambda3", "eps_t", "eps_x", "eps_y", "ridge",
      "exp_cap", "lr", "epochs", "restarts", "init", "n_mc", "batch_size", "warm_epochs", "tolerance", "window",
      "variance_phase_epochs", "map_epochs", "ll_samples", "interval_samples", "js_samples", "k", "grid_points",
      "transform", "ns", "trials", "c", "t_fraction", "width", "x_sampler", "outer", "inner", "grid",
      "distill_epochs", "map_restarts"};
  return keys;
}

// Flat key=value settings. A value written as [a, b, ...] is a list; only the
// grid command expands lists, every other command rejects them.
class Settings {
 public:
  void set(const std::string& assignment, const std::string& where) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos) throw ConfigError(where + ": expected key=value, got '" + assignment + "'");
    const std::string key = trim(assignment.substr(0, eq));
    if (!known_keys().count(key)) throw ConfigError(where + ": unknown key '" + key + "'");
    kv_[key] = trim(assignment.substr(eq + 1));
  }

  void load_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
      ++n;
      const auto hash = line.find('#');
      if (hash != std::string::npos) line.resize(hash);
      line = trim(line);
      if (line.empty()) continue;
      set(line, path + ":" + std::to_string(n));
    }
  }

  bool has(const std::string& key) const { return kv_.count(key) > 0; }
  const std::map<std::string, std::string>& values() const { return kv_; }

  static bool is_list(const std::string& v) { return v.size() >= 2 && v.front() == '[' && v.back() == ']'; }

  static std::vector<std::string> list_items(const std::string& v) {
    std::vector<std::string> out;
    std::stringstream ss(v.substr(1, v.size() - 2));
    std::string item;
    while (std::getline(ss, item, ',')) {
      item = trim(item);
      if (!item.empty()) out.push_back(item);
    }
    if (out.empty()) throw ConfigError("empty list '" + v + "'");
    return out;
  }

  std::string str(const std::string& key, const std::string& fallback) const {
    const auto it = kv_.find(key);
    if (it == kv_.end()) return fallback;
    if (is_list(it->second)) throw ConfigError("key '" + key + "' holds a list; only the grid command expands lists");
    return it->second;
  }

  double num(const std::string& key, double fallback) const {
    if (!has(key)) return fallback;
    const std::string v = str(key, "");
    try {
      std::size_t used = 0;
      const double d = std::stod(v, &used);
      if (used != v.size()) throw std::invalid_argument(v);
      return d;
    } catch (const std::logic_error&) {
      throw ConfigError("key '" + key + "' is not a number: '" + v + "'");
    }
  }

  std::size_t count(const std::string& key, std::size_t fallback) const {
    const double d = num(key, static_cast<double>(fallback));
    if (d < 0 || d != std::floor(d)) throw ConfigError("key '" + key + "' must be a non-negative integer");
    return static_cast<std::size_t>(d);
  }

  bool flag(const std::string& key, bool fallback) const {
    if (!has(key)) return fallback;
    const std::string v = str(key, "");
    if (v == "true" || v == "1" || v == "on") return true;
    if (v == "false" || v == "0" || v == "off") return false;
    throw ConfigError("key '" + key + "' is not a boolean: '" + v + "'");
  }

  // "50" or "50x20" for two hidden layers.
  std::vector<std::size_t> widths(const std::string& key, const std::vector<std::size_t>& fallback) const {
    if (!has(key)) return fallback;
    std::vector<std::size_t> out;
    std::stringstream ss(str(key, ""));
    std::string item;
    while (std::getline(ss, item, 'x')) {
      try {
        out.push_back(static_cast<std::size_t>(std::stoul(trim(item))));
      } catch (const std::logic_error&) {
        throw ConfigError("key '" + key + "' expects widths like 50x20");
      }
    }
    return out;
  }

 private:
  std::map<std::string, std::string> kv_;
};

struct Common {
  std::uint64_t seed = 0;
  std::string out = ".";
  int jobs = 0;
  std::string config;
  std::vector<std::string> sets;
  std::string data, method;
  std::size_t epochs = 0, restarts = 0;
};

Settings build_settings(const Common& c) {
  Settings s;
  if (!c.config.empty()) s.load_file(c.config);
  for (const auto& a : c.sets) s.set(a, "--set");
  if (!c.data.empty()) s.set("data=" + c.data, "--data");
  if (!c.method.empty()) s.set("method=" + c.method, "--method");
  if (c.epochs) s.set("epochs=" + std::to_string(c.epochs), "--epochs");
  if (c.restarts) s.set("restarts=" + std::to_string(c.restarts), "--restarts");
  return s;
}

void write_manifest(const Common& c, const std::string& command, const std::vector<std::string>& argv,
                    const Settings& s, const Json& extra = Json::object()) {
  fs::create_directories(c.out);
  Json j{{"version", kVersion}, {"command", command}, {"argv", argv}, {"seed", c.seed},
         {"jobs", c.jobs},      {"settings", s.values()}};
  for (auto it = extra.begin(); it != extra.end(); ++it) j[it.key()] = it.value();
  write_json_atomic(fs::path(c.out) / "manifest.json", j);
}

bool is_synthetic(const std::string& name) {
  const auto& names = synthetic_names();
  return std::find(names.begin(), names.end(), name) != names.end();
}

// Synthetic sets keep their own split and units; CSV data is split 0.7/0.2/0.1 and standardized.
DataSet load_data(const Settings& s, std::uint64_t seed) {
  const std::string name = s.str("data", "");
  if (name.empty()) throw ConfigError("no data set given (--data NAME or --data path.csv)");
  if (is_synthetic(name)) return gen_synthetic(name, seed);
  const DataSet raw = load_csv(name, s.count("targets", 1), s.count("max_rows", 0));
  return standardize(split(raw, derive_seed(seed, 101)));
}

Method method_of(const Settings& s) { return parse_method(s.str("method", "ncai")); }

Architecture arch_of(const Settings& s, const DataSet& d, Method m) {
  std::vector<std::size_t> hidden{50};
  if (is_synthetic(d.name)) hidden = synthetic_info(d.name).hidden;
  Architecture a{d.input_dim(), m == Method::BNN ? 0 : s.count("latent_dim", 1), s.widths("hidden", hidden),
                 d.output_dim(), 0.01};
  a.validate();
  return a;
}

// Synthetic sets default to the generator's own noise levels with the latent variance held fixed.
PriorConfig priors_of(const Settings& s, const DataSet& d) {
  PriorConfig p;
  if (d.sigma2_z > 0.0) {
    p.sigma2_z = d.sigma2_z;
    p.eb_enabled_z = false;
  }
  if (d.sigma2_eps > 0.0) p.sigma2_eps = d.sigma2_eps;
  p.sigma2_w = s.num("sigma2_w", p.sigma2_w);
  p.sigma2_z = s.num("sigma2_z", p.sigma2_z);
  p.sigma2_eps = s.num("sigma2_eps", p.sigma2_eps);
  p.ig_alpha = s.num("ig_alpha", p.ig_alpha);
  p.ig_beta = s.num("ig_beta", p.ig_beta);
  p.eb_enabled_w = s.flag("eb_w", p.eb_enabled_w);
  p.eb_enabled_z = s.flag("eb_z", p.eb_enabled_z);
  p.validate();
  return p;
}

NcaiConfig ncai_of(const Settings& s) {
  NcaiConfig c;
  c.lambda1 = s.num("lambda1", c.lambda1);
  c.lambda2 = s.num("lambda2", c.lambda2);
  c.lambda3 = s.num("lambda3", c.lambda3);
  c.eps_t = s.num("eps_t", c.eps_t);
  c.eps_x = s.num("eps_x", c.eps_x);
  c.eps_y = s.num("eps_y", c.eps_y);
  c.ridge = s.num("ridge", c.ridge);
  c.exp_cap = s.num("exp_cap", c.exp_cap);
  c.validate();
  return c;
}

TrainConfig train_of(const Settings& s, int jobs) {
  TrainConfig c;
  c.adam.learning_rate = s.num("lr", c.adam.learning_rate);
  c.warm.adam.learning_rate = c.adam.learning_rate;
  c.map.adam.learning_rate = c.adam.learning_rate;
  c.epochs = s.count("epochs", c.epochs);
  c.restarts = s.count("restarts", c.restarts);
  c.init = parse_init_scheme(s.str("init", to_string(c.init)));
  c.variance_phase_epochs = s.count("variance_phase_epochs", c.variance_phase_epochs);
  c.tolerance = s.num("tolerance", c.tolerance);
  c.window = s.count("window", c.window);
  c.n_mc = s.count("n_mc", c.n_mc);
  c.batch_size = s.count("batch_size", c.batch_size);
  c.warm.epochs = s.count("warm_epochs", c.warm.epochs);
  c.map.max_epochs = s.count("map_epochs", c.map.max_epochs);
  c.jobs = jobs;
  c.validate();
  return c;
}

MetricsConfig metrics_of(const Settings& s, std::uint64_t seed) {
  MetricsConfig c;
  c.ll_samples = s.count("ll_samples", c.ll_samples);
  c.interval_samples = s.count("interval_samples", c.interval_samples);
  c.js_samples = s.count("js_samples", c.js_samples);
  c.k = s.count("k", c.k);
  c.seed = seed;
  return c;
}

std::string num_str(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

void write_history(const fs::path& path, const TrainHistory& h) {
  std::ostringstream os;
  os << "epoch,objective,elbo,hz,offdiag,pc_x,pc_y,s_w,s_z\n";
  for (std::size_t e = 0; e < h.size(); ++e)
    os << e << ',' << num_str(h.objective[e]) << ',' << num_str(h.elbo[e]) << ',' << num_str(h.hz[e]) << ','
       << num_str(h.offdiag[e]) << ',' << num_str(h.pc_x[e]) << ',' << num_str(h.pc_y[e]) << ','
       << num_str(h.s_w[e]) << ',' << num_str(h.s_z[e]) << '\n';
  write_text_atomic(path, os.str());
}

// Predictive quantiles on an even grid over the training x range, in raw units. Single input and output only.
void write_predictive(const fs::path& path, const TrainResult& r, const DataSet& data, const Settings& s,
                      std::uint64_t seed) {
  const std::size_t points = s.count("grid_points", 200);
  const DataSet train = data.train_part();
  const auto [lo_it, hi_it] = std::minmax_element(train.x.data.begin(), train.x.data.end());
  Matrix grid(points, 1);
  for (std::size_t i = 0; i < points; ++i)
    grid(i, 0) = *lo_it + (*hi_it - *lo_it) * static_cast<double>(i) / static_cast<double>(std::max<std::size_t>(points - 1, 1));
  Matrix draws = predictive_samples(r.q.arch, r.q.weights(), r.priors, grid, s.count("interval_samples", 4000), seed);
  const bool raw = data.transform.active();
  const Matrix x_out = raw ? data.transform.invert_x(grid) : grid;
  if (raw) {
    Matrix flat(draws.data.size(), 1);
    flat.data = draws.data;
    flat = data.transform.invert_y(flat);
    draws.data = flat.data;
  }
  std::ostringstream os;
  os << "x,mean,q025,q50,q975\n";
  std::vector<double> col(draws.rows);
  for (std::size_t i = 0; i < points; ++i) {
    double mean = 0.0;
    for (std::size_t k = 0; k < draws.rows; ++k) mean += (col[k] = draws(k, i));
    mean /= static_cast<double>(draws.rows);
    std::sort(col.begin(), col.end());
    os << num_str(x_out(i, 0)) << ',' << num_str(mean) << ',' << num_str(percentile_sorted(col, 2.5)) << ','
       << num_str(percentile_sorted(col, 50.0)) << ',' << num_str(percentile_sorted(col, 97.5)) << '\n';
  }
  write_text_atomic(path, os.str());
}

// Training rows with their latent means; x and y in model units.
void write_latent(const fs::path& path, const TrainResult& r, const DataSet& data) {
  const DataSet train = data.train_part();
  std::ostringstream os;
  for (std::size_t d = 0; d < train.x.cols; ++d) os << 'x' << d << ',';
  for (std::size_t l = 0; l < train.y.cols; ++l) os << 'y' << l << ',';
  for (std::size_t k = 0; k < r.q.mu_z.cols; ++k) os << "mu_z" << k << (k + 1 < r.q.mu_z.cols ? "," : "\n");
  for (std::size_t n = 0; n < train.size(); ++n) {
    for (double v : train.x.row(n)) os << num_str(v) << ',';
    for (double v : train.y.row(n)) os << num_str(v) << ',';
    const auto mz = r.q.mu_z.row(n);
    for (std::size_t k = 0; k < mz.size(); ++k) os << num_str(mz[k]) << (k + 1 < mz.size() ? "," : "\n");
  }
  write_text_atomic(path, os.str());
}

struct RunSummary {
  RestartOutcome outcome;
  MetricsReport metrics;
  double seconds = 0.0;
};

RunSummary run_training(const Settings& s, const DataSet& data, std::uint64_t seed, int jobs) {
  const Method m = method_of(s);
  const Architecture arch = arch_of(s, data, m);
  const PriorConfig priors = priors_of(s, data);
  const NcaiConfig ncai = ncai_of(s);
  const TrainConfig cfg = train_of(s, jobs);
  const auto t0 = std::chrono::steady_clock::now();
  RunSummary out{train_restarts(data, arch, priors, ncai, cfg, m, seed, s.count("ll_samples", 2000)), {}, 0.0};
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const TrainResult& best = out.outcome.best_run();
  out.metrics = evaluate(best.q, best.priors, data.train_part(), data.test_part(), metrics_of(s, derive_seed(seed, 9)));
  return out;
}

Json outcome_json(const RunSummary& r) {
  Json fails = Json::array();
  for (const auto& f : r.outcome.failures) fails.push_back(f);
  const TrainResult& best = r.outcome.best_run();
  return Json{{"method", to_string(best.method)},
              {"best_restart", r.outcome.best},
              {"val_ll", r.outcome.val_ll},
              {"failures", fails},
              {"priors", to_json(best.priors)},
              {"metrics", to_json(r.metrics)},
              {"seconds", r.seconds}};
}

int cmd_gen_data(const Common& c, const std::vector<std::string>& argv) {
  const Settings s = build_settings(c);
  const DataSet d = load_data(s, c.seed);
  fs::create_directories(c.out);
  const fs::path csv = fs::path(c.out) / (d.name + ".csv");
  const fs::path tmp = csv.string() + ".tmp";
  write_csv(tmp.string(), d);
  fs::rename(tmp, csv);
  Json side{{"name", d.name},
            {"sigma2_eps", d.sigma2_eps},
            {"sigma2_z", d.sigma2_z},
            {"split", {{"train", d.split.train}, {"val", d.split.val}, {"test", d.split.test}}},
            {"transform", to_json(d.transform)}};
  if (d.truth) side["truth"] = to_json(*d.truth);
  write_json_atomic(fs::path(c.out) / (d.name + ".json"), side);
  write_manifest(c, "gen-data", argv, s, Json{{"rows", d.size()}});
  std::cout << csv.string() << '\n';
  return 0;
}

int cmd_train(const Common& c, const std::vector<std::string>& argv) {
  const Settings s = build_settings(c);
  const DataSet data = load_data(s, c.seed);
  write_manifest(c, "train", argv, s);
  const RunSummary r = run_training(s, data, c.seed, c.jobs);
  const TrainResult& best = r.outcome.best_run();
  const fs::path out(c.out);
  write_json_atomic(out / "model.json", model_to_json(best, data.transform));
  write_json_atomic(out / "result.json", outcome_json(r));
  write_history(out / "history.csv", best.history);
  if (data.input_dim() == 1 && data.output_dim() == 1) write_predictive(out / "predictive.csv", best, data, s, c.seed);
  if (best.q.latent_dim() > 0) write_latent(out / "latent.csv", best, data);
  std::cout << to_json(r.metrics).dump(2) << '\n';
  return 0;
}

SavedModel load_model(const std::string& path) {
  if (path.empty()) throw ConfigError("--model is required");
  return model_from_json(read_json(path));
}

int cmd_evaluate(const Common& c, const std::string& model_path, const std::vector<std::string>& argv) {
  const Settings s = build_settings(c);
  const SavedModel m = load_model(model_path);
  const DataSet data = load_data(s, c.seed);
  if (m.result.q.arch.input_dim_x != data.input_dim() || m.result.q.arch.output_dim != data.output_dim())
    throw ShapeError("evaluate: model and data dimensions differ");
  if (m.result.q.latent_dim() > 0 && m.result.q.num_points() != data.train_part().size())
    throw ShapeError("evaluate: model latents do not match the training split of this data");
  write_manifest(c, "evaluate", argv, s, Json{{"model", model_path}});
  const MetricsReport rep =
      evaluate(m.result.q, m.result.priors, data.train_part(), data.test_part(), metrics_of(s, derive_seed(c.seed, 9)));
  write_json_atomic(fs::path(c.out) / "metrics.json", to_json(rep));
  std::cout << to_json(rep).dump(2) << '\n';
  return 0;
}

BiasTransform parse_transform(const std::string& t) {
  if (t == "identity") return BiasTransform::Identity;
  if (t == "node") return BiasTransform::Node;
  if (t == "layer") return BiasTransform::Layer;
  throw ConfigError("unknown transform '" + t + "' (expected identity, node or layer)");
}

int cmd_nonident(const Common& c, const std::vector<std::string>& argv) {
  Settings s = build_settings(c);
  BiasDemoConfig cfg;
  cfg.transform = parse_transform(s.str("transform", "node"));
  cfg.c = s.num("c", cfg.c);
  cfg.t_fraction = s.num("t_fraction", cfg.t_fraction);
  cfg.hidden = s.count("width", cfg.hidden);
  std::vector<std::size_t> ns;
  {
    std::stringstream ss(s.str("ns", "10/100/1000/10000"));
    std::string item;
    while (std::getline(ss, item, '/')) ns.push_back(static_cast<std::size_t>(std::stoul(item)));
  }
  PriorConfig priors;
  priors.sigma2_z = s.num("sigma2_z", 0.01);
  priors.sigma2_w = s.num("sigma2_w", priors.sigma2_w);
  priors.sigma2_eps = s.num("sigma2_eps", priors.sigma2_eps);
  const XSampler sampler = parse_x_sampler(s.str("x_sampler", "normal:0.5:1"));
  write_manifest(c, "nonident-demo", argv, s);
  const auto rows = bias_probability(cfg, ns, s.count("trials", 1000), priors, sampler, c.seed);
  std::ostringstream os;
  os << "n,positive_fraction,mean_gap,mean_latent_gap\n";
  for (const BiasRow& r : rows)
    os << r.n << ',' << num_str(r.positive_fraction) << ',' << num_str(r.mean_gap) << ','
       << num_str(r.mean_latent_gap) << '\n';
  write_text_atomic(fs::path(c.out) / "bias.csv", os.str());
  std::cout << os.str();
  return 0;
}

int cmd_map_demo(const Common& c, const std::vector<std::string>& argv) {
  Settings s = build_settings(c);
  if (!s.has("data")) s.set("data=depeweg", "default");
  const DataSet raw = load_data(s, c.seed);
  if (!raw.truth || raw.truth->z_true.cols == 0) throw PreconditionError("map-demo: data set needs latent ground truth");
  const Architecture arch = arch_of(s, raw, Method::BNNLV_BBB);
  DistillConfig dcfg;
  dcfg.epochs = s.count("distill_epochs", dcfg.epochs);
  const DataSet data = distill_ground_truth(raw, arch, dcfg, derive_seed(c.seed, 1));
  const PriorConfig priors = priors_of(s, data);
  MapConfig mcfg;
  mcfg.max_epochs = s.count("map_epochs", mcfg.max_epochs);
  mcfg.adam.learning_rate = s.num("lr", mcfg.adam.learning_rate);
  write_manifest(c, "map-demo", argv, s);
  const DataSet train = data.train_part();
  const MapResult gt = map_estimate(train.x, train.y, priors, arch, MapInit::GroundTruth, &*train.truth, mcfg, c.seed);
  const double truth_lj = log_joint(arch, train.truth->w_true, train.truth->z_true, train.x, train.y, priors);
  Json runs = Json::array();
  const std::size_t n_random = s.count("map_restarts", 5);
  for (std::size_t i = 0; i < n_random; ++i) {
    const MapResult rr =
        map_estimate(train.x, train.y, priors, arch, MapInit::Random, nullptr, mcfg, derive_seed(c.seed, 10 + i));
    runs.push_back(Json{{"log_joint", rr.log_joint}, {"epochs", rr.epochs}, {"converged", rr.converged}});
  }
  const Json out{{"truth_log_joint", truth_lj},
                 {"gt_init", {{"log_joint", gt.log_joint}, {"epochs", gt.epochs}, {"converged", gt.converged}}},
                 {"gap_gt_map_vs_truth", gt.log_joint - truth_lj},
                 {"random_init", runs}};
  write_json_atomic(fs::path(c.out) / "map.json", out);
  std::cout << out.dump(2) << '\n';
  return 0;
}

// lo:hi:count
Matrix parse_grid(const std::string& spec) {
  std::stringstream ss(spec);
  std::string a, b, n;
  if (!std::getline(ss, a, ':') || !std::getline(ss, b, ':') || !std::getline(ss, n))
    throw ConfigError("grid must look like lo:hi:count, got '" + spec + "'");
  const double lo = std::stod(a), hi = std::stod(b);
  const std::size_t count = static_cast<std::size_t>(std::stoul(n));
  if (count < 2 || !(hi > lo)) throw ConfigError("grid needs hi > lo and count >= 2");
  Matrix g(count, 1);
  for (std::size_t i = 0; i < count; ++i) g(i, 0) = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(count - 1);
  return g;
}

int cmd_decompose(const Common& c, const std::string& model_path, const std::vector<std::string>& argv) {
  const Settings s = build_settings(c);
  const SavedModel m = load_model(model_path);
  const Matrix grid_raw = parse_grid(s.str("grid", "-4:4:41"));
  const Standardization& tr = m.transform;
  const Matrix grid = tr.active() ? tr.apply_x(grid_raw) : grid_raw;
  // Differential entropy shifts by log of the output scale when mapping back to raw units.
  const double shift = tr.active() ? std::log(tr.y_std[0]) : 0.0;
  write_manifest(c, "decompose", argv, s, Json{{"model", model_path}});
  const auto split = uncertainty_decomposition(m.result.q.arch, m.result.q.weights(), m.result.priors, grid,
                                               s.count("outer", 200), s.count("inner", 200), s.count("k", 5), c.seed);
  std::ostringstream os;
  os << "x,total,aleatoric,epistemic\n";
  for (std::size_t i = 0; i < split.size(); ++i)
    os << num_str(grid_raw(i, 0)) << ',' << num_str(split[i].total + shift) << ','
       << num_str(split[i].aleatoric + shift) << ',' << num_str(split[i].epistemic) << '\n';
  write_text_atomic(fs::path(c.out) / "decomposition.csv", os.str());
  std::cout << os.str();
  return 0;
}

// Cartesian product over list-valued keys; the winner has the highest best-restart validation LL.
int cmd_grid(const Common& c, const std::vector<std::string>& argv) {
  Settings base = build_settings(c);
  std::vector<std::pair<std::string, std::vector<std::string>>> axes;
  for (const auto& [k, v] : base.values())
    if (Settings::is_list(v)) axes.emplace_back(k, Settings::list_items(v));
  write_manifest(c, "grid", argv, base);
  std::size_t total = 1;
  for (const auto& a : axes) total *= a.second.size();
  Json rows = Json::array();
  double best_ll = -std::numeric_limits<double>::infinity();
  std::size_t best_idx = 0;
  for (std::size_t idx = 0; idx < total; ++idx) {
    Settings s = base;
    Json point = Json::object();
    std::size_t rem = idx;
    for (const auto& [k, items] : axes) {
      const std::string& v = items[rem % items.size()];
      rem /= items.size();
      s.set(k + "=" + v, "grid");
      point[k] = v;
    }
    const DataSet data = load_data(s, c.seed);
    Json row{{"point", point}};
    try {
      const RunSummary r = run_training(s, data, c.seed, c.jobs);
      const double ll = r.outcome.val_ll.at(r.outcome.best);
      row["val_ll"] = ll;
      row["result"] = outcome_json(r);
      if (std::isfinite(ll) && ll > best_ll) {
        best_ll = ll;
        best_idx = idx;
        write_json_atomic(fs::path(c.out) / "best_model.json", model_to_json(r.outcome.best_run(), data.transform));
      }
    } catch (const DivergenceError& e) {
      row["val_ll"] = nullptr;
      row["error"] = e.what();
    }
    rows.push_back(row);
    std::cerr << "grid " << idx + 1 << "/" << total << " " << point.dump() << '\n';
  }
  const Json out{{"runs", rows}, {"best", best_idx}, {"best_val_ll", std::isfinite(best_ll) ? Json(best_ll) : Json()}};
  write_json_atomic(fs::path(c.out) / "grid.json", out);
  std::cout << rows.at(best_idx).dump(2) << '\n';
  return 0;
}

int report(int code, const std::string& kind, const std::string& what) {
  std::cerr << Json{{"error", kind}, {"message", what}, {"exit_code", code}}.dump() << '\n';
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::string> args(argv, argv + argc);
  CLI::App app{"Bayesian neural networks with latent inputs and constrained variational inference"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);
  Common c;
  std::string model_path;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--seed", c.seed, "Base random seed");
    sub->add_option("--out", c.out, "Output directory");
    sub->add_option("--jobs", c.jobs, "Worker threads for restarts (0 = OpenMP default)");
    sub->add_option("--config", c.config, "key=value settings file");
    sub->add_option("--set", c.sets, "Override one setting, key=value (repeatable)");
    sub->add_option("--data", c.data, "Synthetic data set name or CSV path");
  };
  auto add_training = [&](CLI::App* sub) {
    sub->add_option("--method", c.method, "bnn, bnnlv_bbb or ncai");
    sub->add_option("--epochs", c.epochs, "Epochs per restart");
    sub->add_option("--restarts", c.restarts, "Independent restarts");
  };

  CLI::App* gen = app.add_subcommand("gen-data", "Write a synthetic data set as CSV plus a JSON sidecar");
  CLI::App* tr = app.add_subcommand("train", "Train with restarts and report metrics");
  CLI::App* ev = app.add_subcommand("evaluate", "Score a saved model on a data set");
  CLI::App* ni = app.add_subcommand("nonident-demo", "Monte Carlo probability that a transform is preferred");
  CLI::App* mp = app.add_subcommand("map-demo", "MAP from the ground truth against random initializations");
  CLI::App* dc = app.add_subcommand("decompose", "Entropy split of predictive uncertainty over an x grid");
  CLI::App* gr = app.add_subcommand("grid", "Grid search over list-valued settings");
  for (CLI::App* sub : {gen, tr, ev, ni, mp, dc, gr}) add_common(sub);
  for (CLI::App* sub : {tr, mp, gr}) add_training(sub);
  for (CLI::App* sub : {ev, dc}) sub->add_option("--model", model_path, "model.json written by train")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (*gen) return cmd_gen_data(c, args);
    if (*tr) return cmd_train(c, args);
    if (*ev) return cmd_evaluate(c, model_path, args);
    if (*ni) return cmd_nonident(c, args);
    if (*mp) return cmd_map_demo(c, args);
    if (*dc) return cmd_decompose(c, model_path, args);
    if (*gr) return cmd_grid(c, args);
  } catch (const ParseError& e) {
    return report(2, "parse", e.what());
  } catch (const ConfigError& e) {
    return report(2, "config", e.what());
  } catch (const ShapeError& e) {
    return report(2, "shape", e.what());
  } catch (const PreconditionError& e) {
    return report(2, "precondition", e.what());
  } catch (const DomainError& e) {
    return report(2, "domain", e.what());
  } catch (const DivergenceError& e) {
    return report(3, "divergence", e.what());
  } catch (const std::invalid_argument& e) {
    return report(2, "config", e.what());
  } catch (const std::exception& e) {
    return report(1, "internal", e.what());
  }
  return 1;
}
