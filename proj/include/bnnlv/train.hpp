#pragma once

// Optimization driver: Adam, empirical-Bayes prior-variance updates,
// initialization schemes, phase schedules and restart selection.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "bnnlv/data.hpp"
#include "bnnlv/errors.hpp"
#include "bnnlv/model.hpp"
#include "bnnlv/ncai.hpp"
#include "bnnlv/optim.hpp"
#include "bnnlv/vi.hpp"

namespace bnnlv {

enum class Method { BNN, BNNLV_BBB, NCAI };
// Default resolves to WarmStart for NCAI and Random otherwise.
enum class InitScheme { Default, Random, WarmStart, GroundTruth, Map };

std::string to_string(Method m);
std::string to_string(InitScheme s);
Method parse_method(const std::string& s);
InitScheme parse_init_scheme(const std::string& s);

struct TrainConfig {
  AdamConfig adam{};
  std::size_t epochs = 3000;
  std::size_t restarts = 5;
  InitScheme init = InitScheme::Default;
  // Upper bound for the variance-only phase that follows GroundTruth / Map inits; 0 disables it.
  std::size_t variance_phase_epochs = 0;
  double tolerance = 1e-6;
  std::size_t window = 200;
  std::size_t n_mc = 1;
  std::size_t batch_size = 0;  // 0 = full batch
  WarmStartConfig warm{};
  MapConfig map{};
  int jobs = 0;  // restart worker threads; 0 = OpenMP default

  void validate() const;
};

struct TrainHistory {
  std::vector<double> objective;
  std::vector<double> elbo;
  std::vector<double> hz;
  std::vector<double> offdiag;
  std::vector<double> pc_x;
  std::vector<double> pc_y;
  std::vector<double> s_w;
  std::vector<double> s_z;

  std::size_t size() const { return objective.size(); }
};

class TrainingDivergence : public DivergenceError {
 public:
  TrainingDivergence(const std::string& what, TrainHistory h) : DivergenceError(what), history_(std::move(h)) {}
  const TrainHistory& history() const { return history_; }

 private:
  TrainHistory history_;
};

struct TrainResult {
  Method method = Method::NCAI;
  MeanFieldPosterior q;
  PriorConfig priors;  // with the final empirical-Bayes variances
  TrainHistory history;
};

// Closed-form minimizers of KL(q || p(. | s) p(s)); variances are the q variances.
double eb_update_sz(const Matrix& mu_z, const Matrix& var_z, double alpha, double beta);
double eb_update_sw(std::span<const double> mu_w, std::span<const double> var_w, double alpha, double beta);
// Hyper-prior part of the objective for one variance: (alpha - 1) log s + beta / s.
double eb_hyper_term(double s, double alpha, double beta);

// Objective minimized by train: the method's loss plus the hyper-prior terms of enabled EB variances.
double training_objective(const MeanFieldPosterior& q, const Matrix& x, const Matrix& y, const PriorConfig& priors,
                          const NcaiConfig& ncai, Method method, const ElboOptions& opts,
                          MeanFieldPosterior* grad = nullptr, NcaiTerms* terms = nullptr);

// Uses the training split of data (all rows when no split is set).
TrainResult train(const DataSet& data, const Architecture& arch, const PriorConfig& priors, const NcaiConfig& ncai,
                  const TrainConfig& cfg, Method method, std::uint64_t seed);

// Index of the candidate with the highest validation avg_marginal_ll. Non-finite scores never win
// unless every score is non-finite.
std::size_t restart_select(const std::vector<TrainResult>& candidates, const Matrix& x_val, const Matrix& y_val,
                           std::size_t samples, std::uint64_t seed, std::vector<double>* scores = nullptr);

struct RestartOutcome {
  std::vector<std::optional<TrainResult>> runs;  // empty entries diverged
  std::vector<std::string> failures;
  std::vector<double> val_ll;
  std::size_t best = 0;

  const TrainResult& best_run() const { return *runs.at(best); }
};

// cfg.restarts independent runs with derived seeds, in parallel; selection on the validation split.
RestartOutcome train_restarts(const DataSet& data, const Architecture& arch, const PriorConfig& priors,
                              const NcaiConfig& ncai, const TrainConfig& cfg, Method method, std::uint64_t seed,
                              std::size_t val_samples = 2000);

struct DistillConfig {
  std::size_t epochs = 3000;
  std::size_t fresh_points = 4000;
  AdamConfig adam{};
};

// Fits a network to the closed-form generator on (x, z) draws, stores it as w_true and
// regenerates every y from it with fresh output noise.
DataSet distill_ground_truth(const DataSet& data, const Architecture& arch, const DistillConfig& cfg,
                             std::uint64_t seed);

}  // namespace bnnlv
