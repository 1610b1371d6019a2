#pragma once

#include <iosfwd>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "rtm/cohort.hpp"

namespace rtm {

// Fitted parameters: per-question discrimination alpha (>0, 1/log-seconds)
// and time intensity beta (log-seconds), per-user slowness zeta (log-seconds,
// mean fixed to 0).
struct ModelParams {
  std::map<std::string, double> alpha;
  std::map<std::string, double> beta;
  std::map<std::string, double> zeta;
  std::set<std::string> degenerate_questions;  // zero-residual columns, alpha clamped at cap
};

enum class FitInit { column_means, zeros };

struct FitConfig {
  double rel_tol = 1e-9;     // relative NLL change
  int max_iter = 10000;
  double alpha_cap = 1e3;
  double alpha_floor = 1e-6;
  double grad_tol = 1e-8;    // projected gradient norm, relative to 1 + |nll|
  FitInit init = FitInit::column_means;

  void validate() const;  // throws ConfigError
};

struct FitReport {
  int iterations = 0;
  std::vector<double> nll_trace;  // [0] is the NLL at initialization
  bool converged = false;
  double final_gradient_norm = 0.0;
  double wall_time_s = 0.0;
};

struct Gradient {
  std::map<std::string, double> d_alpha;
  std::map<std::string, double> d_beta;
  std::map<std::string, double> d_zeta;

  double norm() const;
};

double nll(const ModelParams& params, const ResponseMatrix& matrix);

Gradient nll_gradient(const ModelParams& params, const ResponseMatrix& matrix);

// alpha_q = sqrt(n_q / sum of squared residuals), clamped to
// [alpha_floor, alpha_cap]. All-zero residuals flag the question degenerate.
std::map<std::string, double> update_alpha_closed_form(const ResponseMatrix& matrix,
                                                       const std::map<std::string, double>& beta,
                                                       const std::map<std::string, double>& zeta,
                                                       const FitConfig& cfg,
                                                       std::set<std::string>* degenerate = nullptr);

// One exact block update of beta then zeta with alpha held fixed. Neither
// update can increase the NLL.
void update_location_params(const ResponseMatrix& matrix, ModelParams& params);

// Block-coordinate descent on the negative log-likelihood. Deterministic for
// a given matrix and config; the returned params satisfy the mean-zeta = 0
// identifiability constraint.
std::pair<ModelParams, FitReport> fit(const ResponseMatrix& matrix, const FitConfig& cfg);

// Projected gradient descent on the same objective, for cross-checking.
std::pair<ModelParams, FitReport> fit_gradient_descent(const ResponseMatrix& matrix,
                                                       const FitConfig& cfg);

// Shifts zeta to exact mean zero and beta oppositely; predictions unchanged.
ModelParams normalize_identifiability(ModelParams params);

struct StandardizedResidual {
  std::string user_id;
  std::string question_id;
  double x = 0.0;  // alpha_q (ln t - beta_q - zeta_u)
};
std::vector<StandardizedResidual> standardized_residuals(const ModelParams& params,
                                                         const ResponseMatrix& matrix);

double predict_log_time(const ModelParams& params, const std::string& question_id,
                        const std::string& user_id);

// CSV rows: kind,id,value with kind in {alpha, beta, zeta}.
void write_params_csv(const ModelParams& params, std::ostream& out);
ModelParams read_params_csv(std::istream& in);

std::string fit_report_json(const FitReport& report, double final_nll);

}  // namespace rtm
