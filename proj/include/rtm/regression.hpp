#pragma once

#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace rtm {

struct LearnerRecord {
  std::string course_id;
  std::string user_id;
  double zeta1 = 0.0;
  std::optional<double> zeta2;
  double correctness = 0.0;  // fraction correct on first submits
  int education = 0;         // ordinal 0 (none) .. 7 (PhD)
  double age = 0.0;
  double videos = 0.0;
  double play_clicks = 0.0;
  double posts = 0.0;
  double grade = 0.0;  // 0..1
  bool completed = false;
  bool certified = false;
};

std::vector<LearnerRecord> read_learner_csv(std::istream& in);
void write_learner_csv(const std::vector<LearnerRecord>& records, std::ostream& out);

enum class StandardizeMode { unit_mean, unit_variance };

struct StandardizeResult {
  std::vector<LearnerRecord> records;
  // (course_id, variable) pairs where the course mean/sd was zero and the
  // rescale could not be applied
  std::vector<std::pair<std::string, std::string>> flagged;
};

// Per-course rescale of the named variables: unit_mean divides by the course
// mean, unit_variance by the course sample standard deviation. No centering.
StandardizeResult standardize_per_course(std::vector<LearnerRecord> records,
                                         const std::vector<std::string>& variables,
                                         StandardizeMode mode);

struct CoefficientRow {
  std::string predictor;
  double sd_pooled = 0.0;
  double coef = 0.0;
  double se = 0.0;
  double z = 0.0;
  double p = 1.0;
};

struct RegressionResult {
  std::string model_label;
  std::size_t n = 0;
  std::vector<CoefficientRow> rows;
  std::vector<std::pair<std::string, double>> course_intercepts;
  std::map<std::string, std::map<std::string, double>> sd_by_course;  // predictor -> course -> sd
};

// Least squares with one intercept indicator per course in place of the
// random course effect. Classical standard errors, two-sided
// normal-approximation p-values.
RegressionResult ols_fixed_effects(const std::vector<LearnerRecord>& records,
                                   const std::string& outcome,
                                   const std::vector<std::string>& predictors,
                                   const std::string& model_label);

// Logistic regression by IRLS with the same course fixed effects; Wald
// standard errors from the inverse observed information.
RegressionResult logistic_fixed_effects(const std::vector<LearnerRecord>& records,
                                        const std::string& outcome,
                                        const std::vector<std::string>& predictors,
                                        const std::string& model_label);

double odds_factor(double coefficient);

// "Slowness 1" and "Slowness 2": zeta regressed on Education + Age + Videos
// + Play clicks + Posts, with the engagement variables normalized to unit
// mean and everything rescaled to unit variance within each course first.
std::pair<RegressionResult, RegressionResult> slowness_models(
    const std::vector<LearnerRecord>& records);

}  // namespace rtm
