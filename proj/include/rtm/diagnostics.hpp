#pragma once

#include <array>
#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "rtm/model.hpp"

namespace rtm {

// Raw moments of standardized residuals about 0 (not about the sample mean).
struct MomentSet {
  double m1 = 0.0, m2 = 0.0, m3 = 0.0, m4 = 0.0;
};

// d_k = (m_k)^{1/k} - (m_k^0)^{1/k} against the standard-normal reference
// moments (0, 1, 0, 3); d3 takes the signed cube root.
struct DeviationSet {
  double d1 = 0.0, d2 = 0.0, d3 = 0.0, d4 = 0.0;
};

MomentSet raw_moments(std::span<const double> x);
DeviationSet moment_deviations(const MomentSet& m);

std::map<std::string, std::vector<double>> group_residuals_by_question(
    const std::vector<StandardizedResidual>& residuals);

struct PerQuestionDeviations {
  std::map<std::string, DeviationSet> by_question;
  // curve k: sorted (d_k value, rank fraction) pairs over questions
  std::array<std::vector<std::pair<double, double>>, 4> percentile_curves;
};
PerQuestionDeviations per_question_deviations(
    const std::map<std::string, std::vector<double>>& groups);

// Pairs (Phi(x_(i)), i/n) for sorted x; a perfect model lies on the identity.
std::vector<std::pair<double, double>> ecdf_vs_normal(std::vector<double> x);

double normal_cdf(double x);

struct DatasetStats {
  std::size_t n_users = 0;
  std::size_t n_questions = 0;
  double missingness = 0.0;      // 1 - |O| / (N_u N_q)
  double parameter_ratio = 0.0;  // (2 N_q + N_u - 1) / (N_u N_q (1 - m))
};
DatasetStats dataset_stats(const ResponseMatrix& matrix);

struct Correlation {
  double r = 0.0;
  double se = 0.0;  // sqrt((1 - r^2) / (n - 2))
  std::size_t n = 0;
};
Correlation pearson_with_se(std::span<const double> a, std::span<const double> b);

// Cross-fit comparison over shared ids (questions for alpha/beta, users for
// zeta). Fewer than 3 shared ids marks the entry insufficient_overlap.
struct ParamComparison {
  struct Entry {
    bool ok = false;  // false: insufficient_overlap or degenerate variance
    std::string note;
    Correlation corr;
    std::vector<std::pair<double, double>> points;  // (value in A, value in B)
  };
  Entry zeta, beta, alpha;
};
ParamComparison compare_fits(const ModelParams& a, const ModelParams& b);

// typical_seconds = exp(beta); spread_factor = exp(1/alpha). Most response
// times lie in [typical/spread, typical*spread].
struct QuestionDescription {
  double typical_seconds = 0.0;
  double spread_factor = 0.0;
};
QuestionDescription describe_question(double alpha, double beta);

struct IntensityDiscrimination {
  Correlation corr;                               // beta vs 1/alpha
  std::vector<std::pair<double, double>> points;  // (1/alpha_q, beta_q)
};
IntensityDiscrimination intensity_discrimination_relation(const ModelParams& params);

}  // namespace rtm
