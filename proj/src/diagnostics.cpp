#include "rtm/diagnostics.hpp"

#include <algorithm>
#include <cmath>

#include "rtm/error.hpp"

namespace rtm {

MomentSet raw_moments(std::span<const double> x) {
  if (x.empty()) throw ValidationError("raw_moments: empty input");
  MomentSet m;
  for (double v : x) {
    double v2 = v * v;
    m.m1 += v;
    m.m2 += v2;
    m.m3 += v2 * v;
    m.m4 += v2 * v2;
  }
  double n = static_cast<double>(x.size());
  m.m1 /= n;
  m.m2 /= n;
  m.m3 /= n;
  m.m4 /= n;
  return m;
}

DeviationSet moment_deviations(const MomentSet& m) {
  if (m.m2 < 0.0) throw ValidationError("moment_deviations: m2 < 0");
  if (m.m4 < 0.0) throw ValidationError("moment_deviations: m4 < 0");
  DeviationSet d;
  d.d1 = m.m1;
  d.d2 = std::sqrt(m.m2) - 1.0;
  d.d3 = std::cbrt(m.m3);
  d.d4 = std::pow(m.m4, 0.25) - std::pow(3.0, 0.25);
  return d;
}

std::map<std::string, std::vector<double>> group_residuals_by_question(
    const std::vector<StandardizedResidual>& residuals) {
  std::map<std::string, std::vector<double>> groups;
  for (const auto& r : residuals) groups[r.question_id].push_back(r.x);
  return groups;
}

PerQuestionDeviations per_question_deviations(
    const std::map<std::string, std::vector<double>>& groups) {
  PerQuestionDeviations out;
  for (const auto& [question, xs] : groups)
    out.by_question[question] = moment_deviations(raw_moments(xs));

  std::array<std::vector<double>, 4> values;
  for (const auto& [question, d] : out.by_question) {
    values[0].push_back(d.d1);
    values[1].push_back(d.d2);
    values[2].push_back(d.d3);
    values[3].push_back(d.d4);
  }
  for (int k = 0; k < 4; ++k) {
    std::sort(values[k].begin(), values[k].end());
    double n = static_cast<double>(values[k].size());
    for (std::size_t i = 0; i < values[k].size(); ++i)
      out.percentile_curves[k].push_back({values[k][i], static_cast<double>(i + 1) / n});
  }
  return out;
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

std::vector<std::pair<double, double>> ecdf_vs_normal(std::vector<double> x) {
  if (x.empty()) throw ValidationError("ecdf_vs_normal: empty input");
  std::sort(x.begin(), x.end());
  std::vector<std::pair<double, double>> out;
  out.reserve(x.size());
  double n = static_cast<double>(x.size());
  for (std::size_t i = 0; i < x.size(); ++i)
    out.push_back({normal_cdf(x[i]), static_cast<double>(i + 1) / n});
  return out;
}

DatasetStats dataset_stats(const ResponseMatrix& matrix) {
  DatasetStats s;
  s.n_users = matrix.n_users();
  s.n_questions = matrix.n_questions();
  std::size_t cells = s.n_users * s.n_questions;
  if (cells == 0 || matrix.n_observations() == 0)
    throw ValidationError("dataset_stats: no observations");
  double observed = static_cast<double>(matrix.n_observations());
  s.missingness = 1.0 - observed / static_cast<double>(cells);
  double parameters = 2.0 * static_cast<double>(s.n_questions) +
                      static_cast<double>(s.n_users) - 1.0;
  s.parameter_ratio = parameters / observed;
  return s;
}

Correlation pearson_with_se(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ValidationError("pearson: size mismatch");
  if (a.size() < 3) throw ValidationError("pearson: need at least 3 pairs");
  double n = static_cast<double>(a.size());
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    double da = a[i] - ma, db = b[i] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (saa == 0.0 || sbb == 0.0) throw ValidationError("pearson: zero variance");
  Correlation c;
  c.n = a.size();
  c.r = sab / std::sqrt(saa * sbb);
  double one_minus_r2 = std::max(0.0, 1.0 - c.r * c.r);
  c.se = std::sqrt(one_minus_r2 / (n - 2.0));
  return c;
}

namespace {

ParamComparison::Entry compare_maps(const std::map<std::string, double>& a,
                                    const std::map<std::string, double>& b) {
  ParamComparison::Entry entry;
  std::vector<double> va, vb;
  for (const auto& [id, value] : a) {
    auto it = b.find(id);
    if (it == b.end()) continue;
    va.push_back(value);
    vb.push_back(it->second);
    entry.points.push_back({value, it->second});
  }
  if (va.size() < 3) {
    entry.note = "insufficient_overlap";
    return entry;
  }
  try {
    entry.corr = pearson_with_se(va, vb);
    entry.ok = true;
  } catch (const ValidationError&) {
    entry.note = "zero_variance";
  }
  return entry;
}

}  // namespace

ParamComparison compare_fits(const ModelParams& a, const ModelParams& b) {
  ParamComparison out;
  out.zeta = compare_maps(a.zeta, b.zeta);
  out.beta = compare_maps(a.beta, b.beta);
  out.alpha = compare_maps(a.alpha, b.alpha);
  return out;
}

QuestionDescription describe_question(double alpha, double beta) {
  if (!(alpha > 0.0)) throw ValidationError("describe_question: alpha must be positive");
  return {std::exp(beta), std::exp(1.0 / alpha)};
}

IntensityDiscrimination intensity_discrimination_relation(const ModelParams& params) {
  if (params.alpha.size() < 3)
    throw ValidationError("intensity_discrimination_relation: need at least 3 questions");
  IntensityDiscrimination out;
  std::vector<double> inv_alpha, beta;
  for (const auto& [question, a] : params.alpha) {
    auto b = params.beta.find(question);
    if (b == params.beta.end())
      throw ValidationError("params missing beta for '" + question + "'");
    inv_alpha.push_back(1.0 / a);
    beta.push_back(b->second);
    out.points.push_back({1.0 / a, b->second});
  }
  out.corr = pearson_with_se(inv_alpha, beta);
  return out;
}

}  // namespace rtm
