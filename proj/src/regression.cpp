#include "rtm/regression.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <set>

#include <Eigen/Dense>

#include "rtm/csv.hpp"
#include "rtm/diagnostics.hpp"
#include "rtm/error.hpp"

namespace rtm {

namespace {

// Named access to LearnerRecord variables. zeta2 is the only one that can be
// absent; everything else always has a value.
std::optional<double> get_variable(const LearnerRecord& r, const std::string& name) {
  if (name == "zeta1") return r.zeta1;
  if (name == "zeta2") return r.zeta2;
  if (name == "correctness") return r.correctness;
  if (name == "education") return static_cast<double>(r.education);
  if (name == "age") return r.age;
  if (name == "videos") return r.videos;
  if (name == "play_clicks") return r.play_clicks;
  if (name == "posts") return r.posts;
  if (name == "grade") return r.grade;
  if (name == "completed") return r.completed ? 1.0 : 0.0;
  if (name == "certified") return r.certified ? 1.0 : 0.0;
  throw ValidationError("unknown variable '" + name + "'");
}

void set_variable(LearnerRecord& r, const std::string& name, double value) {
  if (name == "zeta1")
    r.zeta1 = value;
  else if (name == "zeta2")
    r.zeta2 = value;
  else if (name == "correctness")
    r.correctness = value;
  else if (name == "age")
    r.age = value;
  else if (name == "videos")
    r.videos = value;
  else if (name == "play_clicks")
    r.play_clicks = value;
  else if (name == "posts")
    r.posts = value;
  else if (name == "grade")
    r.grade = value;
  else
    throw ValidationError("variable '" + name + "' cannot be rescaled");
}

double sample_sd(const std::vector<double>& xs) {
  if (xs.size() < 2) return 0.0;
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / (static_cast<double>(xs.size()) - 1.0));
}

double two_sided_p(double z) { return std::erfc(std::abs(z) / std::sqrt(2.0)); }

struct Design {
  Eigen::MatrixXd X;
  Eigen::VectorXd y;
  std::vector<std::string> columns;  // predictors first, then course dummies
  std::vector<std::string> courses;
  std::size_t n_predictors = 0;
  std::vector<const LearnerRecord*> used;
};

Design build_design(const std::vector<LearnerRecord>& records, const std::string& outcome,
                    const std::vector<std::string>& predictors) {
  Design d;
  d.n_predictors = predictors.size();

  for (const auto& r : records) {
    bool usable = get_variable(r, outcome).has_value();
    for (const auto& name : predictors) usable = usable && get_variable(r, name).has_value();
    if (usable) d.used.push_back(&r);
  }
  if (d.used.empty()) throw ValidationError("no usable records for model");

  std::set<std::string> course_set;
  for (const auto* r : d.used) course_set.insert(r->course_id);
  d.courses.assign(course_set.begin(), course_set.end());

  std::size_t n = d.used.size();
  std::size_t p = predictors.size() + d.courses.size();
  if (n <= p) throw ValidationError("not enough records for the design size");

  d.X.setZero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(p));
  d.y.resize(static_cast<Eigen::Index>(n));
  std::map<std::string, std::size_t> course_col;
  for (std::size_t c = 0; c < d.courses.size(); ++c)
    course_col[d.courses[c]] = predictors.size() + c;

  for (std::size_t i = 0; i < n; ++i) {
    const LearnerRecord& r = *d.used[i];
    d.y(static_cast<Eigen::Index>(i)) = *get_variable(r, outcome);
    for (std::size_t j = 0; j < predictors.size(); ++j)
      d.X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          *get_variable(r, predictors[j]);
    d.X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(course_col[r.course_id])) = 1.0;
  }
  d.columns = predictors;
  for (const auto& c : d.courses) d.columns.push_back("course:" + c);
  return d;
}

void check_rank(const Design& d) {
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(d.X);
  qr.setThreshold(1e-10);
  auto rank = qr.rank();
  if (rank == d.X.cols()) return;
  // columns outside the first `rank` pivots are the dependent ones
  std::string names;
  const auto& perm = qr.colsPermutation().indices();
  for (Eigen::Index k = rank; k < d.X.cols(); ++k) {
    if (!names.empty()) names += ", ";
    names += d.columns[static_cast<std::size_t>(perm(k))];
  }
  throw ValidationError("rank-deficient design; collinear columns: " + names);
}

void fill_sds(RegressionResult& result, const Design& d,
              const std::vector<std::string>& predictors) {
  for (std::size_t j = 0; j < predictors.size(); ++j) {
    std::vector<double> all;
    std::map<std::string, std::vector<double>> per_course;
    for (const auto* r : d.used) {
      double v = *get_variable(*r, predictors[j]);
      all.push_back(v);
      per_course[r->course_id].push_back(v);
    }
    result.rows[j].sd_pooled = sample_sd(all);
    for (const auto& [course, xs] : per_course)
      result.sd_by_course[predictors[j]][course] = sample_sd(xs);
  }
}

RegressionResult assemble(const Design& d, const std::vector<std::string>& predictors,
                          const std::string& model_label, const Eigen::VectorXd& coef,
                          const Eigen::MatrixXd& cov) {
  RegressionResult result;
  result.model_label = model_label + " (course fixed effects)";
  result.n = d.used.size();
  for (std::size_t j = 0; j < predictors.size(); ++j) {
    CoefficientRow row;
    row.predictor = predictors[j];
    row.coef = coef(static_cast<Eigen::Index>(j));
    row.se = std::sqrt(std::max(0.0, cov(static_cast<Eigen::Index>(j),
                                         static_cast<Eigen::Index>(j))));
    row.z = row.se > 0.0 ? row.coef / row.se : 0.0;
    row.p = row.se > 0.0 ? two_sided_p(row.z) : (row.coef == 0.0 ? 1.0 : 0.0);
    result.rows.push_back(row);
  }
  for (std::size_t c = 0; c < d.courses.size(); ++c)
    result.course_intercepts.push_back(
        {d.courses[c], coef(static_cast<Eigen::Index>(predictors.size() + c))});
  fill_sds(result, d, predictors);
  return result;
}

double logistic_loglik(const Eigen::VectorXd& eta, const Eigen::VectorXd& y) {
  double ll = 0.0;
  for (Eigen::Index i = 0; i < eta.size(); ++i) {
    // log(p) if y=1 else log(1-p), in the stable log1p(exp) form
    double e = eta(i);
    ll += y(i) * e - (e > 30.0 ? e : std::log1p(std::exp(e)));
  }
  return ll;
}

}  // namespace

RegressionResult ols_fixed_effects(const std::vector<LearnerRecord>& records,
                                   const std::string& outcome,
                                   const std::vector<std::string>& predictors,
                                   const std::string& model_label) {
  Design d = build_design(records, outcome, predictors);
  check_rank(d);

  Eigen::MatrixXd xtx = d.X.transpose() * d.X;
  Eigen::VectorXd coef = xtx.ldlt().solve(d.X.transpose() * d.y);
  Eigen::VectorXd resid = d.y - d.X * coef;
  double dof = static_cast<double>(d.X.rows() - d.X.cols());
  double sigma2 = resid.squaredNorm() / dof;
  Eigen::MatrixXd cov = sigma2 * xtx.inverse();
  return assemble(d, predictors, model_label, coef, cov);
}

RegressionResult logistic_fixed_effects(const std::vector<LearnerRecord>& records,
                                        const std::string& outcome,
                                        const std::vector<std::string>& predictors,
                                        const std::string& model_label) {
  Design d = build_design(records, outcome, predictors);
  check_rank(d);
  double ymin = d.y.minCoeff(), ymax = d.y.maxCoeff();
  if (ymin == ymax) throw ValidationError("constant outcome '" + outcome + "'");

  Eigen::Index p = d.X.cols();
  Eigen::VectorXd coef = Eigen::VectorXd::Zero(p);
  Eigen::VectorXd eta = d.X * coef;
  double ll = logistic_loglik(eta, d.y);
  Eigen::MatrixXd info(p, p);

  for (int iter = 0; iter < 100; ++iter) {
    Eigen::VectorXd prob = (1.0 + (-eta.array()).exp()).inverse().matrix();
    Eigen::VectorXd w = (prob.array() * (1.0 - prob.array())).cwiseMax(1e-10).matrix();
    Eigen::VectorXd zwork = eta + ((d.y - prob).array() / w.array()).matrix();
    info = d.X.transpose() * w.asDiagonal() * d.X;
    Eigen::VectorXd next = info.ldlt().solve(d.X.transpose() * (w.asDiagonal() * zwork));

    // step-halve if the Newton step overshoots, keeping the log-likelihood
    // non-decreasing
    Eigen::VectorXd step = next - coef;
    double next_ll = logistic_loglik(d.X * next, d.y);
    int halvings = 0;
    while (next_ll < ll && halvings < 30) {
      step *= 0.5;
      next = coef + step;
      next_ll = logistic_loglik(d.X * next, d.y);
      ++halvings;
    }
    if (next.array().abs().maxCoeff() > 30.0) throw ValidationError("separation_suspected");

    double max_change = (next - coef).array().abs().maxCoeff();
    coef = next;
    eta = d.X * coef;
    ll = next_ll;
    if (max_change < 1e-8) break;
  }

  Eigen::VectorXd prob = (1.0 + (-eta.array()).exp()).inverse().matrix();
  Eigen::VectorXd w = (prob.array() * (1.0 - prob.array())).cwiseMax(1e-10).matrix();
  info = d.X.transpose() * w.asDiagonal() * d.X;
  Eigen::MatrixXd cov = info.inverse();
  return assemble(d, predictors, model_label, coef, cov);
}

double odds_factor(double coefficient) { return std::exp(coefficient); }

StandardizeResult standardize_per_course(std::vector<LearnerRecord> records,
                                         const std::vector<std::string>& variables,
                                         StandardizeMode mode) {
  StandardizeResult out;
  for (const auto& name : variables) {
    std::map<std::string, std::vector<double>> per_course;
    for (const auto& r : records) {
      auto v = get_variable(r, name);
      if (v) per_course[r.course_id].push_back(*v);
    }
    std::map<std::string, double> divisor;
    for (const auto& [course, xs] : per_course) {
      double div;
      if (mode == StandardizeMode::unit_mean) {
        double mean = 0.0;
        for (double x : xs) mean += x;
        div = mean / static_cast<double>(xs.size());
      } else {
        div = sample_sd(xs);
      }
      if (div == 0.0) {
        out.flagged.push_back({course, name});
      } else {
        divisor[course] = div;
      }
    }
    for (auto& r : records) {
      auto v = get_variable(r, name);
      auto it = divisor.find(r.course_id);
      if (v && it != divisor.end()) set_variable(r, name, *v / it->second);
    }
  }
  out.records = std::move(records);
  return out;
}

std::pair<RegressionResult, RegressionResult> slowness_models(
    const std::vector<LearnerRecord>& records) {
  const std::vector<std::string> engagement = {"videos", "play_clicks", "posts"};
  const std::vector<std::string> predictors = {"education", "age", "videos", "play_clicks",
                                               "posts"};

  StandardizeResult step1 = standardize_per_course(records, engagement,
                                                   StandardizeMode::unit_mean);
  std::vector<std::string> rescale = {"zeta1", "zeta2", "education", "age",
                                      "videos", "play_clicks", "posts"};
  StandardizeResult step2 = standardize_per_course(std::move(step1.records), rescale,
                                                   StandardizeMode::unit_variance);

  std::map<std::string, std::set<std::string>> flagged;  // variable -> courses
  for (const auto& [course, variable] : step1.flagged) flagged[variable].insert(course);
  for (const auto& [course, variable] : step2.flagged) flagged[variable].insert(course);

  auto usable = [&](const LearnerRecord& r, const std::string& outcome) {
    for (const auto& name : predictors)
      if (flagged.count(name) && flagged[name].count(r.course_id)) return false;
    if (flagged.count(outcome) && flagged[outcome].count(r.course_id)) return false;
    return true;
  };

  std::vector<LearnerRecord> recs1, recs2;
  for (const auto& r : step2.records) {
    if (usable(r, "zeta1")) recs1.push_back(r);
    if (r.zeta2 && usable(r, "zeta2")) recs2.push_back(r);
  }

  RegressionResult s1 = ols_fixed_effects(recs1, "zeta1", predictors, "Slowness 1");
  RegressionResult s2 = ols_fixed_effects(recs2, "zeta2", predictors, "Slowness 2");
  return {std::move(s1), std::move(s2)};
}

std::vector<LearnerRecord> read_learner_csv(std::istream& in) {
  static const std::string header =
      "course_id,user_id,zeta1,zeta2,correctness,education,age,videos,play_clicks,posts,"
      "grade,completed,certified";
  std::string line;
  if (!std::getline(in, line)) throw ValidationError("empty learner CSV");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != header) throw ValidationError("unexpected learner CSV header: '" + line + "'");

  std::vector<LearnerRecord> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto f = csv::split_line(line);
    if (f.size() != 13) throw ValidationError("learner CSV row needs 13 fields");
    LearnerRecord r;
    r.course_id = f[0];
    r.user_id = f[1];
    r.zeta1 = csv::parse_double(f[2]);
    if (!f[3].empty()) r.zeta2 = csv::parse_double(f[3]);
    r.correctness = csv::parse_double(f[4]);
    r.education = static_cast<int>(csv::parse_long(f[5]));
    if (r.education < 0 || r.education > 7)
      throw ValidationError("education must be in 0..7, got '" + f[5] + "'");
    r.age = csv::parse_double(f[6]);
    r.videos = csv::parse_double(f[7]);
    r.play_clicks = csv::parse_double(f[8]);
    r.posts = csv::parse_double(f[9]);
    r.grade = csv::parse_double(f[10]);
    r.completed = f[11] == "1";
    r.certified = f[12] == "1";
    out.push_back(std::move(r));
  }
  return out;
}

void write_learner_csv(const std::vector<LearnerRecord>& records, std::ostream& out) {
  out << "course_id,user_id,zeta1,zeta2,correctness,education,age,videos,play_clicks,posts,"
         "grade,completed,certified\n";
  for (const auto& r : records) {
    csv::write_row(out, {r.course_id, r.user_id, csv::format_double(r.zeta1),
                         r.zeta2 ? csv::format_double(*r.zeta2) : std::string{},
                         csv::format_double(r.correctness), std::to_string(r.education),
                         csv::format_double(r.age), csv::format_double(r.videos),
                         csv::format_double(r.play_clicks), csv::format_double(r.posts),
                         csv::format_double(r.grade), r.completed ? "1" : "0",
                         r.certified ? "1" : "0"});
  }
}

}  // namespace rtm
