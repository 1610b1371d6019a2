#include "rtm/model.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ostream>

#include <json.hpp>

#include "rtm/csv.hpp"
#include "rtm/error.hpp"

namespace rtm {

namespace {

// Index-based working form of a ResponseMatrix plus parameter vectors.
struct Problem {
  std::size_t nu = 0, nq = 0;
  std::vector<std::vector<std::pair<std::uint32_t, double>>> by_q;  // col -> (row, ln t)
  std::vector<std::vector<std::pair<std::uint32_t, double>>> by_u;  // row -> (col, ln t)
  std::vector<std::size_t> n_q;  // observations per question

  explicit Problem(const ResponseMatrix& m) {
    nu = m.n_users();
    nq = m.n_questions();
    by_q.resize(nq);
    by_u.resize(nu);
    n_q.assign(nq, 0);
    for (const auto& e : m.entries) {
      by_q[e.col].push_back({e.row, e.log_time});
      by_u[e.row].push_back({e.col, e.log_time});
      ++n_q[e.col];
    }
    for (std::size_t j = 0; j < nq; ++j)
      if (n_q[j] == 0) throw ValidationError("question column with no observations: '" +
                                             m.questions[j] + "'");
    for (std::size_t i = 0; i < nu; ++i)
      if (by_u[i].empty())
        throw ValidationError("user row with no observations: '" + m.users[i] + "'");
  }
};

struct Vectors {
  std::vector<double> alpha, beta, zeta;
  std::vector<bool> degenerate;
};

double nll_vec(const Problem& p, const Vectors& v) {
  double total = 0.0;
  for (std::size_t j = 0; j < p.nq; ++j) {
    double a2 = v.alpha[j] * v.alpha[j];
    double ss = 0.0;
    for (const auto& [i, lnt] : p.by_q[j]) {
      double r = v.beta[j] + v.zeta[i] - lnt;
      ss += r * r;
    }
    total += 0.5 * a2 * ss - static_cast<double>(p.n_q[j]) * std::log(v.alpha[j]);
  }
  return total;
}

// Gradient norm with alpha components projected at the clamp bounds: a
// component pushing outward at a bound does not count against stationarity.
double projected_gradient_norm(const Problem& p, const Vectors& v, const FitConfig& cfg) {
  double sq = 0.0;
  std::vector<double> gz(p.nu, 0.0);
  for (std::size_t j = 0; j < p.nq; ++j) {
    double a = v.alpha[j];
    double a2 = a * a;
    double gb = 0.0, ss = 0.0;
    for (const auto& [i, lnt] : p.by_q[j]) {
      double r = v.beta[j] + v.zeta[i] - lnt;
      gb += r;
      ss += r * r;
      gz[i] += a2 * r;
    }
    gb *= a2;
    double ga = a * ss - static_cast<double>(p.n_q[j]) / a;
    bool at_floor = a <= cfg.alpha_floor * (1.0 + 1e-12);
    bool at_cap = a >= cfg.alpha_cap * (1.0 - 1e-12);
    if ((at_floor && ga > 0.0) || (at_cap && ga < 0.0)) ga = 0.0;
    sq += gb * gb + ga * ga;
  }
  for (double g : gz) sq += g * g;
  return std::sqrt(sq);
}

void update_beta_vec(const Problem& p, Vectors& v) {
  for (std::size_t j = 0; j < p.nq; ++j) {
    double sum = 0.0;
    for (const auto& [i, lnt] : p.by_q[j]) sum += lnt - v.zeta[i];
    v.beta[j] = sum / static_cast<double>(p.n_q[j]);
  }
}

void update_zeta_vec(const Problem& p, Vectors& v) {
  for (std::size_t i = 0; i < p.nu; ++i) {
    double num = 0.0, den = 0.0;
    for (const auto& [j, lnt] : p.by_u[i]) {
      double a2 = v.alpha[j] * v.alpha[j];
      num += a2 * (lnt - v.beta[j]);
      den += a2;
    }
    v.zeta[i] = num / den;
  }
}

void update_alpha_vec(const Problem& p, Vectors& v, const FitConfig& cfg) {
  for (std::size_t j = 0; j < p.nq; ++j) {
    double ss = 0.0;
    for (const auto& [i, lnt] : p.by_q[j]) {
      double r = v.beta[j] + v.zeta[i] - lnt;
      ss += r * r;
    }
    if (ss == 0.0) {
      v.alpha[j] = cfg.alpha_cap;
      v.degenerate[j] = true;
      continue;
    }
    v.degenerate[j] = false;
    v.alpha[j] = std::clamp(std::sqrt(static_cast<double>(p.n_q[j]) / ss), cfg.alpha_floor,
                            cfg.alpha_cap);
  }
}

Vectors init_vectors(const Problem& p, const FitConfig& cfg) {
  Vectors v;
  v.alpha.assign(p.nq, 1.0);
  v.beta.assign(p.nq, 0.0);
  v.zeta.assign(p.nu, 0.0);
  v.degenerate.assign(p.nq, false);
  if (cfg.init == FitInit::column_means) {
    for (std::size_t j = 0; j < p.nq; ++j) {
      double sum = 0.0;
      for (const auto& [i, lnt] : p.by_q[j]) sum += lnt;
      v.beta[j] = sum / static_cast<double>(p.n_q[j]);
    }
  }
  return v;
}

void normalize_vectors(Vectors& v) {
  if (v.zeta.empty()) return;
  double c = 0.0;
  for (double z : v.zeta) c += z;
  c /= static_cast<double>(v.zeta.size());
  for (double& z : v.zeta) z -= c;
  for (double& b : v.beta) b += c;
}

ModelParams to_params(const ResponseMatrix& m, const Vectors& v) {
  ModelParams out;
  for (std::size_t j = 0; j < m.n_questions(); ++j) {
    out.alpha[m.questions[j]] = v.alpha[j];
    out.beta[m.questions[j]] = v.beta[j];
    if (v.degenerate[j]) out.degenerate_questions.insert(m.questions[j]);
  }
  for (std::size_t i = 0; i < m.n_users(); ++i) out.zeta[m.users[i]] = v.zeta[i];
  return out;
}

Vectors from_params(const ResponseMatrix& m, const ModelParams& params, const FitConfig& cfg) {
  Vectors v;
  v.alpha.resize(m.n_questions());
  v.beta.resize(m.n_questions());
  v.zeta.resize(m.n_users());
  v.degenerate.assign(m.n_questions(), false);
  for (std::size_t j = 0; j < m.n_questions(); ++j) {
    const std::string& q = m.questions[j];
    auto a = params.alpha.find(q);
    auto b = params.beta.find(q);
    if (a == params.alpha.end() || b == params.beta.end())
      throw ValidationError("params missing question '" + q + "'");
    if (!(a->second > 0.0)) throw ValidationError("alpha must be positive for '" + q + "'");
    v.alpha[j] = a->second;
    v.beta[j] = b->second;
    v.degenerate[j] = params.degenerate_questions.count(q) > 0;
  }
  for (std::size_t i = 0; i < m.n_users(); ++i) {
    auto z = params.zeta.find(m.users[i]);
    if (z == params.zeta.end())
      throw ValidationError("params missing user '" + m.users[i] + "'");
    v.zeta[i] = z->second;
  }
  (void)cfg;
  return v;
}

void check_finite(double value, int iteration) {
  if (!std::isfinite(value))
    throw ValidationError("non-finite NLL at iteration " + std::to_string(iteration));
}

}  // namespace

void FitConfig::validate() const {
  if (!(rel_tol > 0.0)) throw ConfigError("rel_tol must be positive");
  if (max_iter <= 0) throw ConfigError("max_iter must be positive");
  if (!(alpha_floor > 0.0 && alpha_floor < alpha_cap))
    throw ConfigError("need 0 < alpha_floor < alpha_cap");
  if (!(grad_tol > 0.0)) throw ConfigError("grad_tol must be positive");
}

double Gradient::norm() const {
  double sq = 0.0;
  for (const auto& [id, g] : d_alpha) sq += g * g;
  for (const auto& [id, g] : d_beta) sq += g * g;
  for (const auto& [id, g] : d_zeta) sq += g * g;
  return std::sqrt(sq);
}

double nll(const ModelParams& params, const ResponseMatrix& matrix) {
  Problem p(matrix);
  Vectors v = from_params(matrix, params, FitConfig{});
  return nll_vec(p, v);
}

Gradient nll_gradient(const ModelParams& params, const ResponseMatrix& matrix) {
  Problem p(matrix);
  Vectors v = from_params(matrix, params, FitConfig{});
  Gradient g;
  std::vector<double> gz(p.nu, 0.0);
  for (std::size_t j = 0; j < p.nq; ++j) {
    double a = v.alpha[j];
    double a2 = a * a;
    double gb = 0.0, ss = 0.0;
    for (const auto& [i, lnt] : p.by_q[j]) {
      double r = v.beta[j] + v.zeta[i] - lnt;
      gb += r;
      ss += r * r;
      gz[i] += a2 * r;
    }
    g.d_beta[matrix.questions[j]] = a2 * gb;
    g.d_alpha[matrix.questions[j]] = a * ss - static_cast<double>(p.n_q[j]) / a;
  }
  for (std::size_t i = 0; i < p.nu; ++i) g.d_zeta[matrix.users[i]] = gz[i];
  return g;
}

std::map<std::string, double> update_alpha_closed_form(const ResponseMatrix& matrix,
                                                       const std::map<std::string, double>& beta,
                                                       const std::map<std::string, double>& zeta,
                                                       const FitConfig& cfg,
                                                       std::set<std::string>* degenerate) {
  Problem p(matrix);
  ModelParams tmp;
  tmp.beta = beta;
  tmp.zeta = zeta;
  for (const auto& q : matrix.questions) tmp.alpha[q] = 1.0;
  Vectors v = from_params(matrix, tmp, cfg);
  update_alpha_vec(p, v, cfg);
  std::map<std::string, double> out;
  for (std::size_t j = 0; j < p.nq; ++j) {
    out[matrix.questions[j]] = v.alpha[j];
    if (v.degenerate[j] && degenerate) degenerate->insert(matrix.questions[j]);
  }
  return out;
}

void update_location_params(const ResponseMatrix& matrix, ModelParams& params) {
  Problem p(matrix);
  Vectors v = from_params(matrix, params, FitConfig{});
  update_beta_vec(p, v);
  update_zeta_vec(p, v);
  for (std::size_t j = 0; j < p.nq; ++j) params.beta[matrix.questions[j]] = v.beta[j];
  for (std::size_t i = 0; i < p.nu; ++i) params.zeta[matrix.users[i]] = v.zeta[i];
}

std::pair<ModelParams, FitReport> fit(const ResponseMatrix& matrix, const FitConfig& cfg) {
  cfg.validate();
  if (matrix.unfittable || matrix.entries.empty()) throw ValidationError("unfittable");
  auto start = std::chrono::steady_clock::now();

  Problem p(matrix);
  Vectors v = init_vectors(p, cfg);

  FitReport report;
  double prev = nll_vec(p, v);
  check_finite(prev, 0);
  report.nll_trace.push_back(prev);

  for (int it = 1; it <= cfg.max_iter; ++it) {
    update_beta_vec(p, v);
    update_zeta_vec(p, v);
    update_alpha_vec(p, v, cfg);

    double cur = nll_vec(p, v);
    check_finite(cur, it);
    report.nll_trace.push_back(cur);
    report.iterations = it;

    double rel_change = std::abs(prev - cur) / (1.0 + std::abs(prev));
    double grad = projected_gradient_norm(p, v, cfg);
    report.final_gradient_norm = grad;
    prev = cur;
    if (rel_change < cfg.rel_tol && grad < cfg.grad_tol * (1.0 + std::abs(cur))) {
      report.converged = true;
      break;
    }
  }

  normalize_vectors(v);
  report.wall_time_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return {to_params(matrix, v), report};
}

std::pair<ModelParams, FitReport> fit_gradient_descent(const ResponseMatrix& matrix,
                                                       const FitConfig& cfg) {
  cfg.validate();
  if (matrix.unfittable || matrix.entries.empty()) throw ValidationError("unfittable");
  auto start = std::chrono::steady_clock::now();

  Problem p(matrix);
  Vectors v = init_vectors(p, cfg);

  auto gradient = [&](const Vectors& w, std::vector<double>& ga, std::vector<double>& gb,
                      std::vector<double>& gz) {
    ga.assign(p.nq, 0.0);
    gb.assign(p.nq, 0.0);
    gz.assign(p.nu, 0.0);
    for (std::size_t j = 0; j < p.nq; ++j) {
      double a = w.alpha[j];
      double a2 = a * a;
      double sb = 0.0, ss = 0.0;
      for (const auto& [i, lnt] : p.by_q[j]) {
        double r = w.beta[j] + w.zeta[i] - lnt;
        sb += r;
        ss += r * r;
        gz[i] += a2 * r;
      }
      gb[j] = a2 * sb;
      ga[j] = a * ss - static_cast<double>(p.n_q[j]) / a;
    }
  };

  FitReport report;
  double prev = nll_vec(p, v);
  check_finite(prev, 0);
  report.nll_trace.push_back(prev);
  double step = 1e-3;
  std::vector<double> ga, gb, gz;

  for (int it = 1; it <= cfg.max_iter; ++it) {
    gradient(v, ga, gb, gz);
    double gnorm_sq = 0.0;
    for (double g : ga) gnorm_sq += g * g;
    for (double g : gb) gnorm_sq += g * g;
    for (double g : gz) gnorm_sq += g * g;

    Vectors trial = v;
    double cur = prev;
    bool moved = false;
    for (int halvings = 0; halvings < 60; ++halvings) {
      for (std::size_t j = 0; j < p.nq; ++j) {
        trial.alpha[j] = std::clamp(v.alpha[j] - step * ga[j], cfg.alpha_floor, cfg.alpha_cap);
        trial.beta[j] = v.beta[j] - step * gb[j];
      }
      for (std::size_t i = 0; i < p.nu; ++i) trial.zeta[i] = v.zeta[i] - step * gz[i];
      double trial_nll = nll_vec(p, trial);
      if (std::isfinite(trial_nll) && trial_nll <= prev - 1e-4 * step * gnorm_sq) {
        v = trial;
        cur = trial_nll;
        moved = true;
        step *= 2.0;
        break;
      }
      step *= 0.5;
    }
    check_finite(cur, it);
    report.nll_trace.push_back(cur);
    report.iterations = it;

    double rel_change = std::abs(prev - cur) / (1.0 + std::abs(prev));
    double grad = projected_gradient_norm(p, v, cfg);
    report.final_gradient_norm = grad;
    prev = cur;
    if (!moved || (rel_change < cfg.rel_tol && grad < cfg.grad_tol * (1.0 + std::abs(cur)))) {
      report.converged = grad < cfg.grad_tol * (1.0 + std::abs(cur));
      break;
    }
  }

  for (std::size_t j = 0; j < p.nq; ++j)
    v.degenerate[j] = v.alpha[j] >= cfg.alpha_cap * (1.0 - 1e-12);
  normalize_vectors(v);
  report.wall_time_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return {to_params(matrix, v), report};
}

ModelParams normalize_identifiability(ModelParams params) {
  if (params.zeta.empty()) return params;
  double c = 0.0;
  for (const auto& [user, z] : params.zeta) c += z;
  c /= static_cast<double>(params.zeta.size());
  for (auto& [user, z] : params.zeta) z -= c;
  for (auto& [question, b] : params.beta) b += c;
  return params;
}

std::vector<StandardizedResidual> standardized_residuals(const ModelParams& params,
                                                         const ResponseMatrix& matrix) {
  Vectors v = from_params(matrix, params, FitConfig{});
  std::vector<StandardizedResidual> out;
  out.reserve(matrix.entries.size());
  for (const auto& e : matrix.entries)
    out.push_back({matrix.users[e.row], matrix.questions[e.col],
                   v.alpha[e.col] * (e.log_time - v.beta[e.col] - v.zeta[e.row])});
  return out;
}

double predict_log_time(const ModelParams& params, const std::string& question_id,
                        const std::string& user_id) {
  auto b = params.beta.find(question_id);
  if (b == params.beta.end()) throw ValidationError("unknown question '" + question_id + "'");
  auto z = params.zeta.find(user_id);
  if (z == params.zeta.end()) throw ValidationError("unknown user '" + user_id + "'");
  return b->second + z->second;
}

void write_params_csv(const ModelParams& params, std::ostream& out) {
  out << "kind,id,value\n";
  for (const auto& [id, v] : params.alpha) csv::write_row(out, {"alpha", id, csv::format_double(v)});
  for (const auto& [id, v] : params.beta) csv::write_row(out, {"beta", id, csv::format_double(v)});
  for (const auto& [id, v] : params.zeta) csv::write_row(out, {"zeta", id, csv::format_double(v)});
}

ModelParams read_params_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw ValidationError("empty params CSV");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "kind,id,value")
    throw ValidationError("unexpected params CSV header: '" + line + "'");
  ModelParams params;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto fields = csv::split_line(line);
    if (fields.size() != 3) throw ValidationError("params CSV row needs 3 fields");
    double value = csv::parse_double(fields[2]);
    if (fields[0] == "alpha")
      params.alpha[fields[1]] = value;
    else if (fields[0] == "beta")
      params.beta[fields[1]] = value;
    else if (fields[0] == "zeta")
      params.zeta[fields[1]] = value;
    else
      throw ValidationError("unknown param kind '" + fields[0] + "'");
  }
  return params;
}

std::string fit_report_json(const FitReport& report, double final_nll) {
  nlohmann::json j;
  j["iterations"] = report.iterations;
  j["final_nll"] = final_nll;
  j["converged"] = report.converged;
  j["gradient_norm"] = report.final_gradient_norm;
  return j.dump(2);
}

}  // namespace rtm
