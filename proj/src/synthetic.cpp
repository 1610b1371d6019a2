#include "rtm/synthetic.hpp"

#include <algorithm>
#include <cmath>

#include "rtm/error.hpp"
#include "rtm/rng.hpp"

namespace rtm {

namespace {

constexpr int kTimeGridBits = 10;  // times live on a 2^-10 s grid

double quantize_time(double t) {
  double q = std::ldexp(std::round(std::ldexp(t, kTimeGridBits)), -kTimeGridBits);
  double step = std::ldexp(1.0, -kTimeGridBits);
  return q < step ? step : q;
}

std::string make_id(const char* prefix, std::size_t index, std::size_t count) {
  std::size_t width = std::to_string(count > 0 ? count - 1 : 0).size();
  std::string digits = std::to_string(index);
  return prefix + std::string(width - digits.size(), '0') + digits;
}

}  // namespace

void SynthSpec::validate() const {
  if (n_users < 1 || n_questions < 1) throw ConfigError("need n_users, n_questions >= 1");
  if (!(missingness >= 0.0 && missingness < 1.0))
    throw ConfigError("missingness must be in [0, 1)");
  if (zeta_sd < 0.0 || beta_sd < 0.0 || alpha_log_sd < 0.0)
    throw ConfigError("standard deviations must be non-negative");
  if (course_id.empty()) throw ConfigError("course_id must be non-empty");
}

SynthTruth generate(const SynthSpec& spec) {
  spec.validate();
  SynthTruth truth;
  truth.spec = spec;

  SplitRng root(spec.seed);
  SplitRng zeta_rng = root.split(0);
  SplitRng beta_rng = root.split(1);
  SplitRng alpha_rng = root.split(2);
  SplitRng mask_rng = root.split(3);
  SplitRng noise_rng = root.split(4);

  std::size_t nu = spec.n_users, nq = spec.n_questions;
  std::vector<double> zeta(nu), beta(nq), alpha(nq);
  for (auto& z : zeta) z = spec.zeta_sd * zeta_rng.next_normal();
  double mean_z = 0.0;
  for (double z : zeta) mean_z += z;
  mean_z /= static_cast<double>(nu);
  for (auto& z : zeta) z -= mean_z;  // exact-mean-zero truth
  for (auto& b : beta) b = spec.beta_mean + spec.beta_sd * beta_rng.next_normal();
  for (auto& a : alpha)
    a = std::exp(spec.alpha_log_mean + spec.alpha_log_sd * alpha_rng.next_normal());

  // Missing-at-random mask; resample wholesale if a row or column comes up
  // empty (only plausible at tiny sizes or extreme missingness).
  std::vector<char> mask(nu * nq);
  bool ok = false;
  for (int attempt = 0; attempt < 100 && !ok; ++attempt) {
    std::vector<std::size_t> row_count(nu, 0), col_count(nq, 0);
    for (std::size_t i = 0; i < nu; ++i)
      for (std::size_t j = 0; j < nq; ++j) {
        bool observed = mask_rng.next_unit() >= spec.missingness;
        mask[i * nq + j] = observed;
        if (observed) {
          ++row_count[i];
          ++col_count[j];
        }
      }
    ok = std::all_of(row_count.begin(), row_count.end(), [](std::size_t c) { return c > 0; }) &&
         std::all_of(col_count.begin(), col_count.end(), [](std::size_t c) { return c > 0; });
  }
  if (!ok) throw ValidationError("could not draw a mask without empty rows/columns");

  ResponseMatrix& m = truth.matrix;
  m.label = {1, Correctness::any};
  for (std::size_t i = 0; i < nu; ++i) m.users.push_back(make_id("u", i, nu));
  for (std::size_t j = 0; j < nq; ++j) m.questions.push_back(make_id("q", j, nq));
  for (std::size_t i = 0; i < nu; ++i)
    for (std::size_t j = 0; j < nq; ++j) {
      if (!mask[i * nq + j]) continue;
      double ln_t = beta[j] + zeta[i] + noise_rng.next_normal() / alpha[j];
      double t = quantize_time(std::exp(ln_t));
      truth.response_times.push_back(t);
      m.entries.push_back({static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(j),
                           std::log(t)});
    }

  for (std::size_t j = 0; j < nq; ++j) {
    truth.params.alpha[m.questions[j]] = alpha[j];
    truth.params.beta[m.questions[j]] = beta[j];
  }
  for (std::size_t i = 0; i < nu; ++i) truth.params.zeta[m.users[i]] = zeta[i];
  return truth;
}

EventLog emit_event_log(const SynthTruth& truth, std::size_t pages_per_course,
                        std::size_t questions_per_page) {
  const ResponseMatrix& m = truth.matrix;
  if (pages_per_course * questions_per_page != m.n_questions())
    throw ConfigError("pages_per_course * questions_per_page must equal the question count");

  // per-user (column, time) lists; entries are already (row, col)-sorted
  std::vector<std::vector<std::pair<std::uint32_t, double>>> by_user(m.n_users());
  for (std::size_t k = 0; k < m.entries.size(); ++k)
    by_user[m.entries[k].row].push_back({m.entries[k].col, truth.response_times[k]});

  const std::string& course = truth.spec.course_id;
  std::vector<RawEvent> events;
  for (std::size_t i = 0; i < m.n_users(); ++i) {
    const std::string& user = m.users[i];
    double cursor = 0.0;
    std::size_t next = 0;  // index into by_user[i]
    for (std::size_t page = 0; page < pages_per_course; ++page) {
      std::string page_id = make_id("p", page, pages_per_course);
      events.push_back({EventKind::page_load, course, user, page_id, "", cursor, 0.0});
      std::uint32_t first_col = static_cast<std::uint32_t>(page * questions_per_page);
      std::uint32_t last_col = static_cast<std::uint32_t>(first_col + questions_per_page);
      while (next < by_user[i].size() && by_user[i][next].first < last_col) {
        cursor += by_user[i][next].second;  // dyadic grid keeps these sums exact
        events.push_back({EventKind::submit, course, user, page_id,
                          m.questions[by_user[i][next].first], cursor, 1.0});
        ++next;
      }
      cursor += 16.0;  // page gap
    }
  }
  return sort_and_validate(std::move(events));
}

CourseStructure synth_structure(const SynthTruth& truth, std::size_t pages_per_course,
                                std::size_t questions_per_page) {
  const ResponseMatrix& m = truth.matrix;
  if (pages_per_course * questions_per_page != m.n_questions())
    throw ConfigError("pages_per_course * questions_per_page must equal the question count");
  CourseStructure s;
  s.course_id = truth.spec.course_id;
  for (std::size_t page = 0; page < pages_per_course; ++page) {
    std::string chapter = make_id("ch", page, pages_per_course);
    std::string page_id = make_id("p", page, pages_per_course);
    s.chapters.push_back(chapter);
    s.page_chapter[page_id] = chapter;
    for (std::size_t k = 0; k < questions_per_page; ++k)
      s.question_page[m.questions[page * questions_per_page + k]] = page_id;
  }
  return s;
}

namespace {

RecoveryReport::Entry recover_entry(const std::map<std::string, double>& truth,
                                    const std::map<std::string, double>& fitted,
                                    const char* what) {
  std::vector<double> a, b;
  for (const auto& [id, value] : truth) {
    auto it = fitted.find(id);
    if (it == fitted.end())
      throw ValidationError(std::string("fitted params missing ") + what + " '" + id + "'");
    a.push_back(value);
    b.push_back(it->second);
  }
  RecoveryReport::Entry entry;
  entry.corr = pearson_with_se(a, b);
  double ss = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) ss += (a[k] - b[k]) * (a[k] - b[k]);
  entry.rmse = std::sqrt(ss / static_cast<double>(a.size()));
  return entry;
}

}  // namespace

RecoveryReport recovery_report(const SynthTruth& truth, const ModelParams& fitted) {
  ModelParams t = normalize_identifiability(truth.params);
  ModelParams f = normalize_identifiability(fitted);
  RecoveryReport report;
  report.zeta = recover_entry(t.zeta, f.zeta, "zeta");
  report.beta = recover_entry(t.beta, f.beta, "beta");
  report.alpha = recover_entry(t.alpha, f.alpha, "alpha");
  return report;
}

}  // namespace rtm
