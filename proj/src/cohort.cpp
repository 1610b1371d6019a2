#include "rtm/cohort.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>

#include <json.hpp>

#include "rtm/csv.hpp"
#include "rtm/error.hpp"

namespace rtm {

using nlohmann::json;

CourseStructure load_structure_json(std::istream& in) {
  json j = json::parse(in, nullptr, /*allow_exceptions=*/false);
  if (j.is_discarded() || !j.is_object())
    throw ValidationError("course structure is not a JSON object");
  CourseStructure s;
  try {
    s.course_id = j.at("course_id").get<std::string>();
    s.chapters = j.at("chapters").get<std::vector<std::string>>();
    s.page_chapter = j.at("pages").get<std::map<std::string, std::string>>();
    s.question_page = j.at("questions").get<std::map<std::string, std::string>>();
  } catch (const json::exception& e) {
    throw ValidationError(std::string("bad course structure: ") + e.what());
  }
  std::set<std::string> chapter_set(s.chapters.begin(), s.chapters.end());
  for (const auto& [page, chapter] : s.page_chapter)
    if (!chapter_set.count(chapter))
      throw ValidationError("page '" + page + "' maps to unknown chapter '" + chapter + "'");
  for (const auto& [question, page] : s.question_page)
    if (!s.page_chapter.count(page))
      throw ValidationError("question '" + question + "' maps to unknown page '" + page + "'");
  return s;
}

void write_structure_json(const CourseStructure& structure, std::ostream& out) {
  json j;
  j["course_id"] = structure.course_id;
  j["chapters"] = structure.chapters;
  j["pages"] = structure.page_chapter;
  j["questions"] = structure.question_page;
  out << j.dump(2) << '\n';
}

void QualificationConfig::validate() const {
  if (!(explored_fraction > 0.0 && explored_fraction <= 1.0))
    throw ConfigError("explored_fraction must be in (0, 1]");
  if (max_attempts <= 0) throw ConfigError("max_attempts must be positive");
  if (min_users_per_question <= 0) throw ConfigError("min_users_per_question must be positive");
  if (min_questions_per_user <= 0) throw ConfigError("min_questions_per_user must be positive");
  if (full_credit_threshold <= 0.0) throw ConfigError("full_credit_threshold must be positive");
}

std::string SubsetLabel::str() const {
  std::string c = correctness == Correctness::any       ? "any"
                  : correctness == Correctness::correct ? "correct"
                                                        : "incorrect";
  return std::to_string(attempt) + "_" + c;
}

SubsetLabel SubsetLabel::parse(const std::string& s) {
  for (const auto& label : all_subsets())
    if (label.str() == s) return label;
  throw ValidationError("unknown subset label '" + s + "'");
}

const std::array<SubsetLabel, 6>& all_subsets() {
  static const std::array<SubsetLabel, 6> labels = {{
      {1, Correctness::any},
      {1, Correctness::correct},
      {1, Correctness::incorrect},
      {2, Correctness::any},
      {2, Correctness::correct},
      {2, Correctness::incorrect},
  }};
  return labels;
}

void dichotomize(std::vector<ResponseObservation>& observations,
                 const QualificationConfig& cfg) {
  for (auto& obs : observations) obs.correct = obs.score_fraction >= cfg.full_credit_threshold;
}

ExploredResult filter_explored(const EventLog& log, const CourseStructure& structure,
                               const QualificationConfig& cfg) {
  if (structure.chapters.empty())
    throw ConfigError("course structure has no chapters; explored-user rule undefined");
  auto required = static_cast<std::size_t>(
      std::ceil(cfg.explored_fraction * static_cast<double>(structure.chapters.size())));
  if (required == 0) required = 1;

  std::map<std::string, std::set<std::string>> visited;  // user -> chapters
  ExploredResult out;
  for (const auto& ev : log.events) {
    if (ev.kind != EventKind::page_load) continue;
    auto it = structure.page_chapter.find(ev.page_id);
    if (it == structure.page_chapter.end()) {
      ++out.unmapped_pages;
      continue;
    }
    visited[ev.user_id].insert(it->second);
  }
  for (const auto& [user, chapters] : visited)
    if (chapters.size() >= required) out.users.insert(user);
  return out;
}

std::vector<ResponseObservation> restrict_to_users(std::vector<ResponseObservation> observations,
                                                   const std::set<std::string>& users) {
  std::erase_if(observations,
                [&](const ResponseObservation& o) { return !users.count(o.user_id); });
  return observations;
}

std::vector<ResponseObservation> apply_attempt_cap(
    std::vector<ResponseObservation> observations,
    const std::map<UserQuestion, int>& attempt_counts, const QualificationConfig& cfg) {
  std::erase_if(observations, [&](const ResponseObservation& o) {
    auto it = attempt_counts.find({o.user_id, o.question_id});
    return it != attempt_counts.end() && it->second > cfg.max_attempts;
  });
  return observations;
}

std::vector<ResponseObservation> drop_post_correct_seconds(
    std::vector<ResponseObservation> observations, const QualificationConfig& cfg,
    std::map<std::string, std::size_t>* tallies) {
  (void)cfg;  // correctness is already dichotomized with cfg's threshold
  std::map<UserQuestion, bool> first_correct;
  for (const auto& o : observations)
    if (o.attempt == 1) first_correct[{o.user_id, o.question_id}] = o.correct;

  std::size_t post_correct = 0, no_first = 0;
  std::erase_if(observations, [&](const ResponseObservation& o) {
    if (o.attempt != 2) return false;
    auto it = first_correct.find({o.user_id, o.question_id});
    if (it == first_correct.end()) {
      ++no_first;
      return true;
    }
    if (it->second) {
      ++post_correct;
      return true;
    }
    return false;
  });
  if (tallies) {
    (*tallies)["dropped_post_correct_second"] += post_correct;
    (*tallies)["dropped_second_without_first"] += no_first;
  }
  return observations;
}

ResponseMatrix qualify_matrix(const std::vector<ResponseObservation>& observations,
                              const QualificationConfig& cfg, SubsetLabel label) {
  std::map<std::string, std::set<std::string>> user_questions, question_users;
  for (const auto& o : observations) {
    user_questions[o.user_id].insert(o.question_id);
    question_users[o.question_id].insert(o.user_id);
  }

  // Footnote-5 rule: courses where nobody reaches the question minimum get
  // the cutoff lowered to the maximum encountered value.
  std::size_t max_per_user = 0;
  for (const auto& [user, questions] : user_questions)
    max_per_user = std::max(max_per_user, questions.size());
  auto user_cutoff = static_cast<std::size_t>(cfg.min_questions_per_user);
  if (max_per_user > 0 && max_per_user < user_cutoff) user_cutoff = max_per_user;
  auto question_cutoff = static_cast<std::size_t>(cfg.min_users_per_question);

  std::set<std::string> users, questions;
  for (const auto& [u, qs] : user_questions) users.insert(u);
  for (const auto& [q, us] : question_users) questions.insert(q);

  std::size_t pruned_users = 0, pruned_questions = 0;
  bool changed = true;
  while (changed) {
    changed = false;
    for (auto it = questions.begin(); it != questions.end();) {
      std::size_t n = 0;
      for (const auto& u : question_users[*it])
        if (users.count(u)) ++n;
      if (n < question_cutoff) {
        it = questions.erase(it);
        ++pruned_questions;
        changed = true;
      } else {
        ++it;
      }
    }
    for (auto it = users.begin(); it != users.end();) {
      std::size_t n = 0;
      for (const auto& q : user_questions[*it])
        if (questions.count(q)) ++n;
      if (n < user_cutoff) {
        it = users.erase(it);
        ++pruned_users;
        changed = true;
      } else {
        ++it;
      }
    }
  }

  ResponseMatrix m;
  m.label = label;
  m.users.assign(users.begin(), users.end());
  m.questions.assign(questions.begin(), questions.end());
  m.tallies["pruned_users"] = pruned_users;
  m.tallies["pruned_questions"] = pruned_questions;
  m.tallies["user_cutoff"] = user_cutoff;
  m.tallies["question_cutoff"] = question_cutoff;

  std::map<std::string, std::uint32_t> row, col;
  for (std::uint32_t i = 0; i < m.users.size(); ++i) row[m.users[i]] = i;
  for (std::uint32_t j = 0; j < m.questions.size(); ++j) col[m.questions[j]] = j;

  std::set<std::pair<std::uint32_t, std::uint32_t>> filled;
  for (const auto& o : observations) {
    auto ri = row.find(o.user_id);
    auto ci = col.find(o.question_id);
    if (ri == row.end() || ci == col.end()) continue;
    if (!filled.insert({ri->second, ci->second}).second) {
      ++m.tallies["duplicate_cell"];
      continue;
    }
    m.entries.push_back({ri->second, ci->second, std::log(o.response_time)});
  }
  std::sort(m.entries.begin(), m.entries.end(), [](const MatrixEntry& a, const MatrixEntry& b) {
    return std::tie(a.row, a.col) < std::tie(b.row, b.col);
  });
  m.unfittable = m.entries.empty();
  return m;
}

std::map<SubsetLabel, std::vector<ResponseObservation>> partition_subsets(
    const std::vector<ResponseObservation>& observations) {
  std::map<SubsetLabel, std::vector<ResponseObservation>> out;
  for (const auto& label : all_subsets()) out[label];  // emit empty subsets too
  for (const auto& o : observations) {
    if (o.attempt != 1 && o.attempt != 2) continue;
    out[{o.attempt, Correctness::any}].push_back(o);
    out[{o.attempt, o.correct ? Correctness::correct : Correctness::incorrect}].push_back(o);
  }
  return out;
}

std::vector<ResponseMatrix> build_subsets(const std::vector<ResponseObservation>& observations,
                                          const QualificationConfig& cfg) {
  std::vector<ResponseMatrix> out;
  auto parts = partition_subsets(observations);
  for (const auto& label : all_subsets()) out.push_back(qualify_matrix(parts[label], cfg, label));
  return out;
}

PreparedObservations prepare_observations(const ExtractionResult& extraction,
                                          const EventLog& log,
                                          const CourseStructure& structure,
                                          const QualificationConfig& cfg) {
  PreparedObservations out;
  out.tallies = extraction.tallies;

  std::vector<ResponseObservation> obs = extraction.observations;
  dichotomize(obs, cfg);

  ExploredResult explored = filter_explored(log, structure, cfg);
  out.tallies["unmapped_pages"] = explored.unmapped_pages;
  std::size_t before = obs.size();
  obs = restrict_to_users(std::move(obs), explored.users);
  out.tallies["dropped_unexplored_user_obs"] = before - obs.size();

  before = obs.size();
  obs = apply_attempt_cap(std::move(obs), extraction.attempt_counts, cfg);
  out.tallies["dropped_attempt_cap_obs"] = before - obs.size();

  obs = drop_post_correct_seconds(std::move(obs), cfg, &out.tallies);
  out.observations = std::move(obs);
  return out;
}

void write_matrix_csv(const ResponseMatrix& matrix, std::ostream& out) {
  out << "user_id,question_id,ln_time\n";
  for (const auto& e : matrix.entries)
    csv::write_row(out, {matrix.users[e.row], matrix.questions[e.col],
                         csv::format_double(e.log_time)});
}

void write_matrix_sidecar_json(const ResponseMatrix& matrix, std::ostream& out) {
  json j;
  j["subset"] = matrix.label.str();
  j["n_users"] = matrix.n_users();
  j["n_questions"] = matrix.n_questions();
  j["n_observations"] = matrix.n_observations();
  j["unfittable"] = matrix.unfittable;
  j["tallies"] = json::object();
  for (const auto& [k, v] : matrix.tallies) j["tallies"][k] = v;
  out << j.dump(2) << '\n';
}

ResponseMatrix read_matrix(std::istream& csv_in, std::istream& sidecar_in) {
  json j = json::parse(sidecar_in, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw ValidationError("bad matrix sidecar JSON");
  ResponseMatrix m;
  m.label = SubsetLabel::parse(j.at("subset").get<std::string>());
  m.unfittable = j.value("unfittable", false);
  if (j.contains("tallies"))
    for (const auto& [k, v] : j.at("tallies").items())
      m.tallies[k] = v.get<std::size_t>();

  std::string line;
  if (!std::getline(csv_in, line)) throw ValidationError("empty matrix CSV");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "user_id,question_id,ln_time")
    throw ValidationError("unexpected matrix CSV header: '" + line + "'");

  std::map<std::string, std::uint32_t> row, col;
  struct Triplet {
    std::string user, question;
    double ln_time;
  };
  std::vector<Triplet> triplets;
  while (std::getline(csv_in, line)) {
    if (line.empty()) continue;
    auto fields = csv::split_line(line);
    if (fields.size() != 3) throw ValidationError("matrix CSV row needs 3 fields");
    triplets.push_back({fields[0], fields[1], csv::parse_double(fields[2])});
  }
  for (const auto& t : triplets) {
    if (!row.count(t.user)) {
      row[t.user] = 0;
    }
    if (!col.count(t.question)) col[t.question] = 0;
  }
  for (auto& [user, idx] : row) {
    idx = static_cast<std::uint32_t>(m.users.size());
    m.users.push_back(user);
  }
  for (auto& [question, idx] : col) {
    idx = static_cast<std::uint32_t>(m.questions.size());
    m.questions.push_back(question);
  }
  for (const auto& t : triplets)
    m.entries.push_back({row[t.user], col[t.question], t.ln_time});
  std::sort(m.entries.begin(), m.entries.end(), [](const MatrixEntry& a, const MatrixEntry& b) {
    return std::tie(a.row, a.col) < std::tie(b.row, b.col);
  });
  if (m.entries.empty()) m.unfittable = true;
  return m;
}

}  // namespace rtm
