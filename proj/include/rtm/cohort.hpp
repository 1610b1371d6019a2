#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "rtm/extraction.hpp"

namespace rtm {

struct CourseStructure {
  std::string course_id;
  std::vector<std::string> chapters;                  // ordered
  std::map<std::string, std::string> page_chapter;    // page -> chapter
  std::map<std::string, std::string> question_page;   // question -> page
};

CourseStructure load_structure_json(std::istream& in);
void write_structure_json(const CourseStructure& structure, std::ostream& out);

struct QualificationConfig {
  double explored_fraction = 0.5;
  int max_attempts = 5;
  int min_users_per_question = 10;
  int min_questions_per_user = 10;
  double full_credit_threshold = 1.0;

  void validate() const;  // throws ConfigError
};

enum class Correctness { any, correct, incorrect };

struct SubsetLabel {
  int attempt = 1;  // 1 or 2
  Correctness correctness = Correctness::any;

  std::string str() const;  // "1_any", "2_incorrect", ...
  static SubsetLabel parse(const std::string& s);
  auto operator<=>(const SubsetLabel&) const = default;
};

const std::array<SubsetLabel, 6>& all_subsets();

struct MatrixEntry {
  std::uint32_t row = 0;  // user index
  std::uint32_t col = 0;  // question index
  double log_time = 0.0;  // ln of seconds

  friend bool operator==(const MatrixEntry&, const MatrixEntry&) = default;
};

// Sparse user x question matrix of log response times for one data subset.
struct ResponseMatrix {
  SubsetLabel label;
  std::vector<std::string> users;      // row -> user_id
  std::vector<std::string> questions;  // col -> question_id
  std::vector<MatrixEntry> entries;    // sorted by (row, col), one per cell
  bool unfittable = false;
  std::map<std::string, std::size_t> tallies;

  std::size_t n_users() const { return users.size(); }
  std::size_t n_questions() const { return questions.size(); }
  std::size_t n_observations() const { return entries.size(); }
};

// correct <=> score_fraction >= full_credit_threshold
void dichotomize(std::vector<ResponseObservation>& observations,
                 const QualificationConfig& cfg);

struct ExploredResult {
  std::set<std::string> users;
  std::size_t unmapped_pages = 0;
};

// Users whose page_load events touch at least
// ceil(explored_fraction * chapter count) distinct chapters.
ExploredResult filter_explored(const EventLog& log, const CourseStructure& structure,
                               const QualificationConfig& cfg);

std::vector<ResponseObservation> restrict_to_users(std::vector<ResponseObservation> observations,
                                                   const std::set<std::string>& users);

// Removes every observation of a (user, question) pair whose total submit
// count exceeds max_attempts.
std::vector<ResponseObservation> apply_attempt_cap(
    std::vector<ResponseObservation> observations,
    const std::map<UserQuestion, int>& attempt_counts, const QualificationConfig& cfg);

// Removes attempt-2 observations whose paired attempt-1 was correct, and
// attempt-2 observations with no attempt-1 on record (tallied).
std::vector<ResponseObservation> drop_post_correct_seconds(
    std::vector<ResponseObservation> observations, const QualificationConfig& cfg,
    std::map<std::string, std::size_t>* tallies = nullptr);

// Iterates the >=min_users / >=min_questions pruning to a fixed point and
// builds the matrix from the survivors. If no user in the input reaches
// min_questions_per_user, the user cutoff is lowered to the maximum
// encountered count.
ResponseMatrix qualify_matrix(const std::vector<ResponseObservation>& observations,
                              const QualificationConfig& cfg, SubsetLabel label);

std::map<SubsetLabel, std::vector<ResponseObservation>> partition_subsets(
    const std::vector<ResponseObservation>& observations);

// The up-to-six (attempt x correctness) matrices, each independently qualified.
std::vector<ResponseMatrix> build_subsets(const std::vector<ResponseObservation>& observations,
                                          const QualificationConfig& cfg);

// Full preparation pipeline: dichotomize, explored-user filter, attempt cap,
// post-correct second drop.
struct PreparedObservations {
  std::vector<ResponseObservation> observations;
  std::map<std::string, std::size_t> tallies;
};
PreparedObservations prepare_observations(const ExtractionResult& extraction,
                                          const EventLog& log,
                                          const CourseStructure& structure,
                                          const QualificationConfig& cfg);

// Sparse triplet CSV (user_id,question_id,ln_time) plus a JSON sidecar with
// the subset label, dimensions, and tallies.
void write_matrix_csv(const ResponseMatrix& matrix, std::ostream& out);
void write_matrix_sidecar_json(const ResponseMatrix& matrix, std::ostream& out);
ResponseMatrix read_matrix(std::istream& csv_in, std::istream& sidecar_in);

}  // namespace rtm
