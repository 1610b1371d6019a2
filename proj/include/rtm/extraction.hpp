#pragma once

#include <iosfwd>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "rtm/events.hpp"

namespace rtm {

struct ResponseObservation {
  std::string user_id;
  std::string question_id;
  int attempt = 1;              // 1 or 2; later attempts never produce observations
  double response_time = 0.0;   // seconds, always > 0
  bool correct = false;
  double score_fraction = 0.0;  // raw score, kept so the cohort stage can re-dichotomize
  double submit_timestamp = 0.0;

  friend bool operator==(const ResponseObservation&, const ResponseObservation&) = default;
};

// All submits a user made while one page load was current, in time order.
// The chain t_0 < t_1 < ... < t_p contains every submit of the session
// regardless of question or attempt number.
struct PageSession {
  struct Submit {
    double timestamp = 0.0;
    std::string question_id;
    double score_fraction = 0.0;
    int attempt_no = 0;  // global attempt index of this submit for (user, question)
  };
  std::string user_id;
  std::string page_id;
  double load_timestamp = 0.0;
  std::vector<Submit> submits;
};

using UserQuestion = std::pair<std::string, std::string>;

// Every submit per (user, question) across the whole log, in time order.
struct SubmitRecord {
  double timestamp = 0.0;
  double score_fraction = 0.0;
};
using AttemptIndex = std::map<UserQuestion, std::vector<SubmitRecord>>;

struct SessionBuild {
  std::vector<PageSession> sessions;
  AttemptIndex attempts;
  std::map<std::string, std::size_t> tallies;  // orphan_submits, ...
};

struct ExtractionResult {
  std::vector<ResponseObservation> observations;  // sorted by (user, question, attempt)
  std::map<UserQuestion, int> attempt_counts;     // total submits per pair
  std::map<std::string, std::size_t> tallies;
};

// Attributes each submit to the most recent preceding page_load of its page
// by the same user. A reload of the same page starts a new session.
SessionBuild build_page_sessions(const EventLog& log);

// First attempts use the within-session chain rule (t_i - t_{i-1}); second
// attempts use the difference of the pair's first two submit timestamps,
// page boundaries ignored. Non-positive elapsed times are dropped and
// tallied. No upper timeout is applied.
ExtractionResult extract_response_times(const std::vector<PageSession>& sessions,
                                        const AttemptIndex& attempts);

ExtractionResult extract_from_log(const EventLog& log);

// Header: user_id,question_id,attempt,response_time_s,correct,submit_ts
void write_observations_csv(const std::vector<ResponseObservation>& observations,
                            std::ostream& out);

}  // namespace rtm
