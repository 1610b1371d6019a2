#pragma once

#include <cstddef>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

namespace rtm {

enum class EventKind { page_load, submit };

struct RawEvent {
  EventKind kind = EventKind::page_load;
  std::string course_id;
  std::string user_id;
  std::string page_id;
  std::string question_id;      // submit only, empty for page_load
  double timestamp = 0.0;       // seconds since epoch, UTC
  double score_fraction = 0.0;  // submit only, in [0, 1]

  friend bool operator==(const RawEvent&, const RawEvent&) = default;
};

// One course's events, sorted by (user_id, timestamp). On exact timestamp
// ties a page_load orders before a submit, so a submit at the instant of its
// page load yields dt = 0 (dropped later by the positivity rule).
struct EventLog {
  std::string course_id;
  std::vector<RawEvent> events;
  std::map<std::string, std::size_t> rejected;  // reason -> count

  std::size_t rejected_total() const;
};

// Parses JSON Lines. Malformed lines are tallied per reason and skipped,
// never fatal. The result is sorted and validated; a stream mixing several
// course_ids is a validation error (use parse_courses for those).
EventLog parse_events(std::istream& in);

struct MultiCourseParse {
  std::vector<EventLog> logs;  // one per course, ordered by course_id
  std::map<std::string, std::size_t> rejected;
};
MultiCourseParse parse_courses(std::istream& in);

EventLog sort_and_validate(std::vector<RawEvent> events);

void serialize_events(const EventLog& log, std::ostream& out);

std::string rejection_summary_json(const EventLog& log);

}  // namespace rtm
