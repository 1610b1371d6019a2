#include "rtm/events.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <set>
#include <utility>

#include <json.hpp>

#include "rtm/error.hpp"

namespace rtm {

namespace {

using nlohmann::json;

// Returns the rejection reason, or empty string and fills `ev` on success.
std::string parse_line(const std::string& line, RawEvent& ev) {
  json j = json::parse(line, nullptr, /*allow_exceptions=*/false);
  if (j.is_discarded() || !j.is_object()) return "bad_json";

  auto str_field = [&](const char* name, std::string& out) -> bool {
    auto it = j.find(name);
    if (it == j.end() || it->is_null() || !it->is_string()) return false;
    out = it->get<std::string>();
    return true;
  };

  std::string kind;
  if (!str_field("kind", kind)) return "missing_field";
  if (kind == "page_load") {
    ev.kind = EventKind::page_load;
  } else if (kind == "submit") {
    ev.kind = EventKind::submit;
  } else {
    return "unknown_kind";
  }

  if (!str_field("course_id", ev.course_id) || ev.course_id.empty()) return "missing_field";
  if (!str_field("user_id", ev.user_id) || ev.user_id.empty()) return "missing_field";
  if (!str_field("page_id", ev.page_id) || ev.page_id.empty()) return "missing_field";

  auto ts = j.find("timestamp");
  if (ts == j.end() || ts->is_null()) return "missing_field";
  if (!ts->is_number()) return "bad_timestamp";
  ev.timestamp = ts->get<double>();
  if (!std::isfinite(ev.timestamp) || ev.timestamp < 0.0) return "bad_timestamp";

  auto qid = j.find("question_id");
  auto score = j.find("score_fraction");
  if (ev.kind == EventKind::submit) {
    if (qid == j.end() || qid->is_null() || !qid->is_string() || qid->get<std::string>().empty())
      return "missing_field";
    ev.question_id = qid->get<std::string>();
    if (score == j.end() || score->is_null()) return "missing_field";
    if (!score->is_number()) return "bad_score";
    ev.score_fraction = score->get<double>();
    if (!(ev.score_fraction >= 0.0 && ev.score_fraction <= 1.0)) return "bad_score";
  } else {
    bool has_question = qid != j.end() && !qid->is_null() &&
                        !(qid->is_string() && qid->get<std::string>().empty());
    bool has_score = score != j.end() && !score->is_null();
    if (has_question || has_score) return "page_load_with_submit_fields";
    ev.question_id.clear();
    ev.score_fraction = 0.0;
  }
  return {};
}

struct ParsedStream {
  std::vector<RawEvent> events;
  std::map<std::string, std::size_t> rejected;
};

ParsedStream parse_stream(std::istream& in) {
  ParsedStream out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    RawEvent ev;
    std::string reason = parse_line(line, ev);
    if (reason.empty())
      out.events.push_back(std::move(ev));
    else
      ++out.rejected[reason];
  }
  if (in.bad()) throw IoError("failed reading event stream");
  return out;
}

bool event_order(const RawEvent& a, const RawEvent& b) {
  if (a.user_id != b.user_id) return a.user_id < b.user_id;
  if (a.timestamp != b.timestamp) return a.timestamp < b.timestamp;
  return a.kind == EventKind::page_load && b.kind == EventKind::submit;
}

}  // namespace

std::size_t EventLog::rejected_total() const {
  std::size_t n = 0;
  for (const auto& [reason, count] : rejected) n += count;
  return n;
}

EventLog sort_and_validate(std::vector<RawEvent> events) {
  std::set<std::string> courses;
  for (const auto& ev : events) courses.insert(ev.course_id);
  if (courses.size() > 1) {
    std::string msg = "events mix course_ids:";
    for (const auto& c : courses) msg += " '" + c + "'";
    throw ValidationError(msg);
  }
  std::stable_sort(events.begin(), events.end(), event_order);
  EventLog log;
  log.course_id = courses.empty() ? std::string{} : *courses.begin();
  log.events = std::move(events);
  return log;
}

EventLog parse_events(std::istream& in) {
  ParsedStream parsed = parse_stream(in);
  EventLog log = sort_and_validate(std::move(parsed.events));
  log.rejected = std::move(parsed.rejected);
  return log;
}

MultiCourseParse parse_courses(std::istream& in) {
  ParsedStream parsed = parse_stream(in);
  std::map<std::string, std::vector<RawEvent>> by_course;
  for (auto& ev : parsed.events) by_course[ev.course_id].push_back(std::move(ev));
  MultiCourseParse out;
  out.rejected = std::move(parsed.rejected);
  for (auto& [course, events] : by_course) out.logs.push_back(sort_and_validate(std::move(events)));
  return out;
}

void serialize_events(const EventLog& log, std::ostream& out) {
  for (const auto& ev : log.events) {
    json j;
    j["kind"] = ev.kind == EventKind::submit ? "submit" : "page_load";
    j["course_id"] = ev.course_id;
    j["user_id"] = ev.user_id;
    j["page_id"] = ev.page_id;
    j["timestamp"] = ev.timestamp;
    if (ev.kind == EventKind::submit) {
      j["question_id"] = ev.question_id;
      j["score_fraction"] = ev.score_fraction;
    }
    out << j.dump() << '\n';
  }
}

std::string rejection_summary_json(const EventLog& log) {
  json j;
  j["course_id"] = log.course_id;
  j["accepted"] = log.events.size();
  j["rejected"] = json::object();
  for (const auto& [reason, count] : log.rejected) j["rejected"][reason] = count;
  j["rejected_total"] = log.rejected_total();
  return j.dump(2);
}

}  // namespace rtm
