#include <doctest.h>

#include <sstream>

#include "rtm/error.hpp"
#include "rtm/events.hpp"
#include "rtm/rng.hpp"

using namespace rtm;

namespace {

RawEvent load_event(const std::string& user, const std::string& page, double ts,
                    const std::string& course = "c1") {
  return {EventKind::page_load, course, user, page, "", ts, 0.0};
}

RawEvent submit_event(const std::string& user, const std::string& page, const std::string& q,
                      double ts, double score = 1.0, const std::string& course = "c1") {
  return {EventKind::submit, course, user, page, q, ts, score};
}

}  // namespace

TEST_CASE("parse_events: empty stream gives empty log") {
  std::istringstream in("");
  EventLog log = parse_events(in);
  CHECK(log.events.empty());
  CHECK(log.rejected_total() == 0);
}

TEST_CASE("parse_events: well-formed submit line") {
  std::istringstream in(
      R"({"kind":"submit","course_id":"c1","user_id":"u1","page_id":"p1","question_id":"q1","timestamp":100.0,"score_fraction":1.0})"
      "\n");
  EventLog log = parse_events(in);
  REQUIRE(log.events.size() == 1);
  const RawEvent& ev = log.events[0];
  CHECK(ev.kind == EventKind::submit);
  CHECK(ev.course_id == "c1");
  CHECK(ev.user_id == "u1");
  CHECK(ev.page_id == "p1");
  CHECK(ev.question_id == "q1");
  CHECK(ev.timestamp == 100.0);
  CHECK(ev.score_fraction == 1.0);
  CHECK(log.course_id == "c1");
}

TEST_CASE("parse_events: rejection reasons") {
  SUBCASE("non-numeric timestamp") {
    std::istringstream in(
        R"({"kind":"submit","course_id":"c1","user_id":"u1","page_id":"p1","question_id":"q1","timestamp":"abc","score_fraction":1.0})"
        "\n");
    EventLog log = parse_events(in);
    CHECK(log.events.empty());
    CHECK(log.rejected.at("bad_timestamp") == 1);
  }
  SUBCASE("negative timestamp") {
    std::istringstream in(
        R"({"kind":"page_load","course_id":"c1","user_id":"u1","page_id":"p1","timestamp":-4.0})"
        "\n");
    CHECK(parse_events(in).rejected.at("bad_timestamp") == 1);
  }
  SUBCASE("unknown kind") {
    std::istringstream in(
        R"({"kind":"hover","course_id":"c1","user_id":"u1","page_id":"p1","timestamp":1.0})"
        "\n");
    CHECK(parse_events(in).rejected.at("unknown_kind") == 1);
  }
  SUBCASE("missing required field") {
    std::istringstream in(
        R"({"kind":"page_load","course_id":"c1","user_id":"u1","timestamp":1.0})"
        "\n");
    CHECK(parse_events(in).rejected.at("missing_field") == 1);
  }
  SUBCASE("score outside [0,1]") {
    std::istringstream in(
        R"({"kind":"submit","course_id":"c1","user_id":"u1","page_id":"p1","question_id":"q1","timestamp":1.0,"score_fraction":1.5})"
        "\n");
    CHECK(parse_events(in).rejected.at("bad_score") == 1);
  }
  SUBCASE("submit with no score") {
    std::istringstream in(
        R"({"kind":"submit","course_id":"c1","user_id":"u1","page_id":"p1","question_id":"q1","timestamp":1.0})"
        "\n");
    CHECK(parse_events(in).rejected.at("missing_field") == 1);
  }
  SUBCASE("page_load carrying submit fields") {
    std::istringstream in(
        R"({"kind":"page_load","course_id":"c1","user_id":"u1","page_id":"p1","question_id":"q1","timestamp":1.0})"
        "\n");
    CHECK(parse_events(in).rejected.at("page_load_with_submit_fields") == 1);
  }
  SUBCASE("unparseable line") {
    std::istringstream in("{nope\n");
    CHECK(parse_events(in).rejected.at("bad_json") == 1);
  }
  SUBCASE("null score on page_load is fine") {
    std::istringstream in(
        R"({"kind":"page_load","course_id":"c1","user_id":"u1","page_id":"p1","timestamp":1.0,"score_fraction":null,"question_id":null})"
        "\n");
    EventLog log = parse_events(in);
    CHECK(log.events.size() == 1);
    CHECK(log.rejected_total() == 0);
  }
}

TEST_CASE("parse_events: accepted + rejected = line count") {
  std::string lines =
      R"({"kind":"page_load","course_id":"c1","user_id":"u1","page_id":"p1","timestamp":1.0})"
      "\n"
      "garbage\n"
      R"({"kind":"submit","course_id":"c1","user_id":"u1","page_id":"p1","question_id":"q1","timestamp":2.0,"score_fraction":0.5})"
      "\n"
      R"({"kind":"submit","course_id":"c1","user_id":"u1","page_id":"p1","question_id":"q1","timestamp":"x","score_fraction":0.5})"
      "\n"
      "\n";  // blank line counts as a record attempt
  std::istringstream in(lines);
  EventLog log = parse_events(in);
  CHECK(log.events.size() == 2);
  CHECK(log.rejected_total() == 3);
  CHECK(log.events.size() + log.rejected_total() == 5);
}

TEST_CASE("sort_and_validate: ordering and ties") {
  SUBCASE("already sorted input is unchanged") {
    std::vector<RawEvent> events = {load_event("u1", "p1", 1.0), submit_event("u1", "p1", "q1", 2.0)};
    EventLog log = sort_and_validate(events);
    CHECK(log.events == events);
  }
  SUBCASE("sorts by timestamp within user") {
    std::vector<RawEvent> events = {submit_event("u1", "p1", "q1", 5.0),
                                    load_event("u1", "p1", 3.0)};
    EventLog log = sort_and_validate(events);
    REQUIRE(log.events.size() == 2);
    CHECK(log.events[0].kind == EventKind::page_load);
    CHECK(log.events[0].timestamp == 3.0);
    CHECK(log.events[1].timestamp == 5.0);
  }
  SUBCASE("page_load wins an exact timestamp tie") {
    std::vector<RawEvent> events = {submit_event("u1", "p1", "q1", 7.0),
                                    load_event("u1", "p1", 7.0)};
    EventLog log = sort_and_validate(events);
    CHECK(log.events[0].kind == EventKind::page_load);
    CHECK(log.events[1].kind == EventKind::submit);
  }
  SUBCASE("idempotent") {
    std::vector<RawEvent> events = {submit_event("u2", "p1", "q1", 5.0),
                                    load_event("u1", "p2", 9.0), load_event("u2", "p1", 1.0)};
    EventLog once = sort_and_validate(events);
    EventLog twice = sort_and_validate(once.events);
    CHECK(once.events == twice.events);
  }
  SUBCASE("mixed course ids are fatal and named") {
    std::vector<RawEvent> events = {load_event("u1", "p1", 1.0, "c1"),
                                    load_event("u1", "p1", 2.0, "c2")};
    CHECK_THROWS_WITH_AS(sort_and_validate(events), doctest::Contains("c2"), ValidationError);
  }
}

TEST_CASE("serialize then parse is the identity on valid logs") {
  SplitRng rng(99);
  std::vector<RawEvent> events;
  for (int i = 0; i < 60; ++i) {
    std::string user = "u" + std::to_string(rng.next_u64() % 5);
    std::string page = "p" + std::to_string(rng.next_u64() % 3);
    double ts = std::floor(rng.next_unit() * 1e6) / 8.0;
    if (rng.next_unit() < 0.4) {
      events.push_back(load_event(user, page, ts));
    } else {
      std::string q = "q" + std::to_string(rng.next_u64() % 7);
      double score = (rng.next_u64() % 5) / 4.0;
      events.push_back(submit_event(user, page, q, ts, score));
    }
  }
  EventLog log = sort_and_validate(events);
  std::ostringstream out;
  serialize_events(log, out);
  std::istringstream in(out.str());
  EventLog reparsed = parse_events(in);
  CHECK(reparsed.course_id == log.course_id);
  CHECK(reparsed.events == log.events);
  CHECK(reparsed.rejected_total() == 0);
}

TEST_CASE("parse_courses groups by course") {
  std::ostringstream src;
  EventLog tmp;
  tmp.events = {load_event("u1", "p1", 1.0, "cB"), load_event("u1", "p1", 1.0, "cA")};
  tmp.course_id = "ignored";
  // serialize both in one stream
  for (const auto& ev : tmp.events) {
    EventLog one;
    one.course_id = ev.course_id;
    one.events = {ev};
    serialize_events(one, src);
  }
  std::istringstream in(src.str());
  MultiCourseParse parsed = parse_courses(in);
  REQUIRE(parsed.logs.size() == 2);
  CHECK(parsed.logs[0].course_id == "cA");
  CHECK(parsed.logs[1].course_id == "cB");
}

TEST_CASE("rejection summary JSON mentions every reason") {
  std::istringstream in("oops\n");
  EventLog log = parse_events(in);
  std::string summary = rejection_summary_json(log);
  CHECK(summary.find("bad_json") != std::string::npos);
  CHECK(summary.find("\"accepted\": 0") != std::string::npos);
}
