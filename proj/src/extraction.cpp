#include "rtm/extraction.hpp"

#include <algorithm>
#include <ostream>

#include "rtm/csv.hpp"
#include "rtm/error.hpp"

namespace rtm {

SessionBuild build_page_sessions(const EventLog& log) {
  SessionBuild out;
  std::map<UserQuestion, int> seen;  // attempt counter per (user, question)
  // index into out.sessions of the open session per (user, page)
  std::map<std::pair<std::string, std::string>, std::size_t> open_session;

  for (const auto& ev : log.events) {
    if (ev.kind == EventKind::page_load) {
      open_session[{ev.user_id, ev.page_id}] = out.sessions.size();
      out.sessions.push_back({ev.user_id, ev.page_id, ev.timestamp, {}});
      continue;
    }
    UserQuestion uq{ev.user_id, ev.question_id};
    int attempt_no = ++seen[uq];
    out.attempts[uq].push_back({ev.timestamp, ev.score_fraction});

    auto it = open_session.find({ev.user_id, ev.page_id});
    if (it == open_session.end()) {
      ++out.tallies["orphan_submits"];
      continue;
    }
    out.sessions[it->second].submits.push_back(
        {ev.timestamp, ev.question_id, ev.score_fraction, attempt_no});
  }
  return out;
}

ExtractionResult extract_response_times(const std::vector<PageSession>& sessions,
                                        const AttemptIndex& attempts) {
  ExtractionResult out;

  // First attempts: walk each session chain; the predecessor advances over
  // every submit, whatever its question or attempt number.
  for (const auto& session : sessions) {
    double prev_ts = session.load_timestamp;
    for (const auto& sub : session.submits) {
      if (sub.attempt_no == 1) {
        double dt = sub.timestamp - prev_ts;
        if (dt > 0.0) {
          out.observations.push_back({session.user_id, sub.question_id, 1, dt,
                                      sub.score_fraction >= 1.0, sub.score_fraction,
                                      sub.timestamp});
        } else {
          ++out.tallies["dropped_nonpositive_dt"];
        }
      }
      prev_ts = sub.timestamp;
    }
  }

  // Second attempts: first-to-second submit difference, page boundaries ignored.
  for (const auto& [uq, submits] : attempts) {
    out.attempt_counts[uq] = static_cast<int>(submits.size());
    if (submits.size() < 2) continue;
    const SubmitRecord& first = submits[0];
    const SubmitRecord& second = submits[1];
    if (second.timestamp < first.timestamp) {
      ++out.tallies["out_of_order"];
      continue;
    }
    double dt = second.timestamp - first.timestamp;
    if (dt > 0.0) {
      out.observations.push_back({uq.first, uq.second, 2, dt,
                                  second.score_fraction >= 1.0, second.score_fraction,
                                  second.timestamp});
    } else {
      ++out.tallies["dropped_nonpositive_dt"];
    }
  }

  std::sort(out.observations.begin(), out.observations.end(),
            [](const ResponseObservation& a, const ResponseObservation& b) {
              return std::tie(a.user_id, a.question_id, a.attempt) <
                     std::tie(b.user_id, b.question_id, b.attempt);
            });
  return out;
}

ExtractionResult extract_from_log(const EventLog& log) {
  SessionBuild build = build_page_sessions(log);
  ExtractionResult result = extract_response_times(build.sessions, build.attempts);
  for (const auto& [reason, count] : build.tallies) result.tallies[reason] += count;
  return result;
}

void write_observations_csv(const std::vector<ResponseObservation>& observations,
                            std::ostream& out) {
  out << "user_id,question_id,attempt,response_time_s,correct,submit_ts\n";
  for (const auto& obs : observations) {
    csv::write_row(out, {obs.user_id, obs.question_id, std::to_string(obs.attempt),
                         csv::format_double(obs.response_time), obs.correct ? "1" : "0",
                         csv::format_double(obs.submit_timestamp)});
  }
}

}  // namespace rtm
