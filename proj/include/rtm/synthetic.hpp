#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rtm/cohort.hpp"
#include "rtm/diagnostics.hpp"
#include "rtm/model.hpp"

namespace rtm {

struct SynthSpec {
  std::size_t n_users = 500;
  std::size_t n_questions = 60;
  double missingness = 0.25;
  double zeta_sd = 1.16;
  double beta_mean = 5.1;
  double beta_sd = 1.0;
  double alpha_log_mean = -0.6713856887784326;  // ln 0.511
  double alpha_log_sd = 0.3;
  std::uint64_t seed = 1;
  std::string course_id = "synthetic";

  void validate() const;  // throws ConfigError
};

// Ground truth from the generative model: ln t = beta_q + zeta_u + z/alpha_q
// with standard-normal z. Sampled times are snapped to a dyadic ~1 ms grid so
// that event-log timestamps reconstruct them exactly; response_times[k] is
// the time behind matrix.entries[k].
struct SynthTruth {
  SynthSpec spec;
  ModelParams params;
  ResponseMatrix matrix;  // subset label {1, any}
  std::vector<double> response_times;
};

SynthTruth generate(const SynthSpec& spec);

// One page_load per (user, page), then first-attempt submits in question
// order, spaced so the chain rule recovers each sampled time exactly. All
// submits are correct first attempts.
EventLog emit_event_log(const SynthTruth& truth, std::size_t pages_per_course,
                        std::size_t questions_per_page);

CourseStructure synth_structure(const SynthTruth& truth, std::size_t pages_per_course,
                                std::size_t questions_per_page);

struct RecoveryReport {
  struct Entry {
    Correlation corr;
    double rmse = 0.0;
  };
  Entry zeta, beta, alpha;
};

// Pearson r and RMSE between truth and fit, per parameter family, after
// identifiability normalization of both sides.
RecoveryReport recovery_report(const SynthTruth& truth, const ModelParams& fitted);

}  // namespace rtm
