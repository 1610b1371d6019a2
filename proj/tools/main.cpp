// Command-line front end: extract / qualify / fit / diagnose / compare /
// simulate / outcomes. Exit codes: 1 I/O, 2 validation, 3 configuration.
#include <atomic>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <mutex>
#include <optional>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "rtm/cohort.hpp"
#include "rtm/csv.hpp"
#include "rtm/diagnostics.hpp"
#include "rtm/error.hpp"
#include "rtm/events.hpp"
#include "rtm/extraction.hpp"
#include "rtm/model.hpp"
#include "rtm/regression.hpp"
#include "rtm/synthetic.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct RunConfig {
  std::string events_path;
  std::string structure_path;
  std::string records_path;
  std::string out_dir = "out";
  int jobs = 1;
  std::vector<rtm::SubsetLabel> subsets{rtm::all_subsets().begin(), rtm::all_subsets().end()};
  rtm::QualificationConfig qualification;
  rtm::FitConfig fit;
  rtm::SynthSpec synth;
  std::size_t pages_per_course = 20;
  std::size_t questions_per_page = 3;
};

void log_line(const std::string& msg) { std::fprintf(stderr, "[rtm] %s\n", msg.c_str()); }

template <typename T>
void maybe(const json& j, const char* key, T& out) {
  if (j.contains(key) && !j.at(key).is_null()) out = j.at(key).get<T>();
}

std::vector<rtm::SubsetLabel> parse_subset_list(const std::string& csv_list) {
  std::vector<rtm::SubsetLabel> out;
  std::stringstream ss(csv_list);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    try {
      out.push_back(rtm::SubsetLabel::parse(item));
    } catch (const rtm::ValidationError& e) {
      throw rtm::ConfigError(e.what());
    }
  }
  if (out.empty()) throw rtm::ConfigError("empty subset selection");
  return out;
}

void load_config_file(const std::string& path, RunConfig& cfg) {
  std::ifstream in(path);
  if (!in) throw rtm::IoError("cannot open config file: " + path);
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded() || !j.is_object())
    throw rtm::ConfigError("config file is not a JSON object: " + path);

  maybe(j, "events", cfg.events_path);
  maybe(j, "structure", cfg.structure_path);
  maybe(j, "records", cfg.records_path);
  maybe(j, "out", cfg.out_dir);
  maybe(j, "jobs", cfg.jobs);
  if (j.contains("subsets")) {
    cfg.subsets.clear();
    for (const auto& s : j.at("subsets")) {
      try {
        cfg.subsets.push_back(rtm::SubsetLabel::parse(s.get<std::string>()));
      } catch (const rtm::ValidationError& e) {
        throw rtm::ConfigError(e.what());
      }
    }
  }
  if (j.contains("qualification")) {
    const json& q = j.at("qualification");
    maybe(q, "explored_fraction", cfg.qualification.explored_fraction);
    maybe(q, "max_attempts", cfg.qualification.max_attempts);
    maybe(q, "min_users_per_question", cfg.qualification.min_users_per_question);
    maybe(q, "min_questions_per_user", cfg.qualification.min_questions_per_user);
    maybe(q, "full_credit_threshold", cfg.qualification.full_credit_threshold);
  }
  if (j.contains("fit")) {
    const json& f = j.at("fit");
    maybe(f, "rel_tol", cfg.fit.rel_tol);
    maybe(f, "max_iter", cfg.fit.max_iter);
    maybe(f, "alpha_cap", cfg.fit.alpha_cap);
    maybe(f, "alpha_floor", cfg.fit.alpha_floor);
    maybe(f, "grad_tol", cfg.fit.grad_tol);
    if (f.contains("init")) {
      std::string init = f.at("init").get<std::string>();
      if (init == "column_means")
        cfg.fit.init = rtm::FitInit::column_means;
      else if (init == "zeros")
        cfg.fit.init = rtm::FitInit::zeros;
      else
        throw rtm::ConfigError("fit.init must be column_means or zeros");
    }
  }
  if (j.contains("synth")) {
    const json& s = j.at("synth");
    maybe(s, "n_users", cfg.synth.n_users);
    maybe(s, "n_questions", cfg.synth.n_questions);
    maybe(s, "missingness", cfg.synth.missingness);
    maybe(s, "zeta_sd", cfg.synth.zeta_sd);
    maybe(s, "beta_mean", cfg.synth.beta_mean);
    maybe(s, "beta_sd", cfg.synth.beta_sd);
    maybe(s, "alpha_log_mean", cfg.synth.alpha_log_mean);
    maybe(s, "alpha_log_sd", cfg.synth.alpha_log_sd);
    maybe(s, "seed", cfg.synth.seed);
    maybe(s, "course_id", cfg.synth.course_id);
    maybe(s, "pages_per_course", cfg.pages_per_course);
    maybe(s, "questions_per_page", cfg.questions_per_page);
  }
}

std::ifstream open_input(const std::string& path) {
  if (!fs::exists(path)) throw rtm::IoError("missing input file: " + path);
  std::ifstream in(path);
  if (!in) throw rtm::IoError("cannot open: " + path);
  return in;
}

void write_file(const fs::path& path, const std::string& content) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw rtm::IoError("cannot write: " + path.string());
  out << content;
  if (!out) throw rtm::IoError("write failed: " + path.string());
}

template <typename Fn>
void write_stream(const fs::path& path, Fn&& fn) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw rtm::IoError("cannot write: " + path.string());
  fn(out);
  if (!out) throw rtm::IoError("write failed: " + path.string());
}

void run_parallel(int jobs, std::size_t n, const std::function<void(std::size_t)>& fn) {
  if (jobs <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  auto worker = [&] {
    for (;;) {
      std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  int count = std::min<int>(jobs, static_cast<int>(n));
  pool.reserve(static_cast<std::size_t>(count));
  for (int t = 0; t < count; ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

std::map<std::string, rtm::CourseStructure> load_structures(const std::string& path) {
  std::ifstream in = open_input(path);
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded()) throw rtm::ValidationError("bad structure JSON: " + path);
  std::map<std::string, rtm::CourseStructure> out;
  auto load_one = [&](const json& obj) {
    std::stringstream ss(obj.dump());
    rtm::CourseStructure s = rtm::load_structure_json(ss);
    out[s.course_id] = std::move(s);
  };
  if (j.is_array())
    for (const auto& obj : j) load_one(obj);
  else
    load_one(j);
  return out;
}

std::string tallies_json(const std::map<std::string, std::size_t>& tallies) {
  json j = json::object();
  for (const auto& [k, v] : tallies) j[k] = v;
  return j.dump(2) + "\n";
}

// ---- commands ----

int cmd_simulate(const RunConfig& cfg) {
  cfg.synth.validate();
  if (cfg.pages_per_course * cfg.questions_per_page != cfg.synth.n_questions)
    throw rtm::ConfigError("pages_per_course * questions_per_page must equal n_questions");
  rtm::SynthTruth truth = rtm::generate(cfg.synth);
  rtm::CourseStructure structure =
      rtm::synth_structure(truth, cfg.pages_per_course, cfg.questions_per_page);
  rtm::EventLog events =
      rtm::emit_event_log(truth, cfg.pages_per_course, cfg.questions_per_page);

  fs::path dir = fs::path(cfg.out_dir) / truth.spec.course_id;
  write_stream(dir / "events.jsonl", [&](std::ostream& os) { rtm::serialize_events(events, os); });
  write_stream(dir / "structure.json", [&](std::ostream& os) { rtm::write_structure_json(structure, os); });
  write_stream(dir / "truth_params.csv", [&](std::ostream& os) { rtm::write_params_csv(truth.params, os); });
  write_stream(dir / "truth_matrix.csv", [&](std::ostream& os) { rtm::write_matrix_csv(truth.matrix, os); });
  write_stream(dir / "truth_matrix.json",
               [&](std::ostream& os) { rtm::write_matrix_sidecar_json(truth.matrix, os); });
  log_line("simulate: wrote " + std::to_string(events.events.size()) + " events for course '" +
           truth.spec.course_id + "' to " + dir.string());
  return 0;
}

int cmd_extract(const RunConfig& cfg) {
  if (cfg.events_path.empty()) throw rtm::ConfigError("no events path configured");
  std::ifstream in = open_input(cfg.events_path);
  rtm::MultiCourseParse parsed = rtm::parse_courses(in);

  json rejections = json::object();
  for (const auto& [reason, count] : parsed.rejected) rejections[reason] = count;
  write_file(fs::path(cfg.out_dir) / "ingest_rejections.json", rejections.dump(2) + "\n");

  for (const auto& log : parsed.logs) {
    rtm::ExtractionResult extraction = rtm::extract_from_log(log);
    std::vector<rtm::ResponseObservation> obs = extraction.observations;
    rtm::dichotomize(obs, cfg.qualification);
    fs::path dir = fs::path(cfg.out_dir) / log.course_id;
    write_stream(dir / "observations.csv",
                 [&](std::ostream& os) { rtm::write_observations_csv(obs, os); });
    auto tallies = extraction.tallies;
    tallies["observations"] = obs.size();
    tallies["events_accepted"] = log.events.size();
    write_file(dir / "tallies.json", tallies_json(tallies));
    log_line("extract: course '" + log.course_id + "': " + std::to_string(obs.size()) +
             " observations");
  }
  return 0;
}

int cmd_qualify(const RunConfig& cfg) {
  if (cfg.events_path.empty()) throw rtm::ConfigError("no events path configured");
  if (cfg.structure_path.empty()) throw rtm::ConfigError("no structure path configured");
  std::ifstream in = open_input(cfg.events_path);
  rtm::MultiCourseParse parsed = rtm::parse_courses(in);
  auto structures = load_structures(cfg.structure_path);

  for (const auto& log : parsed.logs) {
    auto structure = structures.find(log.course_id);
    if (structure == structures.end())
      throw rtm::ValidationError("no course structure for course '" + log.course_id + "' in " +
                                 cfg.structure_path);
    rtm::ExtractionResult extraction = rtm::extract_from_log(log);
    rtm::PreparedObservations prepared =
        rtm::prepare_observations(extraction, log, structure->second, cfg.qualification);
    fs::path course_dir = fs::path(cfg.out_dir) / log.course_id;
    write_file(course_dir / "qualify_tallies.json", tallies_json(prepared.tallies));

    auto parts = rtm::partition_subsets(prepared.observations);
    std::vector<rtm::SubsetLabel> selected = cfg.subsets;
    run_parallel(cfg.jobs, selected.size(), [&](std::size_t k) {
      rtm::SubsetLabel label = selected[k];
      rtm::ResponseMatrix matrix = rtm::qualify_matrix(parts[label], cfg.qualification, label);
      fs::path dir = course_dir / label.str();
      write_stream(dir / "matrix.csv", [&](std::ostream& os) { rtm::write_matrix_csv(matrix, os); });
      write_stream(dir / "matrix.json",
                   [&](std::ostream& os) { rtm::write_matrix_sidecar_json(matrix, os); });
    });
    log_line("qualify: course '" + log.course_id + "': " + std::to_string(selected.size()) +
             " subset matrices");
  }
  return 0;
}

std::vector<fs::path> find_subset_dirs(const RunConfig& cfg, const std::string& needed_file) {
  std::vector<fs::path> dirs;
  if (!fs::exists(cfg.out_dir)) return dirs;
  std::set<std::string> wanted;
  for (const auto& label : cfg.subsets) wanted.insert(label.str());
  for (const auto& course : fs::directory_iterator(cfg.out_dir)) {
    if (!course.is_directory()) continue;
    for (const auto& subset : fs::directory_iterator(course.path())) {
      if (!subset.is_directory()) continue;
      if (!wanted.count(subset.path().filename().string())) continue;
      if (fs::exists(subset.path() / needed_file)) dirs.push_back(subset.path());
    }
  }
  std::sort(dirs.begin(), dirs.end());
  return dirs;
}

rtm::ResponseMatrix read_matrix_dir(const fs::path& dir) {
  std::ifstream csv_in(dir / "matrix.csv");
  std::ifstream sidecar(dir / "matrix.json");
  if (!csv_in || !sidecar)
    throw rtm::ValidationError("missing prerequisite: " + (dir / "matrix.csv").string());
  return rtm::read_matrix(csv_in, sidecar);
}

int cmd_fit(const RunConfig& cfg) {
  std::vector<fs::path> dirs = find_subset_dirs(cfg, "matrix.csv");
  if (dirs.empty())
    throw rtm::ValidationError("missing prerequisite: no matrix.csv under " + cfg.out_dir);

  run_parallel(cfg.jobs, dirs.size(), [&](std::size_t k) {
    const fs::path& dir = dirs[k];
    rtm::ResponseMatrix matrix = read_matrix_dir(dir);
    if (matrix.unfittable) {
      json j;
      j["unfittable"] = true;
      j["converged"] = false;
      write_file(dir / "fit_report.json", j.dump(2) + "\n");
      log_line("fit: " + dir.string() + ": unfittable (empty matrix)");
      return;
    }
    auto [params, report] = rtm::fit(matrix, cfg.fit);
    write_stream(dir / "params.csv", [&](std::ostream& os) { rtm::write_params_csv(params, os); });
    write_file(dir / "fit_report.json",
               rtm::fit_report_json(report, report.nll_trace.back()) + "\n");
    log_line("fit: " + dir.string() + ": " + (report.converged ? "converged" : "NOT converged") +
             " in " + std::to_string(report.iterations) + " iterations");
  });
  return 0;
}

int cmd_diagnose(const RunConfig& cfg) {
  std::vector<fs::path> dirs = find_subset_dirs(cfg, "params.csv");
  if (dirs.empty())
    throw rtm::ValidationError("missing prerequisite: no fitted subset (params.csv) under " +
                               cfg.out_dir);

  run_parallel(cfg.jobs, dirs.size(), [&](std::size_t k) {
    const fs::path& dir = dirs[k];
    rtm::ResponseMatrix matrix = read_matrix_dir(dir);
    std::ifstream params_in(dir / "params.csv");
    rtm::ModelParams params = rtm::read_params_csv(params_in);
    if (matrix.unfittable || matrix.entries.empty())
      throw rtm::ValidationError("empty matrix in " + dir.string());

    auto residuals = rtm::standardized_residuals(params, matrix);
    std::vector<double> xs;
    xs.reserve(residuals.size());
    for (const auto& r : residuals) xs.push_back(r.x);

    rtm::MomentSet moments = rtm::raw_moments(xs);
    rtm::DeviationSet deviations = rtm::moment_deviations(moments);
    rtm::DatasetStats stats = rtm::dataset_stats(matrix);

    json j;
    j["subset"] = matrix.label.str();
    j["n_residuals"] = xs.size();
    j["moments"] = {{"m1", moments.m1}, {"m2", moments.m2}, {"m3", moments.m3}, {"m4", moments.m4}};
    j["deviations"] = {{"d1", deviations.d1}, {"d2", deviations.d2}, {"d3", deviations.d3},
                       {"d4", deviations.d4}};
    j["dataset_stats"] = {{"n_users", stats.n_users},
                          {"n_questions", stats.n_questions},
                          {"missingness", stats.missingness},
                          {"parameter_ratio", stats.parameter_ratio}};
    try {
      rtm::IntensityDiscrimination relation = rtm::intensity_discrimination_relation(params);
      j["intensity_discrimination"] = {{"r", relation.corr.r}, {"se", relation.corr.se},
                                       {"n", relation.corr.n}};
      write_stream(dir / "intensity_scatter.csv", [&](std::ostream& os) {
        os << "inv_alpha,beta\n";
        for (const auto& [x, y] : relation.points)
          os << rtm::csv::format_double(x) << ',' << rtm::csv::format_double(y) << '\n';
      });
    } catch (const rtm::ValidationError& e) {
      j["intensity_discrimination"] = {{"error", e.what()}};
    }
    write_file(dir / "diagnostics.json", j.dump(2) + "\n");

    write_stream(dir / "ecdf.csv", [&](std::ostream& os) {
      os << "x,y\n";
      for (const auto& [x, y] : rtm::ecdf_vs_normal(xs))
        os << rtm::csv::format_double(x) << ',' << rtm::csv::format_double(y) << '\n';
    });

    auto per_question = rtm::per_question_deviations(rtm::group_residuals_by_question(residuals));
    write_stream(dir / "question_deviations.csv", [&](std::ostream& os) {
      os << "question_id,d1,d2,d3,d4\n";
      for (const auto& [q, d] : per_question.by_question)
        rtm::csv::write_row(os, {q, rtm::csv::format_double(d.d1), rtm::csv::format_double(d.d2),
                                 rtm::csv::format_double(d.d3), rtm::csv::format_double(d.d4)});
    });
    write_stream(dir / "deviation_curves.csv", [&](std::ostream& os) {
      os << "k,x,y\n";
      for (int ki = 0; ki < 4; ++ki)
        for (const auto& [x, y] : per_question.percentile_curves[ki])
          os << "d" << (ki + 1) << ',' << rtm::csv::format_double(x) << ','
             << rtm::csv::format_double(y) << '\n';
    });
    write_stream(dir / "question_descriptions.csv", [&](std::ostream& os) {
      os << "question_id,alpha,beta,typical_seconds,spread_factor\n";
      for (const auto& [q, a] : params.alpha) {
        rtm::QuestionDescription desc = rtm::describe_question(a, params.beta.at(q));
        rtm::csv::write_row(os, {q, rtm::csv::format_double(a),
                                 rtm::csv::format_double(params.beta.at(q)),
                                 rtm::csv::format_double(desc.typical_seconds),
                                 rtm::csv::format_double(desc.spread_factor)});
      }
    });
    log_line("diagnose: " + dir.string());
  });
  return 0;
}

int cmd_compare(const RunConfig& cfg, const std::string& a_path, const std::string& b_path) {
  for (const auto& path : {a_path, b_path})
    if (!fs::exists(path)) throw rtm::ValidationError("missing prerequisite: " + path);
  std::ifstream a_in(a_path), b_in(b_path);
  rtm::ModelParams a = rtm::normalize_identifiability(rtm::read_params_csv(a_in));
  rtm::ModelParams b = rtm::normalize_identifiability(rtm::read_params_csv(b_in));
  rtm::ParamComparison comparison = rtm::compare_fits(a, b);

  auto rmse_of = [](const rtm::ParamComparison::Entry& e) {
    if (e.points.empty()) return 0.0;
    double ss = 0.0;
    for (const auto& [x, y] : e.points) ss += (x - y) * (x - y);
    return std::sqrt(ss / static_cast<double>(e.points.size()));
  };

  fs::path dir = fs::path(cfg.out_dir) / "compare";
  json j;
  write_stream(dir / "comparison.csv", [&](std::ostream& os) {
    os << "parameter,n,r,se,rmse,status\n";
    auto row = [&](const char* name, const rtm::ParamComparison::Entry& e) {
      std::string status = e.ok ? "ok" : e.note;
      os << name << ',' << e.points.size() << ','
         << (e.ok ? rtm::csv::format_double(e.corr.r) : "") << ','
         << (e.ok ? rtm::csv::format_double(e.corr.se) : "") << ','
         << rtm::csv::format_double(rmse_of(e)) << ',' << status << '\n';
      j[name] = {{"n", e.points.size()}, {"rmse", rmse_of(e)}, {"status", status}};
      if (e.ok) {
        j[name]["r"] = e.corr.r;
        j[name]["se"] = e.corr.se;
      }
    };
    row("zeta", comparison.zeta);
    row("beta", comparison.beta);
    row("alpha", comparison.alpha);
  });
  write_file(dir / "comparison.json", j.dump(2) + "\n");

  auto scatter = [&](const char* name, const rtm::ParamComparison::Entry& e) {
    write_stream(dir / (std::string("scatter_") + name + ".csv"), [&](std::ostream& os) {
      os << "a,b\n";
      for (const auto& [x, y] : e.points)
        os << rtm::csv::format_double(x) << ',' << rtm::csv::format_double(y) << '\n';
    });
  };
  scatter("zeta", comparison.zeta);
  scatter("beta", comparison.beta);
  scatter("alpha", comparison.alpha);
  log_line("compare: wrote " + (dir / "comparison.csv").string());
  return 0;
}

int cmd_outcomes(const RunConfig& cfg) {
  if (cfg.records_path.empty()) throw rtm::ConfigError("no records path configured");
  if (!fs::exists(cfg.records_path))
    throw rtm::ValidationError("missing prerequisite: " + cfg.records_path);
  std::ifstream in(cfg.records_path);
  std::vector<rtm::LearnerRecord> records = rtm::read_learner_csv(in);
  if (records.empty()) throw rtm::ValidationError("no learner records in " + cfg.records_path);
  bool have_zeta2 = std::any_of(records.begin(), records.end(),
                                [](const rtm::LearnerRecord& r) { return r.zeta2.has_value(); });

  std::vector<rtm::RegressionResult> outcome_results, slowness_results;
  json status = json::object();
  auto run_model = [&](const std::string& label, auto&& fn, std::vector<rtm::RegressionResult>& sink) {
    try {
      sink.push_back(fn());
      status[label] = {{"ok", true}, {"n", sink.back().n}, {"label", sink.back().model_label}};
    } catch (const std::exception& e) {
      status[label] = {{"ok", false}, {"error", e.what()}};
      log_line("outcomes: model '" + label + "' failed: " + e.what());
    }
  };

  const std::vector<std::string> set1 = {"zeta1", "correctness", "education"};
  const std::vector<std::string> set2 = {"zeta1", "zeta2", "correctness", "education"};
  run_model("Grade 1", [&] { return rtm::ols_fixed_effects(records, "grade", set1, "Grade 1"); },
            outcome_results);
  run_model("Completion 1",
            [&] { return rtm::logistic_fixed_effects(records, "completed", set1, "Completion 1"); },
            outcome_results);
  run_model("Certification 1",
            [&] { return rtm::logistic_fixed_effects(records, "certified", set1, "Certification 1"); },
            outcome_results);
  if (have_zeta2) {
    run_model("Grade 2", [&] { return rtm::ols_fixed_effects(records, "grade", set2, "Grade 2"); },
              outcome_results);
    run_model("Completion 2",
              [&] { return rtm::logistic_fixed_effects(records, "completed", set2, "Completion 2"); },
              outcome_results);
    run_model("Certification 2",
              [&] {
                return rtm::logistic_fixed_effects(records, "certified", set2, "Certification 2");
              },
              outcome_results);
  } else {
    status["zeta2_models"] = "skipped: no zeta2 values present";
  }

  try {
    auto [s1, s2] = rtm::slowness_models(records);
    slowness_results.push_back(std::move(s1));
    if (have_zeta2) slowness_results.push_back(std::move(s2));
    status["Slowness"] = {{"ok", true}};
  } catch (const std::exception& e) {
    status["Slowness"] = {{"ok", false}, {"error", e.what()}};
    log_line(std::string("outcomes: slowness models failed: ") + e.what());
  }

  fs::path dir = fs::path(cfg.out_dir) / "outcomes";
  auto write_results = [&](const fs::path& path, const std::vector<rtm::RegressionResult>& results) {
    write_stream(path, [&](std::ostream& os) {
      os << "model,predictor,st_dev,coef,se,z,p\n";
      for (const auto& result : results)
        for (const auto& row : result.rows)
          rtm::csv::write_row(os, {result.model_label, row.predictor,
                                   rtm::csv::format_double(row.sd_pooled),
                                   rtm::csv::format_double(row.coef),
                                   rtm::csv::format_double(row.se), rtm::csv::format_double(row.z),
                                   rtm::csv::format_double(row.p)});
    });
  };
  write_results(dir / "outcome_models.csv", outcome_results);
  write_results(dir / "slowness_models.csv", slowness_results);

  write_stream(dir / "course_intercepts.csv", [&](std::ostream& os) {
    os << "model,course_id,intercept\n";
    for (const auto* results : {&outcome_results, &slowness_results})
      for (const auto& result : *results)
        for (const auto& [course, intercept] : result.course_intercepts)
          rtm::csv::write_row(os, {result.model_label, course, rtm::csv::format_double(intercept)});
  });
  write_stream(dir / "sd_by_course.csv", [&](std::ostream& os) {
    os << "model,predictor,course_id,sd\n";
    for (const auto* results : {&outcome_results, &slowness_results})
      for (const auto& result : *results)
        for (const auto& [predictor, by_course] : result.sd_by_course)
          for (const auto& [course, sd] : by_course)
            rtm::csv::write_row(os, {result.model_label, predictor, course,
                                     rtm::csv::format_double(sd)});
  });
  write_file(dir / "outcomes.json", status.dump(2) + "\n");
  log_line("outcomes: wrote " + (dir / "outcome_models.csv").string());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"log-normal response-time modeling for online-course event logs"};
  app.fallthrough();
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::string> out_flag, events_flag, structure_flag, records_flag, subsets_flag;
  std::optional<int> jobs_flag;
  std::optional<std::uint64_t> seed_flag;
  std::string a_path, b_path;

  app.add_option("--config", config_path, "JSON config file (flags override it)");
  app.add_option("--out", out_flag, "output directory");
  app.add_option("--jobs", jobs_flag, "parallelism degree");
  app.add_option("--seed", seed_flag, "override the synthetic-data seed");
  app.add_option("--events", events_flag, "events JSONL file");
  app.add_option("--structure", structure_flag, "course structure JSON file");
  app.add_option("--records", records_flag, "learner records CSV file");
  app.add_option("--subsets", subsets_flag, "comma-separated subset labels, e.g. 1_any,2_any");

  auto* simulate = app.add_subcommand("simulate", "generate a synthetic course with known truth");
  auto* extract = app.add_subcommand("extract", "extract response-time observations from events");
  auto* qualify = app.add_subcommand("qualify", "build the qualified subset matrices");
  auto* fit_cmd = app.add_subcommand("fit", "fit the log-normal model per subset matrix");
  auto* diagnose = app.add_subcommand("diagnose", "model-quality diagnostics per fitted subset");
  auto* compare = app.add_subcommand("compare", "correlate two parameter CSVs");
  auto* outcomes = app.add_subcommand("outcomes", "outcome and slowness regressions");
  compare->add_option("--a", a_path, "first params.csv")->required();
  compare->add_option("--b", b_path, "second params.csv")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    RunConfig cfg;
    if (!config_path.empty()) load_config_file(config_path, cfg);
    if (out_flag) cfg.out_dir = *out_flag;
    if (events_flag) cfg.events_path = *events_flag;
    if (structure_flag) cfg.structure_path = *structure_flag;
    if (records_flag) cfg.records_path = *records_flag;
    if (jobs_flag) cfg.jobs = *jobs_flag;
    if (seed_flag) cfg.synth.seed = *seed_flag;
    if (subsets_flag) cfg.subsets = parse_subset_list(*subsets_flag);
    if (cfg.jobs < 1) throw rtm::ConfigError("jobs must be >= 1");
    cfg.qualification.validate();
    cfg.fit.validate();

    if (simulate->parsed()) return cmd_simulate(cfg);
    if (extract->parsed()) return cmd_extract(cfg);
    if (qualify->parsed()) return cmd_qualify(cfg);
    if (fit_cmd->parsed()) return cmd_fit(cfg);
    if (diagnose->parsed()) return cmd_diagnose(cfg);
    if (compare->parsed()) return cmd_compare(cfg, a_path, b_path);
    if (outcomes->parsed()) return cmd_outcomes(cfg);
    return 3;
  } catch (const rtm::ConfigError& e) {
    std::fprintf(stderr, "configuration error: %s\n", e.what());
    return 3;
  } catch (const rtm::ValidationError& e) {
    std::fprintf(stderr, "validation error: %s\n", e.what());
    return 2;
  } catch (const rtm::IoError& e) {
    std::fprintf(stderr, "I/O error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
}
