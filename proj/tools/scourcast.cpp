// scourcast command-line front end.
//
// Exit codes: 0 success, 1 numeric failure (diverged training, failed
// gradient check), 2 usage, configuration or I/O error.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "scourcast/experiment.hpp"
#include "scourcast/gradsuite.hpp"
#include "scourcast/io.hpp"
#include "scourcast/synth.hpp"

namespace {

using namespace scour;

struct Overrides {
  std::string config;
  std::string out;
  std::optional<std::size_t> jobs;
  std::optional<std::uint64_t> seed;
};

ExperimentConfig load_with_overrides(const Overrides& o) {
  ExperimentConfig c = load_experiment(o.config);
  if (!o.out.empty()) c.output_dir = o.out;
  if (o.jobs) {
    require(*o.jobs >= 1, Errc::ConfigError, "--jobs must be at least 1");
    c.jobs = *o.jobs;
  }
  if (o.seed) c.seed = *o.seed;
  return c;
}

void add_experiment_options(CLI::App* cmd, Overrides& o) {
  cmd->add_option("config", o.config, "experiment config (JSON)")->required();
  cmd->add_option("-o,--out", o.out, "output directory (overrides output_dir)");
  cmd->add_option("-j,--jobs", o.jobs, "parallel runs");
  cmd->add_option("--seed", o.seed, "experiment seed (overrides seed)");
}

std::pair<std::size_t, std::size_t> parse_range(const std::string& text, std::size_t rows) {
  const auto colon = text.find(':');
  require(colon != std::string::npos, Errc::ConfigError, "--range must look like BEGIN:END");
  auto num = [&](const std::string& s, std::size_t fallback) -> std::size_t {
    if (s.empty()) return fallback;
    std::size_t pos = 0;
    long long v = 0;
    try {
      v = std::stoll(s, &pos);
    } catch (const std::exception&) {
      pos = 0;
    }
    require(pos == s.size(), Errc::ConfigError, "bad row index '" + s + "' in --range");
    if (v < 0) v += static_cast<long long>(rows);
    require(v >= 0 && static_cast<std::size_t>(v) <= rows, Errc::ConfigError, "row index out of range in --range");
    return static_cast<std::size_t>(v);
  };
  return {num(text.substr(0, colon), 0), num(text.substr(colon + 1), rows)};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Scour forecasting from bridge sensor time series"};
  app.require_subcommand(1);

  // preprocess
  auto* pre = app.add_subcommand("preprocess", "raw sensor CSV -> hourly frame CSV + report");
  std::string pre_in, pre_out, pre_report;
  PreprocessParams pre_params;
  pre->add_option("input", pre_in, "long-format sensor CSV (timestamp,channel,value)")->required();
  pre->add_option("-o,--out", pre_out, "frame CSV to write")->required();
  pre->add_option("--report", pre_report, "report JSON (default: <out>.report.json)");
  pre->add_option("--despike-window", pre_params.despike_window, "rolling window in hours");
  pre->add_option("--k-mad", pre_params.k_mad, "spike threshold in MADs");
  pre->add_option("--max-gap", pre_params.max_gap, "longest gap to interpolate, hours");

  // synth
  auto* syn = app.add_subcommand("synth", "generate a synthetic sensor record");
  ScenarioSpec spec;
  std::string syn_kind = "seasonal", syn_out, syn_frame;
  syn->add_option("--kind", syn_kind, "seasonal or tidal");
  syn->add_option("--years", spec.years, "record length in years");
  syn->add_option("--noise-std", spec.noise_std, "sensor noise, ft");
  syn->add_option("--floods", spec.flood_count, "flood pulses per year");
  syn->add_option("--rho", spec.rho, "Stage-Sonar coupling in [-1, 1]");
  syn->add_option("--seed", spec.seed, "generator seed");
  syn->add_option("-o,--out", syn_out, "long-format sensor CSV to write")->required();
  syn->add_option("--frame", syn_frame, "also write the hourly frame CSV");

  Overrides train_o, tune_o, seq_o, sweep_o;
  add_experiment_options(app.add_subcommand("train", "hold-out training of one model"), train_o);
  add_experiment_options(app.add_subcommand("tune", "grid / random search with ranking policies"), tune_o);
  add_experiment_options(app.add_subcommand("sequential", "fold-by-fold sequential training"), seq_o);
  add_experiment_options(app.add_subcommand("feature-sweep", "compare input feature sets"), sweep_o);

  // forecast
  auto* fc = app.add_subcommand("forecast", "ensemble predictions from checkpoints");
  std::vector<std::string> fc_ckpts;
  std::string fc_frame, fc_range, fc_out;
  fc->add_option("-c,--checkpoint", fc_ckpts, "checkpoint file (repeatable)")->required();
  fc->add_option("-f,--frame", fc_frame, "hourly frame CSV")->required();
  fc->add_option("--range", fc_range, "target rows BEGIN:END (negative counts from the end); default: all rows with history");
  fc->add_option("-o,--out", fc_out, "predictions CSV")->required();

  // gradcheck
  auto* gc = app.add_subcommand("gradcheck", "finite-difference check of every operator and model family");
  std::uint64_t gc_seed = 0;
  std::size_t gc_instances = 20;
  double gc_tol = 1e-4;
  gc->add_option("--seed", gc_seed, "instance seed");
  gc->add_option("--instances", gc_instances, "random instances per operator");
  gc->add_option("--tol", gc_tol, "maximum relative error");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (pre->parsed()) {
      const auto result = preprocess(read_file(pre_in), pre_params);
      write_file_atomic(pre_out, format_frame_csv(result.frame));
      Json issues = Json::array();
      for (const auto& m : result.report.malformed_rows)
        issues.push_back({{"line", m.line}, {"issue", std::string(row_issue_name(m.issue))}, {"text", m.text}});
      const Json report = {{"schema", "scourcast.preprocess-report"},
                           {"version", kSchemaVersion},
                           {"input", pre_in},
                           {"parsed_rows", result.report.parsed},
                           {"malformed_rows", result.report.malformed},
                           {"masked_spikes", result.report.masked_spikes},
                           {"filled_gaps", result.report.filled_gaps},
                           {"grid_rows", result.report.grid_rows},
                           {"params",
                            {{"despike_window", pre_params.despike_window},
                             {"k_mad", pre_params.k_mad},
                             {"max_gap", pre_params.max_gap}}},
                           {"malformed", issues}};
      write_json(pre_report.empty() ? pre_out + ".report.json" : pre_report, report);
      std::cout << result.report.grid_rows << " hourly rows, " << result.report.malformed << " malformed, "
                << result.report.masked_spikes << " spikes masked, " << result.report.filled_gaps << " gaps filled\n";
    } else if (syn->parsed()) {
      auto kind = scenario_kind_from_name(syn_kind);
      require(kind.has_value(), Errc::ConfigError, "--kind must be seasonal or tidal");
      spec.kind = *kind;
      const TimeSeriesFrame frame = generate(spec);
      write_file_atomic(syn_out, format_sensor_csv(frame));
      if (!syn_frame.empty()) write_file_atomic(syn_frame, format_frame_csv(frame));
      std::cout << frame.size() << " hourly rows written to " << syn_out << "\n";
    } else if (app.got_subcommand("train")) {
      const Json j = run_train(load_with_overrides(train_o));
      for (const auto& r : j["runs"])
        std::cout << r["config"].get<std::string>() << " seed " << r["seed"] << ": best epoch " << r["best_epoch"]
                  << ", test MAE " << r["test"]["mae_ft"] << " ft\n";
    } else if (app.got_subcommand("tune")) {
      run_tune(load_with_overrides(tune_o), &std::cout);
    } else if (app.got_subcommand("sequential")) {
      const Json j = run_sequential(load_with_overrides(seq_o));
      std::cout << "sequential mean final_test MAE " << j["mean_final_test_mae_ft"] << " ft";
      if (j.contains("holdout_mean_final_test_mae_ft"))
        std::cout << ", hold-out " << j["holdout_mean_final_test_mae_ft"] << " ft";
      std::cout << "\n";
    } else if (app.got_subcommand("feature-sweep")) {
      const Json j = run_feature_sweep(load_with_overrides(sweep_o));
      for (const auto& c : j["codes"])
        std::cout << c["code"].get<std::string>() << ": mean test MAE " << c["mean_mae_ft"] << " ft\n";
    } else if (fc->parsed()) {
      std::vector<LoadedModel> models;
      for (const auto& p : fc_ckpts) models.push_back(load_checkpoint(p));
      const TimeSeriesFrame frame = read_frame_csv(fc_frame);
      std::size_t history = 0;
      for (const auto& m : models) history = std::max(history, m.meta.w_in);
      auto [b, e] = fc_range.empty() ? std::pair{history, frame.size()} : parse_range(fc_range, frame.size());
      write_file_atomic(fc_out, forecast_csv(models, frame, b, e));
      std::cout << (e - b) << " rows written to " << fc_out << "\n";
    } else if (gc->parsed()) {
      bool ok = true;
      for (const auto& e : run_gradient_suite(gc_seed, gc_instances)) {
        const bool pass = e.max_rel_error < gc_tol;
        ok = ok && pass;
        std::printf("%-4s %-32s instances=%-3zu max_rel_error=%.3e  %s\n", pass ? "ok" : "FAIL", e.name.c_str(),
                    e.instances, e.max_rel_error, e.worst.c_str());
      }
      return ok ? 0 : 1;
    }
  } catch (const TrainingDiverged& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.code() == Errc::DivergedLoss || e.code() == Errc::NonFiniteGradient ? 1 : 2;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
