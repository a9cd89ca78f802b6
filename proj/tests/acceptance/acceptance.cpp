// Acceptance checks. Each criterion prints one line per check and a final
// verdict; the exit status is 0 only when every check passed.
//
//   scourcast_acceptance --criterion N [--workdir DIR]

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "../support/reference_configs.hpp"
#include "CLI11.hpp"
#include "scourcast/experiment.hpp"
#include "scourcast/gradsuite.hpp"

using namespace scour;
namespace fs = std::filesystem;

namespace {

class Verdict {
 public:
  explicit Verdict(int criterion) : criterion_(criterion) {}

  void check(bool ok, const std::string& what) {
    all_ &= ok;
    std::printf("[criterion %d] %s: %s\n", criterion_, ok ? "PASS" : "FAIL", what.c_str());
    std::fflush(stdout);
  }

  int finish() const {
    std::printf("criterion %d: %s\n", criterion_, all_ ? "PASS" : "FAIL");
    return all_ ? 0 : 1;
  }

 private:
  int criterion_;
  bool all_ = true;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

class Stopwatch {
 public:
  double seconds() const { return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_).count(); }

 private:
  std::chrono::steady_clock::time_point t0_ = std::chrono::steady_clock::now();
};

nn::Tensor random_tensor(std::vector<std::size_t> shape, Rng& rng) {
  nn::Tensor t(std::move(shape));
  for (auto& v : t.values()) v = rng.normal();
  return t;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path fresh_dir(const fs::path& p) {
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

// ---------------------------------------------------------------------------

int gradients(Verdict& v) {
  Stopwatch clock;
  const auto suite = run_gradient_suite(2026, 20, 3);
  for (const auto& e : suite)
    v.check(e.max_rel_error < 1e-4, fmt("gradient check %-30s %2zu instances, max rel error %.3e < 1e-4",
                                        e.name.c_str(), e.instances, e.max_rel_error));
  const double t = clock.seconds();
  v.check(t < 60.0, fmt("runtime %.2f s < 60 s", t));
  return v.finish();
}

int convolution(Verdict& v) {
  const std::pair<const char*, nn::ConvMode> modes[] = {{"vanilla", nn::ConvMode::vanilla()},
                                                        {"padded", nn::ConvMode::padded()},
                                                        {"causal", nn::ConvMode::causal()},
                                                        {"dilated_causal(2)", nn::ConvMode::dilated_causal(2)}};
  Rng rng(31);
  for (const auto& [name, mode] : modes) {
    std::size_t cases = 0, bad = 0;
    for (std::size_t l = 2; l <= 32; ++l) {
      for (std::size_t k = 2; k <= l; ++k) {
        const std::size_t expect = mode.kind == nn::ConvMode::Kind::Vanilla ? l - k + 1 : l;
        const nn::Tensor y = nn::conv1d_forward(random_tensor({1, l, 1}, rng), random_tensor({1, k, 1}, rng),
                                                nn::Tensor({1}), mode);
        ++cases;
        if (y.dim(1) != expect || nn::conv_output_length(l, k, mode) != expect) ++bad;
      }
    }
    v.check(bad == 0, fmt("%s output length law over %zu (l, k) pairs, %zu mismatches", name, cases, bad));
  }
  const nn::Tensor y9 = nn::conv1d_forward(random_tensor({1, 9, 1}, rng), random_tensor({1, 3, 1}, rng),
                                           nn::Tensor({1}), nn::ConvMode::vanilla());
  v.check(y9.dim(1) == 7, fmt("vanilla l=9, k=3 gives %zu outputs (expected 7)", y9.dim(1)));

  std::size_t changed = 0;
  for (std::size_t trial = 0; trial < 1000; ++trial) {
    const std::size_t l = 3 + rng.below(20), k = 2 + rng.below(4), n = 1 + rng.below(3), f = 1 + rng.below(3);
    const nn::ConvMode mode = trial % 2 == 0 ? nn::ConvMode::causal() : nn::ConvMode::dilated_causal(1 + rng.below(4));
    const nn::Tensor x = random_tensor({2, l, n}, rng), w = random_tensor({f, k, n}, rng), b = random_tensor({f}, rng);
    const nn::Tensor base = nn::conv1d_forward(x, w, b, mode);
    const std::size_t t = rng.below(l);
    nn::Tensor xp = x;
    xp.at(rng.below(2), t, rng.below(n)) += rng.normal(0.0, 3.0);
    const nn::Tensor y = nn::conv1d_forward(xp, w, b, mode);
    for (std::size_t bb = 0; bb < 2; ++bb)
      for (std::size_t s = 0; s < t; ++s)
        for (std::size_t o = 0; o < f; ++o) changed += y.at(bb, s, o) != base.at(bb, s, o);
  }
  v.check(changed == 0, fmt("causality: 1000 perturbation tests, %zu earlier outputs changed", changed));

  std::size_t differing = 0;
  for (std::size_t trial = 0; trial < 200; ++trial) {
    const std::size_t l = 2 + rng.below(30), k = 2 + rng.below(std::min<std::size_t>(l - 1, 6)), n = 1 + rng.below(4);
    const nn::Tensor x = random_tensor({3, l, n}, rng), w = random_tensor({2, k, n}, rng), b = random_tensor({2}, rng);
    differing += nn::conv1d_forward(x, w, b, nn::ConvMode::causal()).storage() !=
                 nn::conv1d_forward(x, w, b, nn::ConvMode::dilated_causal(1)).storage();
  }
  v.check(differing == 0, fmt("dilated_causal(1) == causal bitwise on 200 instances, %zu differ", differing));
  return v.finish();
}

int receptive_field(Verdict& v) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed, "receptive");
    nn::Sequential net;
    net.add<nn::Conv1D>("c1", 1, 3, 2, nn::ConvMode::dilated_causal(1), rng);
    net.add<nn::Conv1D>("c2", 3, 1, 2, nn::ConvMode::dilated_causal(2), rng);
    const std::size_t length = 24, t = 17;
    const nn::Tensor x = random_tensor({1, length, 1}, rng);
    const double base = net.forward(x, nn::Mode::Infer).at(0, t, 0);
    std::size_t lo = length, hi = 0, count = 0;
    for (std::size_t s = 0; s < length; ++s) {
      nn::Tensor xp = x;
      xp.at(0, s, 0) += 1.0;
      if (net.forward(xp, nn::Mode::Infer).at(0, t, 0) != base) {
        ++count;
        lo = std::min(lo, s);
        hi = std::max(hi, s);
      }
    }
    v.check(count == 4 && lo == t - 3 && hi == t,
            fmt("seed %llu: output %zu depends on %zu inputs [%zu, %zu] (expected 4: [%zu, %zu])",
                static_cast<unsigned long long>(seed), t, count, lo, hi, t - 3, t));
  }
  return v.finish();
}

int lstm_closed_form(Verdict& v) {
  Rng rng(44);
  double worst = 0.0;
  for (std::size_t trial = 0; trial < 50; ++trial) {
    const std::size_t b = 1 + rng.below(3), u = 1 + rng.below(6), nx = 1 + rng.below(4);
    const nn::Tensor w({4 * u, u + nx}), bias({4 * u});
    const nn::Tensor x = random_tensor({b, nx}, rng), a = random_tensor({b, u}, rng);
    nn::Tensor c = random_tensor({b, u}, rng);
    for (auto& e : c.values()) e *= 3.0;
    const auto s = nn::lstm_cell_step(x, a, c, w, bias);
    for (std::size_t i = 0; i < b; ++i) {
      for (std::size_t j = 0; j < u; ++j) {
        const double c_t = 0.5 * c.at(i, j);
        worst = std::max(worst, std::abs(s.c.at(i, j) - c_t));
        worst = std::max(worst, std::abs(s.a.at(i, j) - 0.5 * std::tanh(c_t)));
      }
    }
  }
  v.check(worst <= 1e-12, fmt("zero-parameter cell, 50 random states: max deviation %.3e <= 1e-12", worst));
  return v.finish();
}

// Small experiments shared by the report and determinism checks.
struct Experiment {
  std::string kind;  // train, tune, sequential, feature-sweep
  Json config;
};

std::vector<Experiment> small_experiments() {
  const Json synth = {{"synth", {{"kind", "seasonal"}, {"years", 0.5}, {"seed", 12}}}};
  const Json tidal = {{"synth", {{"kind", "tidal"}, {"years", 0.6}, {"seed", 13}}}};
  const Json training = {{"max_epochs", 3}, {"patience", 2}};
  return {
      {"train",
       {{"seed", 21}, {"data", synth}, {"features", "sNsT"}, {"stride", 24}, {"model", "ss-(48,24)-6-0.2"},
        {"repetitions", 2}, {"training", training}}},
      {"train",
       {{"seed", 22}, {"data", synth}, {"features", "sTdC"}, {"stride", 24}, {"model", "fcn-(48,24)-3-4-3-4-0.2"},
        {"training", training}}},
      {"tune",
       {{"seed", 23},
        {"data", synth},
        {"stride", 24},
        {"repetitions", 2},
        {"training", training},
        {"search",
         {{"windows", {{48, 24}}},
          {"units", {4, 6}},
          {"dropouts", {0.0, 0.2}},
          {"policies", {"grid", "meanMAE", "medianMAE", "bagging"}},
          {"sample_frac", 0.5},
          {"trials", 3},
          {"top_k", 2}}}}},
      {"tune",
       {{"seed", 24},
        {"data", synth},
        {"repetitions", 20},
        {"search",
         {{"windows", {{168, 168}, {336, 168}, {720, 168}}},
          {"units", {32, 64, 128}},
          {"dropouts", {0.0, 0.2}},
          {"policies", {"grid", "meanMAE", "medianMAE", "bagging"}},
          {"oracle", {{"noise_std", 0.01}}}}}}},
      {"sequential",
       {{"seed", 25}, {"data", tidal}, {"stride", 24}, {"model", "ss2-(48,24)-4-0"}, {"repetitions", 2},
        {"folds", {{"n", 3}, {"compare_holdout", true}}}, {"training", training}}},
      {"feature-sweep",
       {{"seed", 26}, {"data", synth}, {"stride", 24}, {"model", "fb-(48,24)-4-0"}, {"repetitions", 2},
        {"feature_codes", {"sN", "sT", "sNdV"}}, {"training", training}}},
  };
}

void run_experiment(const Experiment& e, const fs::path& out, std::size_t jobs = 1) {
  Json j = e.config;
  j["output_dir"] = out.string();
  j["jobs"] = jobs;
  const ExperimentConfig c = parse_experiment(j);
  if (e.kind == "train") run_train(c);
  else if (e.kind == "tune") run_tune(c);
  else if (e.kind == "sequential") run_sequential(c);
  else run_feature_sweep(c);
}

void rerun_from_resolved(const Experiment& e, const fs::path& from, const fs::path& out, std::size_t jobs) {
  Json j = read_json(from / "resolved_config.json");
  j["output_dir"] = out.string();
  j["jobs"] = jobs;
  const ExperimentConfig c = parse_experiment(j);
  if (e.kind == "train") run_train(c);
  else if (e.kind == "tune") run_tune(c);
  else if (e.kind == "sequential") run_sequential(c);
  else run_feature_sweep(c);
}

// Visits every object that reports both mae_ft and mae_m.
void collect_mae_pairs(const Json& j, std::size_t& pairs, std::size_t& bad) {
  if (j.is_object()) {
    if (j.contains("mae_ft") && j.contains("mae_m")) {
      ++pairs;
      if (j["mae_m"].get<double>() != j["mae_ft"].get<double>() * kFeetToMeters) ++bad;
    }
    for (const auto& [_, child] : j.items()) collect_mae_pairs(child, pairs, bad);
  } else if (j.is_array()) {
    for (const auto& child : j) collect_mae_pairs(child, pairs, bad);
  }
}

int loss_and_metric(Verdict& v, const fs::path& work) {
  using nn::Tensor;
  const Tensor zero({2, 2, 1});
  const double mse = nn::mse_loss(Tensor({2, 2, 1}, std::vector<double>{1, 2, 3, 4}), zero, {0});
  v.check(std::abs(mse - 7.5) <= 1e-12, fmt("MSE of errors {1,2,3,4} = %.15g (expected 7.5)", mse));
  const double mae = nn::mae_metric(Tensor({2, 2, 1}, std::vector<double>{1, -2, 3, -4}), zero, {0});
  v.check(std::abs(mae - 2.5) <= 1e-12, fmt("MAE of errors {1,-2,3,-4} = %.15g (expected 2.5)", mae));
  Rng rng(55);
  const Tensor p = random_tensor({3, 4, 2}, rng);
  v.check(nn::mse_loss(p, p, {0, 1}) == 0.0 && nn::mae_metric(p, p, {0, 1}) == 0.0, "pred == target gives 0");
  double worst = 0.0;
  for (double e : {-1.75, -0.3, 0.01, 0.5, 2.0}) {
    Tensor shifted = p;
    for (auto& x : shifted.values()) x += e;
    worst = std::max(worst, std::abs(nn::mse_loss(shifted, p, {0, 1}) - e * e));
    worst = std::max(worst, std::abs(nn::mae_metric(shifted, p, {1}) - std::abs(e)));
  }
  v.check(worst <= 1e-12, fmt("constant error e gives e^2 and |e|: max deviation %.3e", worst));

  std::size_t pairs = 0, bad = 0, files = 0;
  const auto experiments = small_experiments();
  for (std::size_t i = 0; i < experiments.size(); ++i) {
    const fs::path out = fresh_dir(work / ("c5_" + std::to_string(i)));
    run_experiment(experiments[i], out);
    for (const auto& entry : fs::recursive_directory_iterator(out)) {
      if (entry.path().extension() != ".json") continue;
      ++files;
      collect_mae_pairs(read_json(entry.path()), pairs, bad);
    }
  }
  v.check(pairs > 0 && bad == 0,
          fmt("MAE(m) == MAE(ft) * 0.3048 exactly in %zu reported pairs across %zu report files, %zu mismatches",
              pairs, files, bad));
  return v.finish();
}

int policy_recovery(Verdict& v) {
  Stopwatch clock;
  const SearchSpace space = lstm_tuning_space();
  const double noise = 0.01;
  std::size_t grid_ok = 0, mean_ok = 0, bag_ok = 0, spread_ok = 0, grid_runs = 0, random_runs = 0;
  const std::size_t seeds = 100;
  for (std::uint64_t seed = 0; seed < seeds; ++seed) {
    const PlantedOracle oracle = make_planted_oracle(space, derive_seed(seed, "oracle"), noise);
    const Evaluator eval = std::cref(oracle);
    const auto planted = oracle.ranking();
    const std::set<std::string> top3(planted.begin(), planted.begin() + 3);
    std::vector<double> truth;
    for (const auto& c : planted) truth.push_back(oracle.truth(parse_config(c)));
    spread_ok += truth[1] - truth[0] >= 3 * noise - 1e-12 && truth[2] - truth[1] >= 3 * noise - 1e-12 &&
                 truth[3] - truth[2] >= 3 * noise - 1e-12;

    const auto grid = grid_search(space, eval, 20, seed);
    grid_runs = grid.size();
    const auto g = rank_mean_mae(grid).top(3);
    grid_ok += std::set<std::string>(g.begin(), g.end()) == top3;

    const auto random = random_search(space, eval, 0.67, 20, seed);
    random_runs = random.size();
    auto hits = [&](const std::vector<std::string>& top) {
      return static_cast<std::size_t>(std::count_if(top.begin(), top.end(), [&](auto& c) { return top3.count(c); }));
    };
    mean_ok += hits(rank_mean_mae(random, 3, space.configs()).top(3)) >= 2;
    bag_ok += hits(rank_bagging(random, 3, space.configs()).top(3)) >= 2;
  }
  const double t = clock.seconds();
  v.check(spread_ok == seeds, fmt("planted top-3 spaced >= 3 noise std apart in %zu/%zu oracles", spread_ok, seeds));
  v.check(grid_ok >= 95, fmt("grid (r=20) meanMAE recovers planted top-3 in %zu/%zu seeds (need >= 95)", grid_ok, seeds));
  v.check(mean_ok >= 80,
          fmt("random s=0.67 t=20 meanMAE finds >= 2 of top-3 in %zu/%zu seeds (need >= 80)", mean_ok, seeds));
  v.check(bag_ok >= 80,
          fmt("random s=0.67 t=20 bagging finds >= 2 of top-3 in %zu/%zu seeds (need >= 80)", bag_ok, seeds));
  v.check(random_runs == 240 && grid_runs == 360,
          fmt("run counts: random %zu vs grid %zu (expected 240 vs 360)", random_runs, grid_runs));
  v.check(t < 30.0, fmt("runtime %.2f s < 30 s", t));
  return v.finish();
}

// Seasonal frame whose noise is 5% of the Sonar annual amplitude.
Json seasonal_desk_data(double years, std::uint64_t seed) {
  ScenarioSpec s;
  s.noise_std = 0.05 * s.sonar_annual_amplitude();
  return {{"synth", {{"kind", "seasonal"}, {"years", years}, {"noise_std", s.noise_std}, {"seed", seed}}}};
}

struct TrainOutcome {
  double val_mae = 0.0, test_mae = 0.0, persistence = 0.0, seconds = 0.0;
};

TrainOutcome train_once(const fs::path& out, const Json& data, const std::string& model) {
  const Json j = {{"seed", 7},
                  {"output_dir", out.string()},
                  {"data", data},
                  {"features", "sNsT"},
                  {"stride", 24},
                  {"model", model},
                  {"training", {{"max_epochs", 60}, {"patience", 8}}}};
  const Json r = run_train(parse_experiment(j));
  const Json timing = read_json(out / "timing.json");
  return {r["runs"][0]["val"]["mae_ft"].get<double>(), r["runs"][0]["test"]["mae_ft"].get<double>(),
          r["persistence"]["test"]["mae_ft"].get<double>(), timing["runs"][0]["wall_seconds"].get<double>()};
}

int end_to_end(Verdict& v, const fs::path& work) {
  Stopwatch clock;
  const Json data = seasonal_desk_data(3.0, 7);
  const std::string lstm_config = "ss-(336,168)-32-0";
  const TrainOutcome lstm = train_once(fresh_dir(work / "c7_lstm"), data, lstm_config);
  std::printf("  %s: val %.4f ft, test %.4f ft, persistence %.4f ft, %.1f s\n", lstm_config.c_str(), lstm.val_mae,
              lstm.test_mae, lstm.persistence, lstm.seconds);

  // The FCN is chosen by validation MAE among a few small configurations.
  const std::vector<std::string> fcn_configs = {"fcn-(336,168)-3-8-3-8-0", "fcn-(336,168)-5-8-5-4-0",
                                                "fcn-(336,168)-7-8-7-8-0"};
  TrainOutcome best{std::numeric_limits<double>::infinity()};
  std::string best_config;
  for (std::size_t i = 0; i < fcn_configs.size(); ++i) {
    const TrainOutcome o = train_once(fresh_dir(work / ("c7_fcn" + std::to_string(i))), data, fcn_configs[i]);
    std::printf("  %s: val %.4f ft, test %.4f ft, %.1f s\n", fcn_configs[i].c_str(), o.val_mae, o.test_mae, o.seconds);
    if (o.val_mae < best.val_mae) {
      best = o;
      best_config = fcn_configs[i];
    }
  }
  v.check(lstm.test_mae <= 0.8 * lstm.persistence,
          fmt("LSTM test MAE %.4f <= 0.8 x persistence %.4f = %.4f", lstm.test_mae, lstm.persistence,
              0.8 * lstm.persistence));
  v.check(best.test_mae <= 1.25 * lstm.test_mae,
          fmt("best FCN %s test MAE %.4f <= 1.25 x LSTM = %.4f", best_config.c_str(), best.test_mae,
              1.25 * lstm.test_mae));
  v.check(best.seconds < lstm.seconds,
          fmt("FCN training %.1f s < LSTM training %.1f s", best.seconds, lstm.seconds));
  const double t = clock.seconds();
  v.check(t < 20 * 60.0, fmt("runtime %.1f s < 1200 s", t));
  return v.finish();
}

int sequential(Verdict& v, const fs::path& work) {
  Stopwatch clock;
  const Json j = {{"seed", 8},
                  {"output_dir", fresh_dir(work / "c8").string()},
                  {"data", {{"synth", {{"kind", "tidal"}, {"years", 3}, {"seed", 3}}}}},
                  {"features", "sNsT"},
                  {"stride", 12},
                  {"model", "ss-(72,24)-16-0"},
                  {"repetitions", 5},
                  {"folds", {{"n", 3}, {"compare_holdout", true}}},
                  {"training", {{"max_epochs", 100}, {"patience", 8}}}};
  const Json r = run_sequential(parse_experiment(j));
  for (const auto& run : r["runs"])
    std::printf("  seed %llu: sequential final_test %.4f ft, hold-out %.4f ft\n",
                static_cast<unsigned long long>(run["seed"].get<std::uint64_t>()),
                run["final_test_mae_ft"].get<double>(), run["holdout_final_test_mae_ft"].get<double>());
  const double seq = r["mean_final_test_mae_ft"].get<double>(), hold = r["holdout_mean_final_test_mae_ft"].get<double>();
  v.check(r["runs"].size() == 5 && seq <= 1.0 * hold,
          fmt("3-fold sequential mean final_test MAE %.4f <= 1.0 x hold-out %.4f over %zu seeds", seq, hold,
              r["runs"].size()));
  const double t = clock.seconds();
  v.check(t < 15 * 60.0, fmt("runtime %.1f s < 900 s", t));
  return v.finish();
}

int feature_sweep(Verdict& v, const fs::path& work) {
  const Json j = {{"seed", 9},
                  {"output_dir", fresh_dir(work / "c9").string()},
                  {"data", seasonal_desk_data(3.0, 11)},
                  {"feature_codes", {"sN", "sT", "dV", "dC", "sNsT", "sNdC", "sNdV", "sTdV", "sTdC", "sNsTdV", "sNsTdC"}},
                  {"stride", 24},
                  {"model", "ss-(72,24)-16-0"},
                  {"repetitions", 5},
                  {"training", {{"max_epochs", 60}, {"patience", 8}}}};
  const Json r = run_feature_sweep(parse_experiment(j));
  double worst_with = 0.0, best_without = std::numeric_limits<double>::infinity();
  std::string worst_code, best_code;
  for (const auto& c : r["codes"]) {
    const std::string code = c["code"];
    const double mean = c["mean_mae_ft"];
    std::printf("  %-7s mean test MAE %.5f ft over %zu seeds\n", code.c_str(), mean, c["test_mae_ft"].size());
    if (code.find("sN") != std::string::npos) {
      if (mean > worst_with) worst_with = mean, worst_code = code;
    } else if (mean < best_without) {
      best_without = mean, best_code = code;
    }
  }
  v.check(worst_with < best_without, fmt("worst set with sN (%s, %.5f) < best set without sN (%s, %.5f)",
                                         worst_code.c_str(), worst_with, best_code.c_str(), best_without));
  return v.finish();
}

int nomenclature(Verdict& v) {
  std::size_t ok = 0;
  for (auto s : kReferenceConfigs) {
    const std::string text(s);
    bool same = false;
    try {
      same = format_config(parse_config(text)) == text;
    } catch (const Error& e) {
      std::printf("  %s: %s\n", text.c_str(), e.what());
    }
    if (!same) std::printf("  round trip differs for %s\n", text.c_str());
    ok += same;
  }
  v.check(ok == kReferenceConfigs.size() && ok >= 30,
          fmt("parse/format identity for %zu/%zu published configuration strings", ok, kReferenceConfigs.size()));
  return v.finish();
}

std::vector<fs::path> emitted_files(const fs::path& dir) {
  std::vector<fs::path> out;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file()) out.push_back(fs::relative(e.path(), dir));
  std::sort(out.begin(), out.end());
  return out;
}

int determinism(Verdict& v, const fs::path& work) {
  const auto experiments = small_experiments();
  for (std::size_t i = 0; i < experiments.size(); ++i) {
    const auto& e = experiments[i];
    const fs::path a = fresh_dir(work / ("c11_" + std::to_string(i) + "_a"));
    const fs::path b = fresh_dir(work / ("c11_" + std::to_string(i) + "_b"));
    const fs::path c = fresh_dir(work / ("c11_" + std::to_string(i) + "_c"));
    run_experiment(e, a, 1);
    rerun_from_resolved(e, a, b, 1);
    rerun_from_resolved(e, a, c, 3);  // parallel runs must not change any number
    const auto files = emitted_files(a);
    std::size_t compared = 0, differing = 0;
    for (const fs::path& rerun : {b, c}) {
      if (emitted_files(rerun) != files) ++differing;
      for (const auto& f : files) {
        if (f == "timing.json") continue;
        ++compared;
        if (f == "resolved_config.json") {
          Json x = read_json(a / f), y = read_json(rerun / f);
          for (Json* z : {&x, &y}) z->erase("output_dir"), z->erase("jobs");
          differing += x != y;
        } else {
          differing += slurp(a / f) != slurp(rerun / f);
        }
      }
    }
    v.check(differing == 0, fmt("%s (seed %d): %zu files compared after re-runs from resolved config, %zu differ",
                                e.kind.c_str(), e.config["seed"].get<int>(), compared, differing));
  }
  return v.finish();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"scourcast acceptance criteria"};
  int criterion = 0;
  std::string workdir = (fs::temp_directory_path() / "scourcast_acceptance").string();
  app.add_option("--criterion", criterion, "criterion number, 1-11")->required()->check(CLI::Range(1, 11));
  app.add_option("--workdir", workdir, "scratch directory for experiment outputs");
  CLI11_PARSE(app, argc, argv);

  const fs::path work = fs::path(workdir) / ("c" + std::to_string(criterion));
  Verdict v(criterion);
  try {
    switch (criterion) {
      case 1: return gradients(v);
      case 2: return convolution(v);
      case 3: return receptive_field(v);
      case 4: return lstm_closed_form(v);
      case 5: return loss_and_metric(v, work);
      case 6: return policy_recovery(v);
      case 7: return end_to_end(v, work);
      case 8: return sequential(v, work);
      case 9: return feature_sweep(v, work);
      case 10: return nomenclature(v);
      case 11: return determinism(v, work);
    }
  } catch (const std::exception& e) {
    v.check(false, std::string("unexpected error: ") + e.what());
    return v.finish();
  }
  return 2;
}
