#include <cmath>
#include <filesystem>
#include <fstream>
#include <regex>
#include <set>
#include <sstream>

#include "doctest.h"
#include "flt/error.hpp"
#include "flt/harness.hpp"

using namespace flt;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::vector<std::string> header(const fs::path& csv) {
  std::ifstream in(csv);
  std::string line;
  std::getline(in, line);
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string col;
  while (std::getline(ss, col, ',')) out.push_back(col);
  return out;
}

ExperimentConfig tiny() {
  ExperimentConfig c;
  c.seed = 3;
  c.dataset.num_clients = 5;
  c.dataset.samples_per_client = 60;
  c.dataset.test_size = 80;
  c.dataset.detection_size = 20;
  c.federation.epochs = 3;
  c.federation.local_steps_per_round = 2;
  c.analysis.rounds = 3;
  c.analysis.first_checked_round = 1;
  c.analysis.privacy = false;
  c.anomaly.detection_rounds = 2;
  c.anomaly.grid_delta_scales = {5.0};
  c.anomaly.grid_attackers = {0, 1};
  c.sweep_seeds = {1, 2};
  c.collaboration.rounds = 2;
  return c;
}

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("flt_harness_" + name);
  fs::remove_all(p);
  return p;
}

std::string config_error(const std::string& text) {
  try {
    parse_config(text);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_SUITE("harness") {
  TEST_CASE("config round trip") {
    // Per-module seeds and client counts are derived fields, so the round
    // trip is stated on resolved configs.
    CHECK(parse_config(serialize_config(resolved(ExperimentConfig{}))) == resolved(ExperimentConfig{}));
    auto c = tiny();
    c.federation.scope = AggregationScope::kClassical;
    c.anomaly.attack = {AttackKind::kParamScale, 2.5, {1, 4}, true};
    c.anomaly.detector.mode = FlagMode::kAllMean;
    c.encryption.enabled = true;
    c.model.layers = {{"a", 16, 8, Activation::kRelu, Visibility::kCommon},
                      {"b", 8, 4, Activation::kSoftmaxOutput, Visibility::kPrivate}};
    c.placement_instance = "x.json";
    c = resolved(c);
    CHECK(parse_config(serialize_config(c)) == c);
  }

  TEST_CASE("config diagnostics name the field") {
    CHECK(config_error(R"({"federation": {"epocs": 3}})").find("epocs") != std::string::npos);
    CHECK(config_error(R"({"federation": {"epochs": "three"}})").find("epochs") != std::string::npos);
    CHECK(config_error(R"({"anomaly": {"mode": "median"}})").find("mode") != std::string::npos);
    CHECK(config_error(R"({"federation": {"epochs": 0}})").find("epochs") != std::string::npos);
    CHECK(config_error(R"({"federation": {"lr_min": 0.5, "lr_max": 0.1}})").find("lr") != std::string::npos);
    CHECK(config_error("{not json").size() > 0);
  }

  TEST_CASE("resolved aligns seeds and counts; convex forces full batch") {
    auto c = tiny();
    c.model.convex = true;
    const auto r = resolved(c, 99);
    CHECK(r.seed == 99);
    CHECK(r.dataset.seed == 99);
    CHECK(r.federation.seed == 99);
    CHECK(r.federation.num_clients == 5);
    CHECK(r.federation.batch_size == 0);
    REQUIRE(model_layers(r).size() == 1);
    CHECK(model_layers(r)[0].activation == Activation::kSoftmaxOutput);
    const auto d = default_layers(16, 4);
    REQUIRE(d.size() == 3);
    CHECK(d[0].output_dim == 32);
    CHECK(d[2].visibility == Visibility::kPrivate);
  }

  TEST_CASE("trend rule") {
    CHECK(collaboration_trend_holds({0.3, 0.4, 0.5, 0.6}, 0.005));
    CHECK(collaboration_trend_holds({0.3, 0.4, 0.397, 0.6}, 0.005));
    CHECK_FALSE(collaboration_trend_holds({0.3, 0.4, 0.39, 0.6}, 0.005));
    CHECK_FALSE(collaboration_trend_holds({0.3, 0.298, 0.4, 0.398}, 0.005));
  }

  TEST_CASE("finalize: undefined precision without flags, FPR always reported") {
    DetectionCell c;
    c.tn = 90;
    finalize(c);
    CHECK_FALSE(c.precision.has_value());
    CHECK_FALSE(c.recall.has_value());
    CHECK(c.false_positive_rate == 0.0);
    DetectionCell d;
    d.tp = 2;
    d.fp = 2;
    d.tn = 6;
    finalize(d);
    CHECK(*d.precision == 0.5);
    CHECK(*d.recall == 1.0);
    CHECK(d.f1 == doctest::Approx(2.0 / 3.0));
    CHECK(d.false_positive_rate == 0.25);
  }

  TEST_CASE("ridge probe separates separable classes") {
    // Class centers on a triangle so no class is masked by the others.
    const double cx[3] = {0.0, 5.0, 0.0}, cy[3] = {0.0, 0.0, 5.0};
    std::vector<std::vector<double>> x, tx;
    std::vector<int> y, ty;
    for (int i = 0; i < 30; ++i) {
      const int k = i % 3;
      x.push_back({cx[k] + 0.03 * i, cy[k] - 0.02 * i});
      y.push_back(k);
      tx.push_back({cx[k] + 0.2, cy[k] + 0.1});
      ty.push_back(k);
    }
    CHECK(ridge_probe_accuracy(x, y, tx, ty, 3, 1e-2) == 1.0);
  }

  TEST_CASE("collaboration sweep shape and k = 1") {
    const auto c = tiny();
    const auto s = collaboration_sweep(c, {1, 2, 4}, {1, 2}, 2);
    CHECK(s.rows.size() == 3 * 2 + 3);
    std::size_t aggregates = 0;
    for (const auto& r : s.rows) aggregates += !r.seed.has_value();
    CHECK(aggregates == 3);
    REQUIRE(s.mean_accuracy.size() == 3);
    // k = 1 is the mean single-model accuracy of the personalized models.
    for (std::uint64_t seed : {1u, 2u}) {
      const auto run = run_screened_training(resolved(c, seed), 2, false);
      double mean = 0.0;
      for (double a : run.rounds.back().metrics.per_client_accuracy) mean += a / 5.0;
      for (const auto& r : s.rows) {
        if (r.count == 1 && r.seed == seed) CHECK(r.accuracy == doctest::Approx(mean).epsilon(1e-12));
      }
    }
  }

  TEST_CASE("detection latency is monotone in device count") {
    const auto lat = detection_latency_sweep(tiny(), {5, 10, 20});
    REQUIRE(lat.size() == 3);
    CHECK(lat[0].second > 0.0);
    CHECK(lat[1].second >= lat[0].second);
    CHECK(lat[2].second >= lat[1].second);
  }

  TEST_CASE("run_experiment: files, documented columns, determinism") {
    const auto a = scratch("a"), b = scratch("b");
    auto c = tiny();
    c.placement_instance = std::string(FLT_SOURCE_DIR) + "/configs/placement_example.json";
    const auto s = run_experiment(c, a.string(), true);
    run_experiment(c, b.string(), false);
    CHECK(s.lemma_pass_rate.has_value());
    CHECK(s.final_accuracy >= 0.0);
    for (const char* f : {"rounds.csv", "detection.json", "traces.csv", "summary.json", "timing.json",
                          "placement.json", "checkpoints/global.ckpt", "checkpoints/client_0.ckpt",
                          "plots/accuracy.svg"}) {
      CHECK_MESSAGE(fs::exists(a / f), f);
    }
    for (const char* f : {"rounds.csv", "detection.json", "traces.csv", "summary.json", "placement.json",
                          "checkpoints/global.ckpt", "checkpoints/client_4.ckpt"}) {
      CHECK_MESSAGE(slurp(a / f) == slurp(b / f), f);
    }

    const auto sweep_dir = scratch("sweep");
    write_collab_sweep(collaboration_sweep(c, {1, 2}, {1}, 2), sweep_dir.string(), false);
    const auto det_dir = scratch("det");
    write_detection_suite(detection_suite(c, {1}), det_dir.string());

    const std::string doc = slurp(fs::path(FLT_SOURCE_DIR) / "docs" / "metrics.md");
    auto documented = [&](std::string col) {
      if (col.rfind("resilience_", 0) == 0) col = "resilience_<layer>";
      return doc.find("`" + col + "`") != std::string::npos;
    };
    for (const auto& csv : {a / "rounds.csv", a / "traces.csv", sweep_dir / "collab_sweep.csv",
                            det_dir / "detection_suite.csv", det_dir / "detection_latency.csv",
                            det_dir / "detection_latency_by_devices.csv"}) {
      for (const auto& col : header(csv)) CHECK_MESSAGE(documented(col), (csv.string() + ": " + col));
    }

    // Rounds CSV: one GLOBAL row and N client rows per round.
    std::ifstream in(a / "rounds.csv");
    std::string line;
    std::getline(in, line);
    int globals = 0, clients = 0;
    while (std::getline(in, line)) (line.find(",GLOBAL,") != std::string::npos ? globals : clients)++;
    CHECK(globals == 3);
    CHECK(clients == 15);

    bool ok = false;
    const auto text = render_report(a.string(), &ok);
    CHECK(text.find("lemma") != std::string::npos);
    CHECK(ok == s.checks_passed);
    for (const auto& p : {a, b, sweep_dir, det_dir}) fs::remove_all(p);
  }

  TEST_CASE("checkpoint from a run predicts like the personalized model") {
    const auto a = scratch("ckpt");
    auto c = tiny();
    c.analysis.lemma = c.analysis.theorem = false;
    run_experiment(c, a.string(), false);
    const auto m = load_checkpoint_file((a / "checkpoints" / "client_1.ckpt").string());
    const auto run = run_screened_training(resolved(c), 3);
    CHECK(m == run.final_models[1]);
    fs::remove_all(a);
  }

  TEST_CASE("line chart is valid-looking SVG") {
    const auto p = fs::temp_directory_path() / "flt_chart.svg";
    write_line_chart(p.string(), "t<1>", "x", {{"a", {1, 2, 3}}, {"b", {3, std::nan(""), 1}}});
    const auto s = slurp(p);
    CHECK(s.rfind("<svg", 0) == 0);
    CHECK(s.find("t&lt;1&gt;") != std::string::npos);
    CHECK(s.find("</svg>") != std::string::npos);
    fs::remove(p);
  }
}
