#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include "doctest.h"
#include "flt/flt.h"

namespace fs = std::filesystem;

namespace {

std::string take(char* s) {
  std::string out = s ? s : "";
  flt_string_free(s);
  return out;
}

const char* kTiny = R"({
  "seed": 4,
  "dataset": {"num_clients": 4, "samples_per_client": 40, "test_size": 40, "detection_size": 20},
  "federation": {"epochs": 2, "local_steps_per_round": 1},
  "analysis": {"rounds": 2, "first_checked_round": 1, "privacy": false},
  "anomaly": {"detection_rounds": 1, "grid_delta_scales": [5.0], "grid_attackers": [1]},
  "collaboration": {"rounds": 1, "model_counts": [1, 2]},
  "sweep_seeds": [1]
})";

}  // namespace

TEST_SUITE("c_api") {
  TEST_CASE("status names and version") {
    CHECK(std::strlen(flt_version()) > 0);
    CHECK(std::string(flt_status_name(FLT_OK)) == "ok");
    CHECK(std::string(flt_status_name(FLT_ERR_CONFIG)) == "config");
  }

  TEST_CASE("null arguments are rejected") {
    CHECK(flt_config_default(nullptr) == FLT_ERR_ARGUMENT);
    CHECK(flt_config_set_seed(nullptr, 1) == FLT_ERR_ARGUMENT);
    CHECK(std::strlen(flt_last_error()) > 0);
    flt_config_free(nullptr);
    flt_model_free(nullptr);
    flt_string_free(nullptr);
  }

  TEST_CASE("config parse errors carry the field name") {
    flt_config* c = nullptr;
    CHECK(flt_config_parse(R"({"federation": {"epocs": 1}})", &c) == FLT_ERR_CONFIG);
    CHECK(c == nullptr);
    CHECK(std::string(flt_last_error()).find("epocs") != std::string::npos);
    CHECK(flt_config_load("/nonexistent/cfg.json", &c) != FLT_OK);
  }

  TEST_CASE("config round trip and setters") {
    flt_config* c = nullptr;
    REQUIRE(flt_config_parse(kTiny, &c) == FLT_OK);
    REQUIRE(flt_config_set_seed(c, 11) == FLT_OK);
    std::uint64_t seed = 0;
    CHECK(flt_config_get_seed(c, &seed) == FLT_OK);
    CHECK(seed == 11);
    REQUIRE(flt_config_set_output_dir(c, "somewhere") == FLT_OK);
    const char* dir = nullptr;
    CHECK(flt_config_get_output_dir(c, &dir) == FLT_OK);
    CHECK(std::string(dir) == "somewhere");
    char* text = nullptr;
    REQUIRE(flt_config_to_json(c, &text) == FLT_OK);
    const std::string j = take(text);
    flt_config* back = nullptr;
    REQUIRE(flt_config_parse(j.c_str(), &back) == FLT_OK);
    char* text2 = nullptr;
    REQUIRE(flt_config_to_json(back, &text2) == FLT_OK);
    CHECK(take(text2) == j);
    flt_config_free(back);
    flt_config_free(c);
  }

  TEST_CASE("experiment, model checkpoint, report, sweeps") {
    const fs::path out = fs::temp_directory_path() / "flt_c_api_run";
    fs::remove_all(out);
    flt_config* c = nullptr;
    REQUIRE(flt_config_parse(kTiny, &c) == FLT_OK);
    flt_run_summary s{};
    REQUIRE(flt_run_experiment(c, out.c_str(), 0, &s) == FLT_OK);
    CHECK(s.has_lemma == 1);
    CHECK(s.has_privacy == 0);
    CHECK(s.final_accuracy >= 0.0);

    flt_model* m = nullptr;
    REQUIRE(flt_model_load((out / "checkpoints" / "client_0.ckpt").c_str(), &m) == FLT_OK);
    size_t in = 0, classes = 0, params = 0;
    CHECK(flt_model_dims(m, &in, &classes, &params) == FLT_OK);
    CHECK(in == 16);
    CHECK(classes == 4);
    CHECK(params == 16 * 32 + 32 + 32 * 32 + 32 + 32 * 4 + 4);
    std::vector<double> x(2 * in, 0.5);
    int labels[2] = {-1, -1};
    CHECK(flt_model_predict(m, x.data(), 2, labels) == FLT_OK);
    CHECK(labels[0] >= 0);
    CHECK(labels[0] < 4);
    CHECK(labels[0] == labels[1]);
    const auto copy = out / "copy.ckpt";
    CHECK(flt_model_save(m, copy.c_str()) == FLT_OK);
    flt_model* m2 = nullptr;
    REQUIRE(flt_model_load(copy.c_str(), &m2) == FLT_OK);
    int labels2[2] = {-1, -1};
    flt_model_predict(m2, x.data(), 2, labels2);
    CHECK(labels2[0] == labels[0]);
    flt_model_free(m2);
    flt_model_free(m);

    char* report = nullptr;
    int ok = -1;
    REQUIRE(flt_report(out.c_str(), &report, &ok) == FLT_OK);
    CHECK(take(report).size() > 0);
    CHECK(ok == s.checks_passed);

    int trend = -1, holds = -1;
    CHECK(flt_collaboration_sweep(c, out.c_str(), 0, &trend) == FLT_OK);
    CHECK((trend == 0 || trend == 1));
    CHECK(fs::exists(out / "collab_sweep.csv"));
    CHECK(flt_detection_suite(c, out.c_str(), &holds) == FLT_OK);
    CHECK(fs::exists(out / "detection_suite.csv"));
    flt_config_free(c);
    fs::remove_all(out);
  }

  TEST_CASE("placement through the C API") {
    flt_placement_problem* p = nullptr;
    REQUIRE(flt_placement_parse(
                R"({"rate": 10, "bandwidth": 100, "cap_cloud": 100, "cap_edge": 100,
                    "tasks": [{"id": 1, "comp_cloud": 3, "comp_edge": 4, "data_size": 10},
                              {"id": 2, "comp_cloud": 5, "comp_edge": 9, "data_size": 10}]})",
                &p) == FLT_OK);
    flt_placement_plan* plan = nullptr;
    REQUIRE(flt_placement_solve(p, FLT_SOLVER_EXACT, &plan) == FLT_OK);
    double obj = 0;
    int feasible = 0;
    CHECK(flt_placement_plan_objective(plan, &obj, &feasible) == FLT_OK);
    CHECK(obj == 11.0);
    CHECK(feasible == 1);
    int sides[2] = {-1, -1};
    size_t count = 0;
    CHECK(flt_placement_plan_assignment(plan, sides, 2, &count) == FLT_OK);
    CHECK(count == 2);
    CHECK(sides[0] == 0);
    CHECK(sides[1] == 1);
    CHECK(flt_placement_plan_assignment(plan, sides, 1, &count) != FLT_OK);
    char* text = nullptr;
    CHECK(flt_placement_plan_to_json(p, plan, &text) == FLT_OK);
    CHECK(take(text).find("objective") != std::string::npos);
    flt_placement_plan_free(plan);
    flt_placement_problem_free(p);
    CHECK(flt_placement_parse("{\"rate\": -1, \"tasks\": []}", &p) != FLT_OK);
  }

  TEST_CASE("keys through the C API") {
    flt_keypair* k = nullptr;
    CHECK(flt_keypair_generate(128, 1, &k) == FLT_ERR_CONFIG);
    REQUIRE(flt_keypair_generate(512, 3, &k) == FLT_OK);
    std::uint64_t fp = 0;
    CHECK(flt_keypair_fingerprint(k, &fp) == FLT_OK);
    CHECK(fp != 0);
    char* sum = nullptr;
    REQUIRE(flt_keypair_add_check(k, 2, 3, 9, &sum) == FLT_OK);
    CHECK(take(sum) == "5");
    REQUIRE(flt_keypair_add_check(k, 18446744073709551615ULL, 1, 9, &sum) == FLT_OK);
    CHECK(take(sum) == "18446744073709551616");
    char* pub = nullptr;
    char* sec = nullptr;
    REQUIRE(flt_keypair_to_json(k, 0, &pub) == FLT_OK);
    REQUIRE(flt_keypair_to_json(k, 1, &sec) == FLT_OK);
    const std::string p = take(pub), s = take(sec);
    CHECK(p.find("\"p\"") == std::string::npos);
    CHECK(s.find("\"p\"") != std::string::npos);
    flt_keypair_free(k);
  }
}
