#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "flt/flt.h"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitConfig = 2;
constexpr int kExitCheck = 3;

int report_error(flt_status s) {
  std::cerr << "error (" << flt_status_name(s) << "): " << flt_last_error() << '\n';
  return s == FLT_ERR_CONFIG ? kExitConfig : kExitFailure;
}

struct RunOptions {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  bool plots = false;
  bool check = false;
};

void add_run_options(CLI::App* cmd, RunOptions& o, bool with_plots) {
  cmd->add_option("--config", o.config, "Experiment config (JSON); defaults when omitted");
  cmd->add_option("--seed", o.seed, "Override the config seed");
  cmd->add_option("--out", o.out, "Output directory (overrides output_dir)");
  if (with_plots) cmd->add_flag("--plots", o.plots, "Also write SVG line charts");
  cmd->add_flag("--check", o.check, "Exit 3 when an acceptance check fails");
}

// Loads and adjusts the config; returns nullptr after printing on failure.
flt_config* load(const RunOptions& o, int& code) {
  flt_config* c = nullptr;
  flt_status s = o.config.empty() ? flt_config_default(&c) : flt_config_load(o.config.c_str(), &c);
  if (s == FLT_OK && o.seed) s = flt_config_set_seed(c, *o.seed);
  if (s == FLT_OK && !o.out.empty()) s = flt_config_set_output_dir(c, o.out.c_str());
  if (s != FLT_OK) {
    code = report_error(s);
    flt_config_free(c);
    return nullptr;
  }
  return c;
}

const char* out_dir(const flt_config* c) {
  const char* dir = nullptr;
  flt_config_get_output_dir(c, &dir);
  return dir;
}

int cmd_train(const RunOptions& o) {
  int code = kExitOk;
  flt_config* c = load(o, code);
  if (!c) return code;
  flt_run_summary s{};
  const flt_status st = flt_run_experiment(c, nullptr, o.plots, &s);
  if (st != FLT_OK) {
    code = report_error(st);
  } else {
    std::printf("final accuracy %.4f, V %.6g\n", s.final_accuracy, s.final_lyapunov);
    if (s.has_lemma) std::printf("lemma pass rate %.3f\n", s.lemma_pass_rate);
    if (s.has_theorem) std::printf("theorem pass rate %.3f\n", s.theorem_pass_rate);
    if (s.has_privacy) {
      std::printf("probe accuracy layered %.3f, full %.3f\n", s.probe_accuracy_layered,
                  s.probe_accuracy_full);
    }
    if (s.has_security) std::printf("Sec %.4f\n", s.security);
    std::printf("outputs in %s\n", out_dir(c));
    if (o.check && !s.checks_passed) code = kExitCheck;
  }
  flt_config_free(c);
  return code;
}

int cmd_detect(const RunOptions& o) {
  int code = kExitOk;
  flt_config* c = load(o, code);
  if (!c) return code;
  int holds = 0;
  const flt_status st = flt_detection_suite(c, nullptr, &holds);
  if (st != FLT_OK) {
    code = report_error(st);
  } else {
    std::printf("detection suite written to %s; operating point %s\n", out_dir(c),
                holds ? "holds" : "does not hold");
    if (o.check && !holds) code = kExitCheck;
  }
  flt_config_free(c);
  return code;
}

int cmd_sweep(const RunOptions& o) {
  int code = kExitOk;
  flt_config* c = load(o, code);
  if (!c) return code;
  int holds = 0;
  const flt_status st = flt_collaboration_sweep(c, nullptr, o.plots, &holds);
  if (st != FLT_OK) {
    code = report_error(st);
  } else {
    std::printf("collaboration sweep written to %s; trend %s\n", out_dir(c),
                holds ? "holds" : "does not hold");
    if (o.check && !holds) code = kExitCheck;
  }
  flt_config_free(c);
  return code;
}

int cmd_placement(const std::string& input, const std::string& solver, const std::string& out) {
  flt_placement_problem* p = nullptr;
  flt_status st = flt_placement_load(input.c_str(), &p);
  if (st != FLT_OK) return report_error(st);
  flt_placement_plan* plan = nullptr;
  st = flt_placement_solve(p, solver == "exact" ? FLT_SOLVER_EXACT : FLT_SOLVER_GREEDY, &plan);
  char* text = nullptr;
  if (st == FLT_OK) st = flt_placement_plan_to_json(p, plan, &text);
  int code = kExitOk;
  if (st != FLT_OK) {
    code = report_error(st);
  } else if (out.empty()) {
    std::cout << text << '\n';
  } else {
    std::ofstream f(out);
    if (!f) {
      std::cerr << "error (io): cannot write " << out << '\n';
      code = kExitFailure;
    } else {
      f << text << '\n';
    }
  }
  flt_string_free(text);
  flt_placement_plan_free(plan);
  flt_placement_problem_free(p);
  return code;
}

int cmd_keygen(unsigned bits, std::uint64_t seed, const std::string& out, bool secret) {
  flt_keypair* k = nullptr;
  flt_status st = flt_keypair_generate(bits, seed, &k);
  if (st != FLT_OK) return report_error(st);
  char* text = nullptr;
  st = flt_keypair_to_json(k, secret, &text);
  int code = kExitOk;
  if (st != FLT_OK) {
    code = report_error(st);
  } else if (out.empty()) {
    std::cout << text << '\n';
  } else {
    std::ofstream f(out);
    if (!f) {
      std::cerr << "error (io): cannot write " << out << '\n';
      code = kExitFailure;
    } else {
      f << text << '\n';
    }
  }
  flt_string_free(text);
  flt_keypair_free(k);
  return code;
}

int cmd_report(const std::string& dir, bool check) {
  char* text = nullptr;
  int ok = 0;
  const flt_status st = flt_report(dir.c_str(), &text, &ok);
  if (st != FLT_OK) return report_error(st);
  std::cout << text;
  flt_string_free(text);
  return check && !ok ? kExitCheck : kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Federated layering toolkit"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(flt_version()));

  RunOptions train_opts, detect_opts, sweep_opts;
  auto* train = app.add_subcommand("train", "Run an experiment and write metrics files");
  add_run_options(train, train_opts, true);
  auto* detect = app.add_subcommand("detect", "Run the detection suite over the attack grid");
  add_run_options(detect, detect_opts, false);
  auto* sweep = app.add_subcommand("sweep-collab", "Sweep consensus accuracy over ensemble sizes");
  add_run_options(sweep, sweep_opts, true);

  auto* placement = app.add_subcommand("placement", "Edge/cloud task placement");
  placement->require_subcommand(1);
  auto* solve = placement->add_subcommand("solve", "Solve a placement instance");
  std::string p_input, p_solver = "exact", p_out;
  solve->add_option("--input", p_input, "Instance JSON")->required()->check(CLI::ExistingFile);
  solve->add_option("--solver", p_solver, "exact or greedy")
      ->check(CLI::IsMember({"exact", "greedy"}));
  solve->add_option("--out", p_out, "Write the plan here instead of stdout");

  auto* keygen = app.add_subcommand("keygen", "Generate a Paillier key pair");
  unsigned k_bits = 512;
  std::uint64_t k_seed = 1;
  std::string k_out;
  bool k_secret = false;
  keygen->add_option("--bits", k_bits, "Modulus size in bits");
  keygen->add_option("--seed", k_seed, "Deterministic seed");
  keygen->add_option("--out", k_out, "Write key JSON here instead of stdout");
  keygen->add_flag("--secret", k_secret, "Include the prime factors");

  auto* report = app.add_subcommand("report", "Summarize an output directory");
  std::string r_dir = "out";
  bool r_check = false;
  report->add_option("--out", r_dir, "Output directory to read");
  report->add_flag("--check", r_check, "Exit 3 when a stored check failed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  if (*train) return cmd_train(train_opts);
  if (*detect) return cmd_detect(detect_opts);
  if (*sweep) return cmd_sweep(sweep_opts);
  if (*solve) return cmd_placement(p_input, p_solver, p_out);
  if (*keygen) return cmd_keygen(k_bits, k_seed, k_out, k_secret);
  if (*report) return cmd_report(r_dir, r_check);
  return kExitFailure;
}
