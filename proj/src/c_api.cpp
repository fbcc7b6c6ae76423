#include "flt/flt.h"

#include <cstring>
#include <exception>
#include <string>

#include "flt/error.hpp"
#include "flt/harness.hpp"
#include "flt/model.hpp"
#include "flt/paillier.hpp"
#include "flt/placement.hpp"
#include "json.hpp"

struct flt_config {
  flt::ExperimentConfig value;
};
struct flt_model {
  flt::LayeredModel value;
};
struct flt_placement_problem {
  flt::PlacementProblem value;
};
struct flt_placement_plan {
  flt::PlacementPlan value;
};
struct flt_keypair {
  flt::paillier::KeyPair value;
};

namespace {

thread_local std::string g_last_error;

flt_status fail(flt_status s, const std::string& message) {
  g_last_error = message;
  return s;
}

// Runs `fn`, translating exceptions into status codes.
template <typename F>
flt_status guarded(F&& fn) {
  try {
    fn();
    g_last_error.clear();
    return FLT_OK;
  } catch (const flt::Error& e) {
    return fail(static_cast<flt_status>(static_cast<int>(e.code())), e.what());
  } catch (const std::bad_alloc&) {
    return fail(FLT_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail(FLT_ERR_INTERNAL, e.what());
  }
}

char* dup_string(const std::string& s) {
  char* out = new char[s.size() + 1];
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

#define FLT_REQUIRE(ptr) \
  if (!(ptr)) return fail(FLT_ERR_ARGUMENT, std::string(#ptr) + " is null")

}  // namespace

extern "C" {

const char* flt_version(void) { return "1.0.0"; }

const char* flt_last_error(void) { return g_last_error.c_str(); }

const char* flt_status_name(flt_status s) {
  switch (s) {
    case FLT_OK: return "ok";
    case FLT_ERR_CONFIG: return "config";
    case FLT_ERR_INPUT: return "input";
    case FLT_ERR_NUMERIC: return "numeric";
    case FLT_ERR_STRUCTURE: return "structure";
    case FLT_ERR_ENCODING: return "encoding";
    case FLT_ERR_PROTOCOL: return "protocol";
    case FLT_ERR_IO: return "io";
    case FLT_ERR_ARGUMENT: return "argument";
    case FLT_ERR_INTERNAL: return "internal";
  }
  return "unknown";
}

void flt_string_free(char* s) { delete[] s; }

flt_status flt_config_default(flt_config** out) {
  FLT_REQUIRE(out);
  return guarded([&] { *out = new flt_config{flt::resolved(flt::ExperimentConfig{})}; });
}

flt_status flt_config_parse(const char* text, flt_config** out) {
  FLT_REQUIRE(text);
  FLT_REQUIRE(out);
  return guarded([&] { *out = new flt_config{flt::parse_config(text)}; });
}

flt_status flt_config_load(const char* path, flt_config** out) {
  FLT_REQUIRE(path);
  FLT_REQUIRE(out);
  return guarded([&] { *out = new flt_config{flt::load_config(path)}; });
}

flt_status flt_config_to_json(const flt_config* config, char** out) {
  FLT_REQUIRE(config);
  FLT_REQUIRE(out);
  return guarded([&] { *out = dup_string(flt::serialize_config(config->value)); });
}

flt_status flt_config_set_seed(flt_config* config, uint64_t seed) {
  FLT_REQUIRE(config);
  return guarded([&] { config->value = flt::resolved(config->value, seed); });
}

flt_status flt_config_get_seed(const flt_config* config, uint64_t* seed) {
  FLT_REQUIRE(config);
  FLT_REQUIRE(seed);
  *seed = config->value.seed;
  return FLT_OK;
}

flt_status flt_config_set_output_dir(flt_config* config, const char* dir) {
  FLT_REQUIRE(config);
  FLT_REQUIRE(dir);
  if (!*dir) return fail(FLT_ERR_CONFIG, "output_dir must not be empty");
  config->value.output_dir = dir;
  return FLT_OK;
}

flt_status flt_config_get_output_dir(const flt_config* config, const char** dir) {
  FLT_REQUIRE(config);
  FLT_REQUIRE(dir);
  *dir = config->value.output_dir.c_str();
  return FLT_OK;
}

void flt_config_free(flt_config* config) { delete config; }

flt_status flt_run_experiment(const flt_config* config, const char* out_dir, int plots,
                              flt_run_summary* summary) {
  FLT_REQUIRE(config);
  return guarded([&] {
    const auto s = flt::run_experiment(config->value, out_dir ? out_dir : config->value.output_dir,
                                       plots != 0);
    if (!summary) return;
    *summary = flt_run_summary{};
    summary->final_accuracy = s.final_accuracy;
    summary->final_lyapunov = s.final_lyapunov;
    summary->has_lemma = s.lemma_pass_rate.has_value();
    summary->lemma_pass_rate = s.lemma_pass_rate.value_or(0.0);
    summary->has_theorem = s.theorem_pass_rate.has_value();
    summary->theorem_pass_rate = s.theorem_pass_rate.value_or(0.0);
    summary->has_privacy = s.privacy.has_value();
    if (s.privacy) {
      summary->probe_accuracy_layered = s.privacy->layered_accuracy;
      summary->probe_accuracy_full = s.privacy->full_accuracy;
    }
    summary->has_security = s.security.has_value();
    summary->security = s.security.value_or(0.0);
    summary->checks_passed = s.checks_passed;
  });
}

flt_status flt_collaboration_sweep(const flt_config* config, const char* out_dir, int plots,
                                   int* trend_holds) {
  FLT_REQUIRE(config);
  return guarded([&] {
    const auto& c = config->value;
    flt::validate(flt::resolved(c));
    const auto sweep =
        flt::collaboration_sweep(c, c.collaboration.model_counts, c.sweep_seeds, c.collaboration.rounds);
    flt::write_collab_sweep(sweep, out_dir ? out_dir : c.output_dir, plots != 0);
    if (trend_holds) *trend_holds = sweep.trend_holds;
  });
}

flt_status flt_detection_suite(const flt_config* config, const char* out_dir,
                               int* operating_point_holds) {
  FLT_REQUIRE(config);
  return guarded([&] {
    const auto& c = config->value;
    flt::validate(flt::resolved(c));
    const auto suite = flt::detection_suite(c, c.sweep_seeds);
    flt::write_detection_suite(suite, out_dir ? out_dir : c.output_dir);
    if (operating_point_holds) *operating_point_holds = flt::detection_operating_point_holds(suite);
  });
}

flt_status flt_report(const char* out_dir, char** text, int* checks_passed) {
  FLT_REQUIRE(out_dir);
  FLT_REQUIRE(text);
  return guarded([&] {
    bool ok = false;
    *text = dup_string(flt::render_report(out_dir, &ok));
    if (checks_passed) *checks_passed = ok;
  });
}

flt_status flt_model_load(const char* path, flt_model** out) {
  FLT_REQUIRE(path);
  FLT_REQUIRE(out);
  return guarded([&] { *out = new flt_model{flt::load_checkpoint_file(path)}; });
}

flt_status flt_model_save(const flt_model* model, const char* path) {
  FLT_REQUIRE(model);
  FLT_REQUIRE(path);
  return guarded([&] { flt::save_checkpoint_file(model->value, path); });
}

flt_status flt_model_dims(const flt_model* model, size_t* input_dim, size_t* num_classes,
                          size_t* parameter_count) {
  FLT_REQUIRE(model);
  if (input_dim) *input_dim = model->value.input_dim();
  if (num_classes) *num_classes = model->value.num_classes();
  if (parameter_count) *parameter_count = model->value.parameter_count();
  return FLT_OK;
}

flt_status flt_model_predict(const flt_model* model, const double* features, size_t rows,
                             int* labels) {
  FLT_REQUIRE(model);
  FLT_REQUIRE(labels);
  if (rows > 0 && !features) return fail(FLT_ERR_ARGUMENT, "features is null");
  return guarded([&] {
    const std::size_t cols = model->value.input_dim();
    flt::Matrix x(rows, cols, std::vector<double>(features, features + rows * cols));
    const auto pred = flt::predict(model->value, x);
    std::copy(pred.begin(), pred.end(), labels);
  });
}

void flt_model_free(flt_model* model) { delete model; }

flt_status flt_placement_load(const char* path, flt_placement_problem** out) {
  FLT_REQUIRE(path);
  FLT_REQUIRE(out);
  return guarded([&] { *out = new flt_placement_problem{flt::load_placement_problem(path)}; });
}

flt_status flt_placement_parse(const char* text, flt_placement_problem** out) {
  FLT_REQUIRE(text);
  FLT_REQUIRE(out);
  return guarded([&] { *out = new flt_placement_problem{flt::parse_placement_problem(text)}; });
}

flt_status flt_placement_solve(const flt_placement_problem* problem, flt_solver solver,
                               flt_placement_plan** out) {
  FLT_REQUIRE(problem);
  FLT_REQUIRE(out);
  if (solver != FLT_SOLVER_EXACT && solver != FLT_SOLVER_GREEDY) {
    return fail(FLT_ERR_ARGUMENT, "unknown solver");
  }
  return guarded([&] {
    *out = new flt_placement_plan{solver == FLT_SOLVER_EXACT ? flt::solve_exact(problem->value)
                                                             : flt::solve_greedy(problem->value)};
  });
}

flt_status flt_placement_plan_objective(const flt_placement_plan* plan, double* objective,
                                        int* feasible) {
  FLT_REQUIRE(plan);
  if (objective) *objective = plan->value.objective;
  if (feasible) *feasible = plan->value.feasible;
  return FLT_OK;
}

flt_status flt_placement_plan_assignment(const flt_placement_plan* plan, int* sides,
                                         size_t capacity, size_t* count) {
  FLT_REQUIRE(plan);
  const auto& a = plan->value.assignment;
  if (count) *count = a.size();
  if (!sides) return FLT_OK;
  if (capacity < a.size()) return fail(FLT_ERR_ARGUMENT, "assignment buffer too small");
  for (std::size_t i = 0; i < a.size(); ++i) sides[i] = static_cast<int>(a[i]);
  return FLT_OK;
}

flt_status flt_placement_plan_to_json(const flt_placement_problem* problem,
                                      const flt_placement_plan* plan, char** out) {
  FLT_REQUIRE(problem);
  FLT_REQUIRE(plan);
  FLT_REQUIRE(out);
  return guarded([&] { *out = dup_string(flt::placement_plan_to_json(problem->value, plan->value)); });
}

void flt_placement_problem_free(flt_placement_problem* problem) { delete problem; }
void flt_placement_plan_free(flt_placement_plan* plan) { delete plan; }

flt_status flt_keypair_generate(unsigned bits, uint64_t seed, flt_keypair** out) {
  FLT_REQUIRE(out);
  return guarded([&] { *out = new flt_keypair{flt::paillier::keygen(bits, seed)}; });
}

flt_status flt_keypair_fingerprint(const flt_keypair* keys, uint64_t* fingerprint) {
  FLT_REQUIRE(keys);
  FLT_REQUIRE(fingerprint);
  *fingerprint = keys->value.public_key.fingerprint();
  return FLT_OK;
}

flt_status flt_keypair_to_json(const flt_keypair* keys, int include_secret, char** out) {
  FLT_REQUIRE(keys);
  FLT_REQUIRE(out);
  return guarded([&] {
    nlohmann::ordered_json j;
    const auto& k = keys->value;
    j["key_bits"] = k.key_bits;
    j["fingerprint"] = k.public_key.fingerprint();
    j["n"] = flt::paillier::to_hex(k.public_key.n());
    if (include_secret) {
      j["p"] = flt::paillier::to_hex(k.secret_key.p());
      j["q"] = flt::paillier::to_hex(k.secret_key.q());
    }
    *out = dup_string(j.dump(2));
  });
}

flt_status flt_keypair_add_check(const flt_keypair* keys, uint64_t a, uint64_t b, uint64_t seed,
                                 char** decrypted) {
  FLT_REQUIRE(keys);
  FLT_REQUIRE(decrypted);
  return guarded([&] {
    const auto& k = keys->value;
    flt::paillier::EncryptionRng rng(seed);
    auto big = [](uint64_t v) {
      mpz_class m;
      mpz_import(m.get_mpz_t(), 1, 1, sizeof v, 0, 0, &v);
      return m;
    };
    const auto c = k.public_key.add(k.public_key.encrypt(big(a), rng.state()),
                                    k.public_key.encrypt(big(b), rng.state()));
    *decrypted = dup_string(k.secret_key.decrypt(c).get_str(10));
  });
}

void flt_keypair_free(flt_keypair* keys) { delete keys; }

}  // extern "C"
