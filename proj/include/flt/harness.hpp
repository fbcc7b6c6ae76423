#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "flt/anomaly.hpp"
#include "flt/attack.hpp"
#include "flt/collaboration.hpp"
#include "flt/dataset.hpp"
#include "flt/federation.hpp"
#include "flt/model.hpp"

namespace flt {

struct ModelConfig {
  // Empty means the default topology for the dataset shape.
  std::vector<LayerSpec> layers;
  // Single linear + softmax layer trained full batch.
  bool convex = false;

  bool operator==(const ModelConfig&) const = default;
};

struct CollaborationConfig {
  double alpha_exp = 0.5;
  double beta_expertise = 0.5;
  std::vector<int> model_counts{1, 2, 3, 4};
  double beta_resilience = 0.5;
  int rounds = 20;  // per sweep run

  bool operator==(const CollaborationConfig&) const = default;
};

struct AnomalyConfig {
  DetectorConfig detector;
  // No attack when `attack.targets` is empty.
  AttackSpec attack;
  // Drop flagged uploads from aggregation.
  bool exclude_flagged = true;
  double zscore_threshold = 1.5;
  std::vector<double> grid_delta_scales{1.0, 2.0, 5.0};
  std::vector<int> grid_attackers{0, 1, 2};
  int detection_rounds = 20;

  bool operator==(const AnomalyConfig&) const = default;
};

struct EncryptionConfig {
  bool enabled = false;
  unsigned key_bits = 512;
  int scale_bits = 16;
  double clamp_range = 8.0;
  double gamma = 0.5;

  bool operator==(const EncryptionConfig&) const = default;
};

struct AnalysisConfig {
  bool lemma = true;
  bool theorem = true;
  bool privacy = true;
  // Rounds of the trace and probe runs; 0 means federation.epochs.
  int rounds = 0;
  double frozen_delta_scale = 5.0;
  int first_checked_round = 5;
  double required_pass_rate = 0.9;
  double required_privacy_gap = 0.05;

  bool operator==(const AnalysisConfig&) const = default;
};

struct ExperimentConfig {
  std::uint64_t seed = 1;
  DatasetConfig dataset;
  ModelConfig model;
  FederationConfig federation;
  CollaborationConfig collaboration;
  AnomalyConfig anomaly;
  EncryptionConfig encryption;
  AnalysisConfig analysis;
  std::string placement_instance;  // optional
  std::string output_dir = "out";
  std::vector<std::uint64_t> sweep_seeds{1, 2, 3, 4, 5};

  bool operator==(const ExperimentConfig&) const = default;
};

// 16 -> 32 (relu, common) -> 32 (relu, common) -> C (softmax, private).
std::vector<LayerSpec> default_layers(int feature_dim, int num_classes);
std::vector<LayerSpec> convex_layers(int feature_dim, int num_classes);
std::vector<LayerSpec> model_layers(const ExperimentConfig& config);

// Copies `seed` into the dataset and federation seeds and aligns client
// counts; convex mode forces full batch.
ExperimentConfig resolved(ExperimentConfig config, std::uint64_t seed);
ExperimentConfig resolved(const ExperimentConfig& config);

// Throws ConfigError naming the offending field.
void validate(const ExperimentConfig& config);
ExperimentConfig parse_config(const std::string& json_text);
std::string serialize_config(const ExperimentConfig& config);
ExperimentConfig load_config(const std::string& path);

// What one round of an attacked/screened layered run produced.
struct RoundRecord {
  RoundMetrics metrics;
  std::vector<AnomalyReport> reports;  // one per edge node
  std::set<int> flagged;               // client ids, CLMD
  std::set<int> verified;
  std::set<int> zscore_flagged;        // full-model control
  std::set<int> attackers;
  double detection_ms = 0.0;
  double zscore_ms = 0.0;
  // Collaboration metrics.
  std::vector<double> lambda;
  double consensus_accuracy = 0.0;
  double mean_compatibility = 0.0;
  std::vector<double> resilience;  // per layer
};

struct TrainingRun {
  std::vector<RoundRecord> rounds;
  std::vector<LayeredModel> final_models;  // personalized
  LayeredModel global;
  std::uint64_t plaintext_bytes = 0;
  std::uint64_t ciphertext_bytes = 0;
  double max_secure_deviation = 0.0;  // vs plaintext aggregation of the same uploads
};

// Layered run with optional attack, per-round CLMD screening, optional
// encryption, and collaboration metrics.
TrainingRun run_screened_training(const ExperimentConfig& config, int rounds,
                                  bool compute_collaboration = true);

std::vector<DivergencePoint> run_lemma_trace(const ExperimentConfig& config, int rounds);
// One frozen attacker at device 0 in both runs.
std::vector<MarginPoint> run_theorem_trace(const ExperimentConfig& config, int rounds,
                                           double delta_scale);

double lemma_pass_rate(const std::vector<DivergencePoint>& trace, int first_round);
double theorem_pass_rate(const std::vector<MarginPoint>& trace, int first_round);

struct PrivacyProbeResult {
  double layered_accuracy = 0.0;
  double full_accuracy = 0.0;
  double chance = 0.0;
  double layered_loss() const { return layered_accuracy - chance; }
  double full_loss() const { return full_accuracy - chance; }
};

// Leave-one-client-out ridge probe predicting each client's dominant label
// from its shared update, layered (common layers) versus full-model sharing.
PrivacyProbeResult run_privacy_probe(const ExperimentConfig& config, int rounds);
// Accuracy of a one-vs-rest ridge classifier in dual form.
double ridge_probe_accuracy(const std::vector<std::vector<double>>& train_x,
                            const std::vector<int>& train_y,
                            const std::vector<std::vector<double>>& test_x,
                            const std::vector<int>& test_y, int num_classes, double ridge);

struct CollabRow {
  int count = 0;
  std::optional<std::uint64_t> seed;  // nullopt for the aggregate row
  double accuracy = 0.0;
};

struct CollabSweep {
  std::vector<CollabRow> rows;
  std::vector<int> counts;
  std::vector<double> mean_accuracy;
  bool trend_holds = false;
};

// Non-decreasing in count, tolerating one adjacent drop of at most `slack`.
bool collaboration_trend_holds(const std::vector<double>& means, double slack);

CollabSweep collaboration_sweep(const ExperimentConfig& config, const std::vector<int>& counts,
                                const std::vector<std::uint64_t>& seeds, int rounds);

struct DetectionCell {
  std::string detector;  // clmd_common or zscore_full
  double delta_scale = 0.0;
  int attackers = 0;
  std::optional<std::uint64_t> seed;  // nullopt for the across-seed mean
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
  std::optional<double> precision;
  std::optional<double> recall;
  double f1 = 0.0;
  double false_positive_rate = 0.0;
  double latency_ms = 0.0;  // mean per round
};

struct DetectionSuite {
  std::vector<DetectionCell> rows;   // per seed
  std::vector<DetectionCell> cells;  // per grid cell, mean over seeds
  // (device count, mean ms per detect call)
  std::vector<std::pair<int, double>> latency_by_devices;
};

void finalize(DetectionCell& cell);

std::vector<std::pair<int, double>> detection_latency_sweep(const ExperimentConfig& config,
                                                            const std::vector<int>& device_counts);

DetectionSuite detection_suite(const ExperimentConfig& config,
                               const std::vector<std::uint64_t>& seeds);

// At every attacked cell with delta_scale >= 5: CLMD recall 1, precision
// >= 0.9, and CLMD F1 >= the z-score control's F1.
bool detection_operating_point_holds(const DetectionSuite& suite);

struct RunSummary {
  double final_accuracy = 0.0;
  double final_lyapunov = 0.0;
  std::string convergence;
  std::optional<double> lemma_pass_rate;
  std::optional<double> theorem_pass_rate;
  std::optional<PrivacyProbeResult> privacy;
  std::optional<double> security;
  bool checks_passed = true;
};

// Writes rounds.csv, detection.json, traces.csv, summary.json, timing.json
// and checkpoints under out_dir; plots/*.svg when `plots` is set.
RunSummary run_experiment(const ExperimentConfig& config, const std::string& out_dir,
                          bool plots);

void write_collab_sweep(const CollabSweep& sweep, const std::string& out_dir, bool plots);
void write_detection_suite(const DetectionSuite& suite, const std::string& out_dir);

// Human-readable digest of an output directory's summary.json and any
// sweep outputs found next to it; `checks_passed` is the stored verdict.
std::string render_report(const std::string& out_dir, bool* checks_passed);

// Renders a multi-series line chart as SVG.
struct Series {
  std::string name;
  std::vector<double> values;
};
void write_line_chart(const std::string& path, const std::string& title,
                      const std::string& x_label, const std::vector<Series>& series);

}  // namespace flt
