#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "flt/attack.hpp"
#include "flt/dataset.hpp"
#include "flt/model.hpp"

namespace flt {

using FlatParams = std::vector<double>;

// Leave-one-out benchmarks: out[j] is the mean of every input except j,
// computed as (mean - p_j / M) * M / (M - 1). Throws InputError if M < 2 or
// the lengths differ.
std::vector<FlatParams> loo_benchmark(std::span<const FlatParams> params);
// Scalar form of the same closed form.
std::vector<double> loo_mean(std::span<const double> values);

struct VarianceDistances {
  std::vector<double> v;      // |p_j - p'_j|
  double v_mean = 0.0;
  std::vector<double> v_loo;  // leave-one-out mean of v
};

VarianceDistances variance_distances(std::span<const FlatParams> params,
                                     std::span<const FlatParams> benchmarks);

enum class FlagMode { kAllMean, kLeaveOneOut };
const char* to_string(FlagMode mode);
FlagMode parse_flag_mode(const std::string& s);

// kAllMean flags j iff v_j > theta * v_mean; kLeaveOneOut flags j iff
// v_j > theta * v_loo_j. Device indices are 0-based.
std::set<std::size_t> flag_suspicious(const VarianceDistances& distances, double theta,
                                      FlagMode mode);

struct DeviceUpload {
  std::vector<ParamView> common;   // p^a
  std::vector<ParamView> private_; // q^p
};

struct UploadBatch {
  int node_id = 0;
  std::vector<int> device_ids;  // client id of each entry in `devices`
  std::vector<DeviceUpload> devices;

  std::size_t size() const { return devices.size(); }
};

// Builds an upload batch from full device models.
UploadBatch make_upload_batch(int node_id, std::span<const LayeredModel> models,
                              std::span<const int> device_ids);
// Concatenated common-layer parameters of each device.
std::vector<FlatParams> common_vectors(const UploadBatch& batch);

struct VerificationResult {
  std::set<std::size_t> verified;
  std::map<std::size_t, double> accuracy_diffs;
};

// Per-class accuracy; classes absent from `data` are reported as nullopt.
std::vector<std::optional<double>> per_class_accuracy(const LayeredModel& model,
                                                      const Partition& data, int num_classes);

// For each flagged device, compares the model (benchmark common + device
// private) against (uploaded common + device private) on the detection
// set. e = max_k (phi'_k - phi_k) / max(phi'_k, 1/|detection|); verified
// iff e > beta_poison.
VerificationResult accuracy_verification(const UploadBatch& batch,
                                         std::span<const FlatParams> benchmarks,
                                         const std::set<std::size_t>& flagged,
                                         std::span<const LayerSpec> specs,
                                         const Partition& detection_set, double beta_poison);

struct DetectorConfig {
  double theta = 2.0;
  double beta_poison = 0.2;
  FlagMode mode = FlagMode::kLeaveOneOut;

  bool operator==(const DetectorConfig&) const = default;
};

struct AnomalyReport {
  int node_id = 0;
  std::vector<int> device_ids;
  std::vector<FlatParams> benchmarks;
  VarianceDistances distances;
  double theta = 0.0;
  std::set<std::size_t> flagged;
  std::set<std::size_t> verified_poisoners;
  std::map<std::size_t, double> accuracy_diffs;
};

// The full common-layer screening pipeline for one node and one round.
AnomalyReport detect(const UploadBatch& batch, std::span<const LayerSpec> specs,
                     const Partition& detection_set, const DetectorConfig& config);

// Per-element standard deviation across uploads, averaged in quadrature
// over elements.
double benign_spread(std::span<const FlatParams> honest);

// param_noise: adds N(0, (delta_scale * benign_std)^2) per element.
// param_scale: multiplies every element by (1 + delta_scale).
FlatParams inject_param_attack(const FlatParams& params, const AttackSpec& spec,
                               double benign_std, std::uint64_t seed);

// Full-model control detector: z-scores of |w_j - mean(w)|, flags z > threshold.
std::set<std::size_t> zscore_detect(std::span<const FlatParams> full_params, double z_threshold);

struct DivergencePoint {
  int round = 0;
  double d_c = 0.0;   // layered run, common layers
  double d_ce = 0.0;  // classical run, full model
  double d_p = 0.0;   // layered run, private layers
};

// Mean variance distance of the given uploads.
double mean_distance(std::span<const FlatParams> uploads);

DivergencePoint divergence_point(int round, std::span<const LayeredModel> layered_uploads,
                                 std::span<const LayeredModel> classical_uploads);

// Rounds are aligned by index; throws InputError when the runs differ in
// length or device count.
std::vector<DivergencePoint> layer_divergence_trace(
    std::span<const std::vector<LayeredModel>> layered_rounds,
    std::span<const std::vector<LayeredModel>> classical_rounds);

struct MarginPoint {
  int round = 0;
  // Malicious deviation over the honest average deviation, per
  // representation.
  double common = 0.0;
  double full = 0.0;
  double priv = 0.0;
};

// v_m / mean(v_honest) for one representation.
double deviation_ratio(std::span<const FlatParams> uploads, std::size_t malicious);

MarginPoint detection_margin_point(int round, std::span<const LayeredModel> layered_uploads,
                                   std::span<const LayeredModel> classical_uploads,
                                   std::optional<std::size_t> malicious);

std::vector<MarginPoint> detection_margin(
    std::span<const std::vector<LayeredModel>> layered_rounds,
    std::span<const std::vector<LayeredModel>> classical_rounds,
    std::optional<std::size_t> malicious);

FlatParams flatten(const LayeredModel& model, VisibilityFilter filter);

}  // namespace flt
