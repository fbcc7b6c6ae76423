#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "flt/dataset.hpp"
#include "flt/model.hpp"

namespace flt {

// Layered: only common layers are averaged; private layers stay on the
// client. Classical: every layer is averaged (the reference FL mode).
enum class AggregationScope { kLayered, kClassical };

const char* to_string(AggregationScope scope);
AggregationScope parse_aggregation_scope(const std::string& s);
VisibilityFilter aggregation_filter(AggregationScope scope);

struct FederationConfig {
  int num_clients = 10;
  int epochs = 100;
  double lr_min = 0.01;
  double lr_max = 0.01;
  double adapt_min = 0.0;
  double adapt_max = 1.0;
  double comp_min = 0.0;
  double comp_max = 1.0;
  int local_steps_per_round = 5;
  int batch_size = 32;  // 0 means full batch
  double comp_threshold = 0.5;
  AggregationScope scope = AggregationScope::kLayered;
  bool parallel = false;
  std::uint64_t seed = 0;

  bool operator==(const FederationConfig&) const = default;
};

void validate(const FederationConfig& config);

// Per (client, layer) coefficients drawn once at initialization.
struct InitCoefficients {
  std::vector<std::vector<double>> learning_rates;
  std::vector<std::vector<double>> adaptability;
  std::vector<std::vector<double>> compatibility_thresholds;
};

InitCoefficients sample_coefficients(const FederationConfig& config, std::size_t num_layers);

struct RoundMetrics {
  int round = 0;
  std::vector<double> per_client_loss;
  std::vector<double> per_client_accuracy;
  std::vector<double> per_client_update_norm;
  std::vector<double> per_client_gradient_norm;
  double global_test_accuracy = 0.0;
  double lyapunov_value = 0.0;  // sum of per_client_loss
  double aggregate_update_norm = 0.0;
  // Sum over clients and steps of lr_j * |g_j|^2, one entry per layer.
  std::vector<double> layer_loss_contribution;
  std::vector<std::size_t> members;  // devices whose uploads were averaged
};

// Element-wise mean of the selected layers, summed in ascending model order.
// Throws InputError on an empty list and StructureError on mismatched specs.
std::vector<ParamView> federated_average(std::span<const LayeredModel> models,
                                         VisibilityFilter filter);
std::vector<ParamView> federated_average(std::span<const LayeredModel> models,
                                         VisibilityFilter filter,
                                         std::span<const std::size_t> members);

class Aggregator {
 public:
  virtual ~Aggregator() = default;
  virtual std::vector<ParamView> aggregate(std::span<const LayeredModel> uploads,
                                           std::span<const std::size_t> members,
                                           VisibilityFilter filter) = 0;
};

class PlainAggregator final : public Aggregator {
 public:
  std::vector<ParamView> aggregate(std::span<const LayeredModel> uploads,
                                   std::span<const std::size_t> members,
                                   VisibilityFilter filter) override {
    return federated_average(uploads, filter, members);
  }
};

// Copies the layers selected by `filter` from global into local.
LayeredModel sync_from_global(LayeredModel local, const LayeredModel& global,
                              VisibilityFilter filter);

struct LocalUpdate {
  LayeredModel model;
  double loss = 0.0;  // full-partition loss before the first step
  double gradient_norm = 0.0;  // largest step gradient norm
  double update_norm = 0.0;
  std::vector<double> layer_contribution;
  std::size_t samples_consumed = 0;
};

// `batch_size` 0 means full batch. Minibatches are drawn with replacement
// from a stream keyed by `seed`.
LocalUpdate train_local(LayeredModel start, const Partition& data,
                        std::span<const double> layer_lrs, int steps, int batch_size,
                        std::uint64_t seed);

struct RoundOutput {
  LayeredModel global;
  std::vector<LayeredModel> locals;
  RoundMetrics metrics;
};

// One synchronous round: every client overwrites its selected layers from
// `global`, runs `local_steps` SGD steps, then the selected layers are
// averaged into the new global. Test accuracy is left empty.
RoundOutput run_round(const LayeredModel& global, std::span<const LayeredModel> locals,
                      std::span<const Partition> partitions,
                      std::span<const std::vector<double>> layer_lrs, int local_steps,
                      int batch_size, AggregationScope scope, int round, std::uint64_t seed);

// Stateful driver with the local-training and aggregation phases exposed
// separately, so callers can tamper with uploads or screen them before
// aggregation. The dataset must outlive the Federation.
class Federation {
 public:
  Federation(FederationConfig config, const FederatedDataset& dataset,
             std::vector<LayerSpec> specs);

  std::vector<LayeredModel> train_clients();
  RoundMetrics aggregate(std::vector<LayeredModel> uploads,
                         std::span<const std::size_t> members = {},
                         Aggregator* aggregator = nullptr);
  RoundMetrics step();

  int round() const { return round_; }
  const FederationConfig& config() const { return config_; }
  const FederatedDataset& dataset() const { return *dataset_; }
  const std::vector<LayerSpec>& specs() const { return specs_; }
  const LayeredModel& global() const { return global_; }
  const std::vector<LayeredModel>& locals() const { return locals_; }
  const InitCoefficients& coefficients() const { return coefficients_; }
  const std::vector<std::size_t>& samples_consumed() const { return samples_consumed_; }
  VisibilityFilter filter() const { return aggregation_filter(config_.scope); }

  // Global shared layers combined with the client's own private layers.
  LayeredModel personalized(int client) const;

 private:
  FederationConfig config_;
  const FederatedDataset* dataset_;
  std::vector<LayerSpec> specs_;
  InitCoefficients coefficients_;
  LayeredModel global_;
  std::vector<LayeredModel> locals_;
  std::vector<std::size_t> samples_consumed_;
  std::vector<LocalUpdate> pending_;
  int round_ = 0;
};

struct TrainingResult {
  std::vector<RoundMetrics> rounds;
  LayeredModel global;
  std::vector<LayeredModel> locals;
  InitCoefficients coefficients;
};

TrainingResult run_training(const FederationConfig& config, const FederatedDataset& dataset,
                            std::span<const LayerSpec> specs);

enum class ConvergenceVerdict { kConverging, kStalled, kDiverging };
const char* to_string(ConvergenceVerdict v);

// Over the last `window` steps of V(t): diverging if V grew by more than 10%,
// converging if the relative decrease is >= epsilon for >= 80% of the steps,
// stalled otherwise.
ConvergenceVerdict check_convergence(std::span<const double> history, double epsilon,
                                     std::size_t window);

}  // namespace flt
