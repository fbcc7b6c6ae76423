#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "flt/attack.hpp"
#include "flt/model.hpp"

namespace flt {

struct Partition {
  Matrix features;
  std::vector<int> labels;
  // Globally unique sample ids, used to check disjointness between splits.
  std::vector<std::size_t> sample_ids;

  std::size_t size() const { return labels.size(); }
  bool operator==(const Partition&) const = default;
};

std::vector<std::size_t> class_counts(const Partition& p, int num_classes);
int dominant_label(const Partition& p, int num_classes);

struct DatasetConfig {
  int num_clients = 10;
  int num_classes = 4;
  int feature_dim = 16;
  int samples_per_client = 200;
  double dirichlet_alpha = 0.5;
  int detection_size = 50;  // per edge node
  int num_edge_nodes = 1;
  int test_size = 1000;
  // Class means ~ N(0, class_spread^2 I); samples ~ N(mean, cluster_std^2 I).
  double class_spread = 1.0;
  double cluster_std = 1.5;
  std::uint64_t seed = 0;

  bool operator==(const DatasetConfig&) const = default;
};

// Throws ConfigError on degenerate sizes.
void validate(const DatasetConfig& config);

struct FederatedDataset {
  std::vector<Partition> client_partitions;
  Partition shared_test;
  std::vector<Partition> detection_sets;  // one per edge node
  int num_classes = 0;
  double dirichlet_alpha = 0.0;
  // Client ids served by each edge node.
  std::vector<std::vector<int>> node_devices;
  // Per-client class proportions drawn from the Dirichlet prior.
  std::vector<std::vector<double>> client_class_proportions;

  std::size_t feature_dim() const { return shared_test.features.cols(); }
  bool operator==(const FederatedDataset&) const = default;
};

FederatedDataset generate(const DatasetConfig& config);
FederatedDataset generate(int num_clients, int num_classes, int samples_per_client,
                          double dirichlet_alpha, int detection_size, std::uint64_t seed);

// Label-flip poisoning: exactly ceil(fraction * n) labels pass through the
// fixed pairing permutation 0<->1, 2<->3, ... (a trailing odd class maps to
// itself). `attack.delta_scale` is the fraction; features are unchanged.
Partition poison_partition(Partition partition, const AttackSpec& attack, int num_classes,
                           std::uint64_t seed);
int flip_label(int label, int num_classes);

// Largest-remainder rounding of `total` items to proportions.
std::vector<std::size_t> allocate_counts(const std::vector<double>& proportions,
                                         std::size_t total);

void save_dataset(const FederatedDataset& dataset, const std::string& path);
FederatedDataset load_dataset(const std::string& path);

}  // namespace flt
