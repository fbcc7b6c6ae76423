#include "flt/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "flt/error.hpp"
#include "flt/rng.hpp"
#include "json.hpp"

namespace flt {

const char* to_string(AttackKind kind) {
  switch (kind) {
    case AttackKind::kParamNoise: return "param_noise";
    case AttackKind::kParamScale: return "param_scale";
    case AttackKind::kLabelFlip: return "label_flip";
  }
  return "?";
}

AttackKind parse_attack_kind(const std::string& s) {
  if (s == "param_noise") return AttackKind::kParamNoise;
  if (s == "param_scale") return AttackKind::kParamScale;
  if (s == "label_flip") return AttackKind::kLabelFlip;
  throw ConfigError("unknown attack kind '" + s + "'");
}

std::vector<std::size_t> class_counts(const Partition& p, int num_classes) {
  std::vector<std::size_t> counts(static_cast<std::size_t>(num_classes), 0);
  for (int y : p.labels) ++counts.at(static_cast<std::size_t>(y));
  return counts;
}

int dominant_label(const Partition& p, int num_classes) {
  const auto counts = class_counts(p, num_classes);
  return static_cast<int>(std::max_element(counts.begin(), counts.end()) - counts.begin());
}

void validate(const DatasetConfig& c) {
  if (c.num_clients < 2) throw ConfigError("dataset.num_clients must be >= 2");
  if (c.num_classes < 2) throw ConfigError("dataset.num_classes must be >= 2");
  if (c.feature_dim < 1) throw ConfigError("dataset.feature_dim must be >= 1");
  if (c.samples_per_client < 10 * c.num_classes) {
    throw ConfigError("dataset.samples_per_client must be >= 10 * num_classes");
  }
  if (!(c.dirichlet_alpha > 0.0) || !std::isfinite(c.dirichlet_alpha)) {
    throw ConfigError("dataset.dirichlet_alpha must be positive");
  }
  if (c.detection_size < 1) throw ConfigError("dataset.detection_size must be >= 1");
  if (c.num_edge_nodes < 1 || c.num_edge_nodes > c.num_clients) {
    throw ConfigError("dataset.num_edge_nodes must be in [1, num_clients]");
  }
  if (c.test_size < c.num_classes) throw ConfigError("dataset.test_size must be >= num_classes");
  if (!(c.class_spread > 0.0)) throw ConfigError("dataset.class_spread must be positive");
  if (!(c.cluster_std > 0.0)) throw ConfigError("dataset.cluster_std must be positive");
}

std::vector<std::size_t> allocate_counts(const std::vector<double>& proportions,
                                         std::size_t total) {
  const double sum = std::accumulate(proportions.begin(), proportions.end(), 0.0);
  std::vector<std::size_t> counts(proportions.size(), 0);
  std::vector<std::pair<double, std::size_t>> remainders;
  std::size_t assigned = 0;
  for (std::size_t k = 0; k < proportions.size(); ++k) {
    const double exact = proportions[k] / sum * static_cast<double>(total);
    counts[k] = static_cast<std::size_t>(std::floor(exact));
    assigned += counts[k];
    remainders.emplace_back(exact - std::floor(exact), k);
  }
  // Larger remainder first, lower class index on ties.
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t i = 0; assigned < total; ++i, ++assigned) {
    ++counts[remainders[i % remainders.size()].second];
  }
  return counts;
}

namespace {

std::vector<double> sample_dirichlet(double alpha, int k, Rng& rng) {
  std::gamma_distribution<double> gamma(alpha, 1.0);
  std::vector<double> p(static_cast<std::size_t>(k));
  double sum = 0.0;
  for (double& v : p) {
    v = gamma(rng);
    sum += v;
  }
  if (!(sum > 0.0)) {
    // All draws underflowed (tiny alpha): the limit is a single vertex.
    std::uniform_int_distribution<int> pick(0, k - 1);
    std::fill(p.begin(), p.end(), 0.0);
    p[static_cast<std::size_t>(pick(rng))] = 1.0;
    return p;
  }
  for (double& v : p) v /= sum;
  return p;
}

class SampleSource {
 public:
  SampleSource(const DatasetConfig& c, Rng& rng) : dim_(static_cast<std::size_t>(c.feature_dim)),
                                                    std_(c.cluster_std), rng_(rng) {
    std::normal_distribution<double> spread(0.0, c.class_spread);
    means_.resize(static_cast<std::size_t>(c.num_classes));
    for (auto& m : means_) {
      m.resize(dim_);
      for (double& v : m) v = spread(rng_);
    }
  }

  Partition draw(const std::vector<std::size_t>& counts) {
    std::vector<int> labels;
    for (std::size_t k = 0; k < counts.size(); ++k) {
      labels.insert(labels.end(), counts[k], static_cast<int>(k));
    }
    std::shuffle(labels.begin(), labels.end(), rng_);
    Partition p{Matrix(labels.size(), dim_), labels, {}};
    std::normal_distribution<double> noise(0.0, std_);
    for (std::size_t r = 0; r < labels.size(); ++r) {
      const auto& mean = means_[static_cast<std::size_t>(labels[r])];
      auto row = p.features.row(r);
      for (std::size_t d = 0; d < dim_; ++d) row[d] = mean[d] + noise(rng_);
      p.sample_ids.push_back(next_id_++);
    }
    return p;
  }

 private:
  std::size_t dim_;
  double std_;
  Rng& rng_;
  std::vector<std::vector<double>> means_;
  std::size_t next_id_ = 0;
};

}  // namespace

FederatedDataset generate(const DatasetConfig& config) {
  validate(config);
  Rng rng(derive_seed(config.seed, {seed_tag::kDataset}));
  SampleSource source(config, rng);

  FederatedDataset ds;
  ds.num_classes = config.num_classes;
  ds.dirichlet_alpha = config.dirichlet_alpha;
  std::vector<double> pooled(static_cast<std::size_t>(config.num_classes), 0.0);
  for (int i = 0; i < config.num_clients; ++i) {
    auto props = sample_dirichlet(config.dirichlet_alpha, config.num_classes, rng);
    const auto counts = allocate_counts(props, static_cast<std::size_t>(config.samples_per_client));
    for (std::size_t k = 0; k < counts.size(); ++k) pooled[k] += static_cast<double>(counts[k]);
    ds.client_partitions.push_back(source.draw(counts));
    ds.client_class_proportions.push_back(std::move(props));
  }
  // Test and detection sets follow the pooled training label distribution.
  ds.shared_test = source.draw(allocate_counts(pooled, static_cast<std::size_t>(config.test_size)));
  ds.node_devices.resize(static_cast<std::size_t>(config.num_edge_nodes));
  for (int i = 0; i < config.num_clients; ++i) {
    ds.node_devices[static_cast<std::size_t>(i % config.num_edge_nodes)].push_back(i);
  }
  for (int n = 0; n < config.num_edge_nodes; ++n) {
    ds.detection_sets.push_back(
        source.draw(allocate_counts(pooled, static_cast<std::size_t>(config.detection_size))));
  }
  return ds;
}

FederatedDataset generate(int num_clients, int num_classes, int samples_per_client,
                          double dirichlet_alpha, int detection_size, std::uint64_t seed) {
  DatasetConfig c;
  c.num_clients = num_clients;
  c.num_classes = num_classes;
  c.samples_per_client = samples_per_client;
  c.dirichlet_alpha = dirichlet_alpha;
  c.detection_size = detection_size;
  c.seed = seed;
  return generate(c);
}

int flip_label(int label, int num_classes) {
  const int partner = label ^ 1;
  return partner < num_classes ? partner : label;
}

Partition poison_partition(Partition partition, const AttackSpec& attack, int num_classes,
                           std::uint64_t seed) {
  if (attack.kind != AttackKind::kLabelFlip) {
    throw ConfigError("poison_partition only applies label_flip attacks");
  }
  const double f = attack.delta_scale;
  if (!(f > 0.0) || f > 1.0) throw ConfigError("label flip fraction must be in (0, 1]");
  const std::size_t n = partition.size();
  const auto flips = std::min(n, static_cast<std::size_t>(std::ceil(f * static_cast<double>(n))));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(seed, {seed_tag::kPoison}));
  std::shuffle(order.begin(), order.end(), rng);
  for (std::size_t i = 0; i < flips; ++i) {
    auto& y = partition.labels[order[i]];
    y = flip_label(y, num_classes);
  }
  return partition;
}

namespace {

using nlohmann::json;

json partition_to_json(const Partition& p) {
  return json{{"rows", p.features.rows()},
              {"cols", p.features.cols()},
              {"features", p.features.data()},
              {"labels", p.labels},
              {"sample_ids", p.sample_ids}};
}

Partition partition_from_json(const json& j) {
  Partition p;
  p.features = Matrix(j.at("rows").get<std::size_t>(), j.at("cols").get<std::size_t>(),
                      j.at("features").get<std::vector<double>>());
  p.labels = j.at("labels").get<std::vector<int>>();
  p.sample_ids = j.at("sample_ids").get<std::vector<std::size_t>>();
  if (p.labels.size() != p.features.rows() || p.sample_ids.size() != p.labels.size()) {
    throw IoError("dataset partition has inconsistent lengths");
  }
  return p;
}

}  // namespace

void save_dataset(const FederatedDataset& ds, const std::string& path) {
  json j;
  j["format"] = "flt-dataset-1";
  j["num_classes"] = ds.num_classes;
  j["dirichlet_alpha"] = ds.dirichlet_alpha;
  j["node_devices"] = ds.node_devices;
  j["client_class_proportions"] = ds.client_class_proportions;
  j["shared_test"] = partition_to_json(ds.shared_test);
  for (const auto& p : ds.client_partitions) j["client_partitions"].push_back(partition_to_json(p));
  for (const auto& p : ds.detection_sets) j["detection_sets"].push_back(partition_to_json(p));
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << j.dump() << '\n';
}

FederatedDataset load_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path);
  json j;
  try {
    in >> j;
    if (j.at("format") != "flt-dataset-1") throw IoError(path + ": unknown dataset format");
    FederatedDataset ds;
    ds.num_classes = j.at("num_classes").get<int>();
    ds.dirichlet_alpha = j.at("dirichlet_alpha").get<double>();
    ds.node_devices = j.at("node_devices").get<std::vector<std::vector<int>>>();
    ds.client_class_proportions =
        j.at("client_class_proportions").get<std::vector<std::vector<double>>>();
    ds.shared_test = partition_from_json(j.at("shared_test"));
    for (const auto& p : j.at("client_partitions")) ds.client_partitions.push_back(partition_from_json(p));
    for (const auto& p : j.at("detection_sets")) ds.detection_sets.push_back(partition_from_json(p));
    return ds;
  } catch (const json::exception& e) {
    throw IoError(path + ": " + e.what());
  }
}

}  // namespace flt
