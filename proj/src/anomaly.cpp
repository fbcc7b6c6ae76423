#include "flt/anomaly.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "flt/error.hpp"
#include "flt/rng.hpp"

namespace flt {

std::vector<FlatParams> loo_benchmark(std::span<const FlatParams> params) {
  const std::size_t m = params.size();
  if (m < 2) throw InputError("leave-one-out benchmark needs at least two uploads");
  const std::size_t dim = params.front().size();
  for (const auto& p : params) {
    if (p.size() != dim) throw InputError("uploads differ in length");
  }
  const double md = static_cast<double>(m);
  // Closed form applied to offsets from the first upload; keeps identical
  // uploads exactly equal to their benchmarks and limits cancellation.
  const FlatParams& ref = params.front();
  FlatParams mean(dim, 0.0);
  for (const auto& p : params) {
    for (std::size_t e = 0; e < dim; ++e) mean[e] += p[e] - ref[e];
  }
  for (double& v : mean) v /= md;
  const double scale = md / (md - 1.0);
  std::vector<FlatParams> out(m, FlatParams(dim));
  for (std::size_t j = 0; j < m; ++j) {
    for (std::size_t e = 0; e < dim; ++e) {
      out[j][e] = ref[e] + (mean[e] - (params[j][e] - ref[e]) / md) * scale;
    }
  }
  return out;
}

std::vector<double> loo_mean(std::span<const double> values) {
  std::vector<FlatParams> wrapped;
  wrapped.reserve(values.size());
  for (double v : values) wrapped.push_back({v});
  const auto b = loo_benchmark(wrapped);
  std::vector<double> out;
  out.reserve(b.size());
  for (const auto& x : b) out.push_back(x[0]);
  return out;
}

namespace {

double distance(std::span<const double> a, std::span<const double> b) {
  double sq = 0.0;
  for (std::size_t e = 0; e < a.size(); ++e) {
    const double d = a[e] - b[e];
    sq += d * d;
  }
  return std::sqrt(sq);
}

}  // namespace

VarianceDistances variance_distances(std::span<const FlatParams> params,
                                     std::span<const FlatParams> benchmarks) {
  if (params.size() != benchmarks.size()) throw InputError("benchmark count mismatch");
  if (params.size() < 2) throw InputError("variance distances need at least two uploads");
  VarianceDistances out;
  for (std::size_t j = 0; j < params.size(); ++j) {
    if (params[j].size() != benchmarks[j].size()) throw InputError("benchmark length mismatch");
    out.v.push_back(distance(params[j], benchmarks[j]));
  }
  out.v_mean = std::accumulate(out.v.begin(), out.v.end(), 0.0) / static_cast<double>(out.v.size());
  out.v_loo = loo_mean(out.v);
  return out;
}

const char* to_string(FlagMode mode) {
  return mode == FlagMode::kAllMean ? "all_mean" : "loo";
}

FlagMode parse_flag_mode(const std::string& s) {
  if (s == "all_mean") return FlagMode::kAllMean;
  if (s == "loo") return FlagMode::kLeaveOneOut;
  throw ConfigError("unknown flag mode '" + s + "'");
}

std::set<std::size_t> flag_suspicious(const VarianceDistances& d, double theta, FlagMode mode) {
  if (!(theta > 0.0)) throw InputError("theta must be positive");
  std::set<std::size_t> out;
  for (std::size_t j = 0; j < d.v.size(); ++j) {
    const double reference = mode == FlagMode::kAllMean ? d.v_mean : d.v_loo.at(j);
    if (d.v[j] > theta * reference) out.insert(j);
  }
  return out;
}

UploadBatch make_upload_batch(int node_id, std::span<const LayeredModel> models,
                              std::span<const int> device_ids) {
  if (models.size() != device_ids.size()) throw InputError("device id count mismatch");
  UploadBatch b;
  b.node_id = node_id;
  b.device_ids.assign(device_ids.begin(), device_ids.end());
  for (const auto& m : models) {
    b.devices.push_back({extract_params(m, VisibilityFilter::kCommon),
                         extract_params(m, VisibilityFilter::kPrivate)});
  }
  return b;
}

std::vector<FlatParams> common_vectors(const UploadBatch& batch) {
  std::vector<FlatParams> out;
  out.reserve(batch.size());
  for (const auto& d : batch.devices) out.push_back(concatenate(d.common));
  if (!out.empty()) {
    for (const auto& v : out) {
      if (v.size() != out.front().size()) throw InputError("common uploads differ in length");
    }
  }
  return out;
}

std::vector<std::optional<double>> per_class_accuracy(const LayeredModel& model,
                                                      const Partition& data, int num_classes) {
  std::vector<std::size_t> total(static_cast<std::size_t>(num_classes), 0);
  std::vector<std::size_t> hits(total.size(), 0);
  const auto pred = predict(model, data.features);
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const auto y = static_cast<std::size_t>(data.labels[i]);
    ++total.at(y);
    hits[y] += pred[i] == data.labels[i];
  }
  std::vector<std::optional<double>> out(total.size());
  for (std::size_t k = 0; k < total.size(); ++k) {
    if (total[k] > 0) out[k] = static_cast<double>(hits[k]) / static_cast<double>(total[k]);
  }
  return out;
}

namespace {

LayeredModel assemble(std::span<const LayerSpec> specs, const std::vector<ParamView>& common,
                      const std::vector<ParamView>& priv) {
  LayeredModel m;
  for (const auto& s : specs) {
    m.layers.push_back({s, Matrix(s.output_dim, s.input_dim), std::vector<double>(s.output_dim)});
  }
  apply_params(m, common);
  apply_params(m, priv);
  return m;
}

}  // namespace

VerificationResult accuracy_verification(const UploadBatch& batch,
                                         std::span<const FlatParams> benchmarks,
                                         const std::set<std::size_t>& flagged,
                                         std::span<const LayerSpec> specs,
                                         const Partition& detection_set, double beta_poison) {
  VerificationResult out;
  if (flagged.empty()) return out;
  if (detection_set.size() == 0) throw InputError("detection set is empty");
  if (benchmarks.size() != batch.size()) throw InputError("benchmark count mismatch");
  const int classes = static_cast<int>(specs.back().output_dim);
  const double floor = 1.0 / static_cast<double>(detection_set.size());
  for (std::size_t j : flagged) {
    if (j >= batch.size()) throw InputError("flagged device index out of range");
    const auto& dev = batch.devices[j];
    const auto bench_views = split_like(benchmarks[j], dev.common);
    const auto reference = per_class_accuracy(assemble(specs, bench_views, dev.private_),
                                              detection_set, classes);
    const auto uploaded = per_class_accuracy(assemble(specs, dev.common, dev.private_),
                                             detection_set, classes);
    std::optional<double> e;
    for (std::size_t k = 0; k < reference.size(); ++k) {
      if (!reference[k] || !uploaded[k]) continue;
      const double diff = (*reference[k] - *uploaded[k]) / std::max(*reference[k], floor);
      e = e ? std::max(*e, diff) : diff;
    }
    if (!e) throw InputError("detection set has no samples in any category");
    out.accuracy_diffs[j] = *e;
    if (*e > beta_poison) out.verified.insert(j);
  }
  return out;
}

AnomalyReport detect(const UploadBatch& batch, std::span<const LayerSpec> specs,
                     const Partition& detection_set, const DetectorConfig& config) {
  if (batch.size() < 3) throw InputError("detection needs at least three devices");
  AnomalyReport r;
  r.node_id = batch.node_id;
  r.device_ids = batch.device_ids;
  r.theta = config.theta;
  const auto params = common_vectors(batch);
  r.benchmarks = loo_benchmark(params);
  r.distances = variance_distances(params, r.benchmarks);
  r.flagged = flag_suspicious(r.distances, config.theta, config.mode);
  auto ver = accuracy_verification(batch, r.benchmarks, r.flagged, specs, detection_set,
                                   config.beta_poison);
  r.verified_poisoners = std::move(ver.verified);
  r.accuracy_diffs = std::move(ver.accuracy_diffs);
  return r;
}

double benign_spread(std::span<const FlatParams> honest) {
  if (honest.size() < 2) return 0.0;
  const std::size_t dim = honest.front().size();
  if (dim == 0) return 0.0;
  const double n = static_cast<double>(honest.size());
  double total_var = 0.0;
  for (std::size_t e = 0; e < dim; ++e) {
    double mean = 0.0;
    for (const auto& p : honest) mean += p[e];
    mean /= n;
    double var = 0.0;
    for (const auto& p : honest) var += (p[e] - mean) * (p[e] - mean);
    total_var += var / n;
  }
  return std::sqrt(total_var / static_cast<double>(dim));
}

FlatParams inject_param_attack(const FlatParams& params, const AttackSpec& spec,
                               double benign_std, std::uint64_t seed) {
  if (benign_std < 0.0) throw InputError("benign_std must be nonnegative");
  if (spec.delta_scale < 0.0) throw ConfigError("delta_scale must be nonnegative");
  FlatParams out = params;
  switch (spec.kind) {
    case AttackKind::kParamNoise: {
      const double sd = spec.delta_scale * benign_std;
      if (sd == 0.0) return out;
      Rng rng(derive_seed(seed, {seed_tag::kAttack}));
      std::normal_distribution<double> noise(0.0, sd);
      for (double& v : out) v += noise(rng);
      return out;
    }
    case AttackKind::kParamScale:
      for (double& v : out) v *= 1.0 + spec.delta_scale;
      return out;
    case AttackKind::kLabelFlip:
      break;
  }
  throw ConfigError(std::string("attack kind '") + to_string(spec.kind) +
                    "' is not a parameter attack");
}

std::set<std::size_t> zscore_detect(std::span<const FlatParams> full_params, double z_threshold) {
  const std::size_t m = full_params.size();
  if (m < 2) throw InputError("z-score detector needs at least two uploads");
  const std::size_t dim = full_params.front().size();
  FlatParams mean(dim, 0.0);
  for (const auto& p : full_params) {
    if (p.size() != dim) throw InputError("uploads differ in length");
    for (std::size_t e = 0; e < dim; ++e) mean[e] += p[e];
  }
  for (double& v : mean) v /= static_cast<double>(m);
  std::vector<double> d;
  for (const auto& p : full_params) d.push_back(distance(p, mean));
  const double dm = std::accumulate(d.begin(), d.end(), 0.0) / static_cast<double>(m);
  double var = 0.0;
  for (double x : d) var += (x - dm) * (x - dm);
  const double sd = std::sqrt(var / static_cast<double>(m));
  std::set<std::size_t> out;
  if (sd == 0.0) return out;
  for (std::size_t j = 0; j < m; ++j) {
    if ((d[j] - dm) / sd > z_threshold) out.insert(j);
  }
  return out;
}

FlatParams flatten(const LayeredModel& model, VisibilityFilter filter) {
  return concatenate(extract_params(model, filter));
}

namespace {

std::vector<FlatParams> flatten_all(std::span<const LayeredModel> models, VisibilityFilter f) {
  std::vector<FlatParams> out;
  out.reserve(models.size());
  for (const auto& m : models) out.push_back(flatten(m, f));
  return out;
}

}  // namespace

double mean_distance(std::span<const FlatParams> uploads) {
  if (uploads.size() < 2) throw InputError("mean distance needs at least two uploads");
  const auto bench = loo_benchmark(uploads);
  return variance_distances(uploads, bench).v_mean;
}

DivergencePoint divergence_point(int round, std::span<const LayeredModel> layered_uploads,
                                 std::span<const LayeredModel> classical_uploads) {
  if (layered_uploads.size() != classical_uploads.size()) {
    throw InputError("runs have different device counts");
  }
  DivergencePoint p;
  p.round = round;
  p.d_c = mean_distance(flatten_all(layered_uploads, VisibilityFilter::kCommon));
  p.d_p = mean_distance(flatten_all(layered_uploads, VisibilityFilter::kPrivate));
  p.d_ce = mean_distance(flatten_all(classical_uploads, VisibilityFilter::kAll));
  return p;
}

std::vector<DivergencePoint> layer_divergence_trace(
    std::span<const std::vector<LayeredModel>> layered_rounds,
    std::span<const std::vector<LayeredModel>> classical_rounds) {
  if (layered_rounds.size() != classical_rounds.size()) {
    throw InputError("runs are misaligned: different round counts");
  }
  std::vector<DivergencePoint> out;
  for (std::size_t t = 0; t < layered_rounds.size(); ++t) {
    out.push_back(divergence_point(static_cast<int>(t), layered_rounds[t], classical_rounds[t]));
  }
  return out;
}

double deviation_ratio(std::span<const FlatParams> uploads, std::size_t malicious) {
  if (malicious >= uploads.size()) throw InputError("malicious index out of range");
  if (uploads.size() < 3) throw InputError("deviation ratio needs at least three uploads");
  const auto bench = loo_benchmark(uploads);
  const auto d = variance_distances(uploads, bench);
  double honest = 0.0;
  for (std::size_t j = 0; j < d.v.size(); ++j) {
    if (j != malicious) honest += d.v[j];
  }
  honest /= static_cast<double>(d.v.size() - 1);
  if (honest == 0.0) return d.v[malicious] == 0.0 ? 0.0 : INFINITY;
  return d.v[malicious] / honest;
}

MarginPoint detection_margin_point(int round, std::span<const LayeredModel> layered_uploads,
                                   std::span<const LayeredModel> classical_uploads,
                                   std::optional<std::size_t> malicious) {
  if (!malicious) throw InputError("no malicious device marked");
  if (layered_uploads.size() != classical_uploads.size()) {
    throw InputError("runs have different device counts");
  }
  MarginPoint p;
  p.round = round;
  p.common = deviation_ratio(flatten_all(layered_uploads, VisibilityFilter::kCommon), *malicious);
  p.priv = deviation_ratio(flatten_all(layered_uploads, VisibilityFilter::kPrivate), *malicious);
  p.full = deviation_ratio(flatten_all(classical_uploads, VisibilityFilter::kAll), *malicious);
  return p;
}

std::vector<MarginPoint> detection_margin(
    std::span<const std::vector<LayeredModel>> layered_rounds,
    std::span<const std::vector<LayeredModel>> classical_rounds,
    std::optional<std::size_t> malicious) {
  if (!malicious) throw InputError("no malicious device marked");
  if (layered_rounds.size() != classical_rounds.size()) {
    throw InputError("runs are misaligned: different round counts");
  }
  std::vector<MarginPoint> out;
  for (std::size_t t = 0; t < layered_rounds.size(); ++t) {
    out.push_back(detection_margin_point(static_cast<int>(t), layered_rounds[t],
                                         classical_rounds[t], malicious));
  }
  return out;
}

}  // namespace flt
