#include "flt/federation.hpp"

#include <cmath>
#include <future>

#include "flt/error.hpp"
#include "flt/rng.hpp"

namespace flt {

const char* to_string(AggregationScope scope) {
  return scope == AggregationScope::kLayered ? "layered" : "classical";
}

AggregationScope parse_aggregation_scope(const std::string& s) {
  if (s == "layered") return AggregationScope::kLayered;
  if (s == "classical") return AggregationScope::kClassical;
  throw ConfigError("unknown aggregation scope '" + s + "'");
}

VisibilityFilter aggregation_filter(AggregationScope scope) {
  return scope == AggregationScope::kLayered ? VisibilityFilter::kCommon : VisibilityFilter::kAll;
}

void validate(const FederationConfig& c) {
  if (c.num_clients < 1) throw ConfigError("federation.num_clients must be >= 1");
  if (c.epochs < 1) throw ConfigError("federation.epochs must be >= 1");
  auto finite = [](double v) { return std::isfinite(v); };
  if (!finite(c.lr_min) || !finite(c.lr_max) || !(c.lr_min > 0.0) || c.lr_min > c.lr_max) {
    throw ConfigError("federation.lr_min/lr_max must satisfy 0 < lr_min <= lr_max");
  }
  if (!finite(c.adapt_min) || !finite(c.adapt_max) || c.adapt_min > c.adapt_max) {
    throw ConfigError("federation.adapt_min/adapt_max must be finite with min <= max");
  }
  if (!finite(c.comp_min) || !finite(c.comp_max) || c.comp_min > c.comp_max) {
    throw ConfigError("federation.comp_min/comp_max must be finite with min <= max");
  }
  if (c.local_steps_per_round < 0) throw ConfigError("federation.local_steps must be >= 0");
  if (c.batch_size < 0) throw ConfigError("federation.batch_size must be >= 0");
  if (!finite(c.comp_threshold)) throw ConfigError("federation.comp_threshold must be finite");
}

namespace {

double uniform_between(Rng& rng, double lo, double hi) {
  if (lo == hi) return lo;
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

std::vector<std::vector<double>> sample_grid(std::uint64_t seed, std::uint64_t tag, int clients,
                                             std::size_t layers, double lo, double hi) {
  Rng rng(derive_seed(seed, {tag}));
  std::vector<std::vector<double>> out(static_cast<std::size_t>(clients));
  for (auto& row : out) {
    row.resize(layers);
    for (double& v : row) v = uniform_between(rng, lo, hi);
  }
  return out;
}

void check_same_structure(std::span<const LayeredModel> models) {
  const auto& ref = models.front();
  for (const auto& m : models) {
    if (m.layers.size() != ref.layers.size()) throw StructureError("models differ in layer count");
    for (std::size_t k = 0; k < m.layers.size(); ++k) {
      if (!(m.layers[k].spec == ref.layers[k].spec)) {
        throw StructureError("models differ in layer '" + ref.layers[k].spec.name + "'");
      }
    }
  }
}

}  // namespace

InitCoefficients sample_coefficients(const FederationConfig& c, std::size_t num_layers) {
  return {sample_grid(c.seed, seed_tag::kLearningRate, c.num_clients, num_layers, c.lr_min, c.lr_max),
          sample_grid(c.seed, seed_tag::kAdapt, c.num_clients, num_layers, c.adapt_min, c.adapt_max),
          sample_grid(c.seed, seed_tag::kCompat, c.num_clients, num_layers, c.comp_min, c.comp_max)};
}

std::vector<ParamView> federated_average(std::span<const LayeredModel> models,
                                         VisibilityFilter filter,
                                         std::span<const std::size_t> members) {
  if (models.empty() || members.empty()) throw InputError("federated_average of an empty cohort");
  check_same_structure(models);
  for (std::size_t m : members) {
    if (m >= models.size()) throw InputError("aggregation member index out of range");
  }
  auto out = extract_params(models[members.front()], filter);
  for (std::size_t i = 1; i < members.size(); ++i) {
    const auto views = extract_params(models[members[i]], filter);
    for (std::size_t k = 0; k < out.size(); ++k) {
      auto& acc = out[k].values;
      const auto& v = views[k].values;
      for (std::size_t e = 0; e < acc.size(); ++e) acc[e] += v[e];
    }
  }
  const double n = static_cast<double>(members.size());
  for (auto& view : out) {
    for (double& v : view.values) v /= n;
  }
  return out;
}

std::vector<ParamView> federated_average(std::span<const LayeredModel> models,
                                         VisibilityFilter filter) {
  std::vector<std::size_t> all(models.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  return federated_average(models, filter, all);
}

LayeredModel sync_from_global(LayeredModel local, const LayeredModel& global,
                              VisibilityFilter filter) {
  const auto views = extract_params(global, filter);
  apply_params(local, views);
  return local;
}

LocalUpdate train_local(LayeredModel start, const Partition& data,
                        std::span<const double> layer_lrs, int steps, int batch_size,
                        std::uint64_t seed) {
  if (data.size() == 0) throw InputError("client partition is empty");
  LocalUpdate out;
  out.layer_contribution.assign(start.layers.size(), 0.0);
  out.loss = mean_cross_entropy(start, data.features, data.labels);
  const auto before = extract_params(start, VisibilityFilter::kAll);

  const bool full = batch_size <= 0 || static_cast<std::size_t>(batch_size) >= data.size();
  const std::size_t bsz = full ? data.size() : static_cast<std::size_t>(batch_size);
  Rng rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, data.size() - 1);
  Matrix batch(bsz, data.features.cols());
  std::vector<int> labels(bsz);

  LayeredModel model = std::move(start);
  for (int s = 0; s < steps; ++s) {
    LossAndGradient lg;
    if (full) {
      lg = loss_and_gradient(model, data.features, data.labels);
    } else {
      for (std::size_t r = 0; r < bsz; ++r) {
        const std::size_t idx = pick(rng);
        const auto src = data.features.row(idx);
        std::copy(src.begin(), src.end(), batch.row(r).begin());
        labels[r] = data.labels[idx];
      }
      lg = loss_and_gradient(model, batch, labels);
    }
    for (std::size_t k = 0; k < lg.gradients.size(); ++k) {
      out.layer_contribution[k] += layer_lrs[k] * squared_norm(lg.gradients[k]);
    }
    const double gn = gradient_norm(lg.gradients);
    if (!std::isfinite(gn)) throw NumericError("non-finite gradient during local training");
    out.gradient_norm = std::max(out.gradient_norm, gn);
    model = sgd_step(std::move(model), lg.gradients, layer_lrs);
    out.samples_consumed += bsz;
  }

  const auto after = extract_params(model, VisibilityFilter::kAll);
  double sq = 0.0;
  for (std::size_t k = 0; k < after.size(); ++k) {
    for (std::size_t e = 0; e < after[k].values.size(); ++e) {
      const double d = after[k].values[e] - before[k].values[e];
      sq += d * d;
    }
  }
  out.update_norm = std::sqrt(sq);
  out.model = std::move(model);
  return out;
}

namespace {

double selected_distance(const LayeredModel& a, const LayeredModel& b, VisibilityFilter filter) {
  const auto va = extract_params(a, filter);
  const auto vb = extract_params(b, filter);
  double sq = 0.0;
  for (std::size_t k = 0; k < va.size(); ++k) {
    for (std::size_t e = 0; e < va[k].values.size(); ++e) {
      const double d = va[k].values[e] - vb[k].values[e];
      sq += d * d;
    }
  }
  return std::sqrt(sq);
}

std::uint64_t batch_seed(std::uint64_t seed, std::size_t client, int round) {
  return derive_seed(seed, {seed_tag::kLocalBatch, client, static_cast<std::uint64_t>(round)});
}

void record_local(RoundMetrics& m, const LocalUpdate& u) {
  m.per_client_loss.push_back(u.loss);
  m.per_client_update_norm.push_back(u.update_norm);
  m.per_client_gradient_norm.push_back(u.gradient_norm);
  if (m.layer_loss_contribution.empty()) m.layer_loss_contribution.assign(u.layer_contribution.size(), 0.0);
  for (std::size_t k = 0; k < u.layer_contribution.size(); ++k) {
    m.layer_loss_contribution[k] += u.layer_contribution[k];
  }
  m.lyapunov_value += u.loss;
}

}  // namespace

RoundOutput run_round(const LayeredModel& global, std::span<const LayeredModel> locals,
                      std::span<const Partition> partitions,
                      std::span<const std::vector<double>> layer_lrs, int local_steps,
                      int batch_size, AggregationScope scope, int round, std::uint64_t seed) {
  if (locals.size() != partitions.size() || locals.size() != layer_lrs.size()) {
    throw InputError("run_round needs one partition and learning-rate set per client");
  }
  if (locals.empty()) throw InputError("run_round needs at least one client");
  const auto filter = aggregation_filter(scope);
  RoundOutput out;
  out.metrics.round = round;
  for (std::size_t i = 0; i < locals.size(); ++i) {
    auto start = sync_from_global(locals[i], global, filter);
    auto u = train_local(std::move(start), partitions[i], layer_lrs[i], local_steps, batch_size,
                         batch_seed(seed, i, round));
    record_local(out.metrics, u);
    out.locals.push_back(std::move(u.model));
  }
  out.global = global;
  const auto avg = federated_average(out.locals, filter);
  apply_params(out.global, avg);
  out.metrics.aggregate_update_norm = selected_distance(out.global, global, filter);
  for (std::size_t i = 0; i < locals.size(); ++i) out.metrics.members.push_back(i);
  return out;
}

Federation::Federation(FederationConfig config, const FederatedDataset& dataset,
                       std::vector<LayerSpec> specs)
    : config_(std::move(config)), dataset_(&dataset), specs_(std::move(specs)) {
  validate(config_);
  validate_specs(specs_);
  if (static_cast<std::size_t>(config_.num_clients) != dataset.client_partitions.size()) {
    throw ConfigError("federation.num_clients (" + std::to_string(config_.num_clients) +
                      ") does not match dataset client count (" +
                      std::to_string(dataset.client_partitions.size()) + ")");
  }
  if (dataset.feature_dim() != specs_.front().input_dim) {
    throw ConfigError("model input_dim does not match dataset feature_dim");
  }
  if (static_cast<int>(specs_.back().output_dim) != dataset.num_classes) {
    throw ConfigError("model output_dim does not match dataset num_classes");
  }
  coefficients_ = sample_coefficients(config_, specs_.size());
  // Identical initialization everywhere.
  global_ = init_layered_model(specs_, config_.seed, -1);
  for (int i = 0; i < config_.num_clients; ++i) {
    auto m = global_;
    m.model_id = i;
    locals_.push_back(std::move(m));
  }
  samples_consumed_.assign(locals_.size(), 0);
}

std::vector<LayeredModel> Federation::train_clients() {
  const auto filter = aggregation_filter(config_.scope);
  const int round = round_ + 1;
  const std::size_t n = locals_.size();
  pending_.assign(n, LocalUpdate{});
  auto work = [&](std::size_t i) {
    auto start = sync_from_global(locals_[i], global_, filter);
    return train_local(std::move(start), dataset_->client_partitions[i],
                       coefficients_.learning_rates[i], config_.local_steps_per_round,
                       config_.batch_size, batch_seed(config_.seed, i, round));
  };
  if (config_.parallel) {
    std::vector<std::future<LocalUpdate>> futures;
    for (std::size_t i = 0; i < n; ++i) futures.push_back(std::async(std::launch::async, work, i));
    for (std::size_t i = 0; i < n; ++i) pending_[i] = futures[i].get();
  } else {
    for (std::size_t i = 0; i < n; ++i) pending_[i] = work(i);
  }
  std::vector<LayeredModel> uploads;
  uploads.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    samples_consumed_[i] += pending_[i].samples_consumed;
    uploads.push_back(pending_[i].model);
  }
  return uploads;
}

RoundMetrics Federation::aggregate(std::vector<LayeredModel> uploads,
                                   std::span<const std::size_t> members, Aggregator* aggregator) {
  if (uploads.size() != locals_.size()) throw InputError("need one upload per client");
  if (pending_.size() != locals_.size()) throw InputError("aggregate called before train_clients");
  const auto filter = aggregation_filter(config_.scope);
  ++round_;
  RoundMetrics m;
  m.round = round_;
  for (const auto& u : pending_) record_local(m, u);
  pending_.clear();

  std::vector<std::size_t> all;
  if (members.empty()) {
    for (std::size_t i = 0; i < uploads.size(); ++i) all.push_back(i);
    members = all;
  }
  m.members.assign(members.begin(), members.end());
  PlainAggregator plain;
  Aggregator& agg = aggregator ? *aggregator : plain;
  const auto avg = agg.aggregate(uploads, members, filter);
  const LayeredModel previous = global_;
  apply_params(global_, avg);
  m.aggregate_update_norm = selected_distance(global_, previous, filter);
  locals_ = std::move(uploads);

  const auto& test = dataset_->shared_test;
  double acc_sum = 0.0;
  for (int i = 0; i < config_.num_clients; ++i) {
    const double a = accuracy(personalized(i), test.features, test.labels);
    m.per_client_accuracy.push_back(a);
    acc_sum += a;
  }
  m.global_test_accuracy = acc_sum / static_cast<double>(config_.num_clients);
  return m;
}

RoundMetrics Federation::step() { return aggregate(train_clients()); }

LayeredModel Federation::personalized(int client) const {
  auto m = sync_from_global(locals_.at(static_cast<std::size_t>(client)), global_,
                            aggregation_filter(config_.scope));
  m.model_id = client;
  return m;
}

TrainingResult run_training(const FederationConfig& config, const FederatedDataset& dataset,
                            std::span<const LayerSpec> specs) {
  Federation fed(config, dataset, {specs.begin(), specs.end()});
  TrainingResult out;
  for (int e = 0; e < config.epochs; ++e) out.rounds.push_back(fed.step());
  out.global = fed.global();
  out.locals = fed.locals();
  out.coefficients = fed.coefficients();
  return out;
}

const char* to_string(ConvergenceVerdict v) {
  switch (v) {
    case ConvergenceVerdict::kConverging: return "converging";
    case ConvergenceVerdict::kStalled: return "stalled";
    case ConvergenceVerdict::kDiverging: return "diverging";
  }
  return "?";
}

ConvergenceVerdict check_convergence(std::span<const double> history, double epsilon,
                                     std::size_t window) {
  if (history.empty()) throw InputError("empty loss history");
  if (window == 0) throw InputError("convergence window must be positive");
  if (!(epsilon > 0.0)) throw InputError("convergence epsilon must be positive");
  if (history.size() < window + 1) {
    throw InputError("loss history shorter than window + 1");
  }
  const auto tail = history.last(window + 1);
  if (tail.back() > 1.1 * tail.front()) return ConvergenceVerdict::kDiverging;
  std::size_t decreasing = 0;
  for (std::size_t t = 0; t < window; ++t) {
    if (tail[t] > 0.0 && (tail[t] - tail[t + 1]) / tail[t] >= epsilon) ++decreasing;
  }
  if (static_cast<double>(decreasing) >= 0.8 * static_cast<double>(window)) {
    return ConvergenceVerdict::kConverging;
  }
  return ConvergenceVerdict::kStalled;
}

}  // namespace flt
