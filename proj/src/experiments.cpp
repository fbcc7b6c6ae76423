#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include <Eigen/Dense>

#include "flt/collaboration.hpp"
#include "flt/error.hpp"
#include "flt/harness.hpp"
#include "flt/paillier.hpp"
#include "flt/rng.hpp"
#include "flt/secure.hpp"

namespace flt {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

struct Setup {
  ExperimentConfig config;
  FederatedDataset data;
  std::vector<LayerSpec> specs;
};

Setup make_setup(const ExperimentConfig& raw) {
  Setup s{resolved(raw), {}, {}};
  validate(s.config);
  s.data = generate(s.config.dataset);
  s.specs = model_layers(s.config);
  return s;
}

LayeredModel with_flat(LayeredModel model, VisibilityFilter filter, const FlatParams& flat) {
  const auto shape = extract_params(model, filter);
  apply_params(model, split_like(flat, shape));
  return model;
}

std::vector<FlatParams> flatten_each(std::span<const LayeredModel> models, VisibilityFilter f) {
  std::vector<FlatParams> out;
  out.reserve(models.size());
  for (const auto& m : models) out.push_back(flatten(m, f));
  return out;
}

// Frozen attacker: resends w_init + delta every round, where delta is drawn
// once from the spread of the honest first-round uploads.
class FrozenAttacker {
 public:
  FrozenAttacker(int device, double delta_scale, std::uint64_t seed)
      : device_(device), delta_scale_(delta_scale), seed_(seed) {}

  void apply(std::vector<LayeredModel>& uploads, const LayeredModel& init) {
    if (frozen_.empty()) {
      std::vector<FlatParams> honest;
      for (std::size_t j = 0; j < uploads.size(); ++j) {
        if (static_cast<int>(j) != device_) honest.push_back(flatten(uploads[j], VisibilityFilter::kAll));
      }
      AttackSpec spec{AttackKind::kParamNoise, delta_scale_, {device_}, true};
      frozen_ = inject_param_attack(flatten(init, VisibilityFilter::kAll), spec,
                                    benign_spread(honest),
                                    derive_seed(seed_, {static_cast<std::uint64_t>(device_)}));
    }
    auto& up = uploads[static_cast<std::size_t>(device_)];
    const int id = up.model_id;
    up = with_flat(init, VisibilityFilter::kAll, frozen_);
    up.model_id = id;
  }

 private:
  int device_;
  double delta_scale_;
  std::uint64_t seed_;
  FlatParams frozen_;
};

int analysis_rounds(const ExperimentConfig& c, int rounds) {
  return rounds > 0 ? rounds : (c.analysis.rounds > 0 ? c.analysis.rounds : c.federation.epochs);
}

std::vector<std::size_t> all_members(std::size_t n) {
  std::vector<std::size_t> v(n);
  std::iota(v.begin(), v.end(), std::size_t{0});
  return v;
}

double max_abs_diff(std::span<const ParamView> a, std::span<const ParamView> b) {
  double d = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    for (std::size_t e = 0; e < a[k].values.size(); ++e) {
      d = std::max(d, std::abs(a[k].values[e] - b[k].values[e]));
    }
  }
  return d;
}

// Hands the federation an aggregate computed elsewhere.
struct PrecomputedAggregator final : Aggregator {
  explicit PrecomputedAggregator(std::vector<ParamView> r) : result(std::move(r)) {}
  std::vector<ParamView> aggregate(std::span<const LayeredModel>, std::span<const std::size_t>,
                                   VisibilityFilter) override {
    return result;
  }
  std::vector<ParamView> result;
};

}  // namespace

TrainingRun run_screened_training(const ExperimentConfig& raw, int rounds,
                                  bool compute_collaboration) {
  Setup s = make_setup(raw);
  const auto& cfg = s.config;
  const auto& attack = cfg.anomaly.attack;
  const bool attacked = !attack.targets.empty();
  for (int t : attack.targets) {
    if (t < 0 || t >= cfg.dataset.num_clients) {
      throw ConfigError("anomaly.attack.targets: client " + std::to_string(t) + " out of range");
    }
  }
  if (attacked && attack.kind == AttackKind::kLabelFlip) {
    for (int t : attack.targets) {
      auto& p = s.data.client_partitions[static_cast<std::size_t>(t)];
      p = poison_partition(std::move(p), attack, s.data.num_classes,
                           derive_seed(cfg.seed, {seed_tag::kPoison, static_cast<std::uint64_t>(t)}));
    }
  }

  Federation fed(cfg.federation, s.data, s.specs);
  const LayeredModel init = fed.global();
  const auto filter = fed.filter();
  const std::size_t n = static_cast<std::size_t>(cfg.dataset.num_clients);

  std::optional<SecureAggregator> secure;
  if (cfg.encryption.enabled) {
    secure.emplace(paillier::keygen(cfg.encryption.key_bits, derive_seed(cfg.seed, {seed_tag::kKeygen})),
                   FixedPointCodec{cfg.encryption.scale_bits, cfg.encryption.clamp_range},
                   derive_seed(cfg.seed, {seed_tag::kEncrypt}));
  }
  std::vector<FrozenAttacker> frozen;
  if (attacked && attack.frozen) {
    for (int t : attack.targets) {
      frozen.emplace_back(t, attack.delta_scale, derive_seed(cfg.seed, {seed_tag::kAttack}));
    }
  }

  TrainingRun run;
  std::vector<std::vector<std::vector<double>>> layer_snapshots(s.specs.size());
  std::vector<std::vector<double>> layer_losses(s.specs.size());
  ResilienceParams rp{cfg.collaboration.beta_resilience, 5};

  for (int r = 1; r <= rounds; ++r) {
    RoundRecord rec;
    const LayeredModel previous_global = fed.global();
    auto uploads = fed.train_clients();

    if (attacked) {
      rec.attackers.insert(attack.targets.begin(), attack.targets.end());
      if (attack.frozen) {
        for (auto& f : frozen) f.apply(uploads, init);
      } else if (attack.kind != AttackKind::kLabelFlip) {
        std::vector<FlatParams> honest;
        for (std::size_t j = 0; j < n; ++j) {
          if (!attack.targets.count(static_cast<int>(j))) honest.push_back(flatten(uploads[j], filter));
        }
        const double spread = benign_spread(honest);
        for (int t : attack.targets) {
          auto& up = uploads[static_cast<std::size_t>(t)];
          const auto tampered = inject_param_attack(
              flatten(up, filter), attack, spread,
              derive_seed(cfg.seed, {seed_tag::kAttack, static_cast<std::uint64_t>(t),
                                     static_cast<std::uint64_t>(r)}));
          up = with_flat(std::move(up), filter, tampered);
        }
      }
    }

    // Screening, one batch per edge node.
    for (std::size_t node = 0; node < s.data.node_devices.size(); ++node) {
      const auto& ids = s.data.node_devices[node];
      if (ids.size() < 3) continue;
      std::vector<LayeredModel> models;
      for (int id : ids) models.push_back(uploads[static_cast<std::size_t>(id)]);
      auto t0 = Clock::now();
      const auto batch = make_upload_batch(static_cast<int>(node), models, ids);
      auto report = detect(batch, s.specs, s.data.detection_sets[node], cfg.anomaly.detector);
      rec.detection_ms += ms_since(t0);
      for (auto j : report.flagged) rec.flagged.insert(ids[j]);
      for (auto j : report.verified_poisoners) rec.verified.insert(ids[j]);
      rec.reports.push_back(std::move(report));

      t0 = Clock::now();
      const auto z = zscore_detect(flatten_each(models, VisibilityFilter::kAll),
                                   cfg.anomaly.zscore_threshold);
      rec.zscore_ms += ms_since(t0);
      for (auto j : z) rec.zscore_flagged.insert(ids[j]);
    }

    std::vector<std::size_t> members;
    if (cfg.anomaly.exclude_flagged) {
      for (std::size_t j = 0; j < n; ++j) {
        if (!rec.flagged.count(static_cast<int>(j))) members.push_back(j);
      }
    }
    if (members.empty()) members = all_members(n);

    std::vector<LayeredModel> upload_copy = uploads;
    if (secure) {
      const auto plain = federated_average(uploads, filter, members);
      PrecomputedAggregator enc{secure->aggregate(uploads, members, filter)};
      run.max_secure_deviation = std::max(run.max_secure_deviation, max_abs_diff(enc.result, plain));
      rec.metrics = fed.aggregate(std::move(uploads), members, &enc);
    } else {
      rec.metrics = fed.aggregate(std::move(uploads), members);
    }

    if (compute_collaboration) {
      const auto& m = rec.metrics;
      const auto& consumed = fed.samples_consumed();
      const double max_consumed =
          static_cast<double>(*std::max_element(consumed.begin(), consumed.end()));
      std::vector<ModelProfile> profiles;
      for (std::size_t i = 0; i < n; ++i) {
        profiles.push_back({static_cast<int>(i),
                            max_consumed > 0 ? static_cast<double>(consumed[i]) / max_consumed : 0.0,
                            m.per_client_accuracy[i], cfg.collaboration.alpha_exp,
                            cfg.collaboration.beta_expertise});
      }
      for (std::size_t i = 0; i < n; ++i) {
        rec.lambda.push_back(learning_enhancement(profiles[i], profiles));
      }
      std::vector<Matrix> probs;
      for (std::size_t i = 0; i < n; ++i) {
        probs.push_back(forward(fed.personalized(static_cast<int>(i)), s.data.shared_test.features));
      }
      rec.consensus_accuracy = consensus_accuracy(probs, s.data.shared_test.labels);

      // Client update direction against the aggregate update direction.
      const auto prev = flatten(previous_global, filter);
      auto agg = flatten(fed.global(), filter);
      for (std::size_t e = 0; e < agg.size(); ++e) agg[e] -= prev[e];
      double compat = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        auto d = flatten(upload_copy[i], filter);
        for (std::size_t e = 0; e < d.size(); ++e) d[e] -= prev[e];
        compat += cosine_similarity(d, agg);
      }
      rec.mean_compatibility = compat / static_cast<double>(n);

      for (std::size_t k = 0; k < s.specs.size(); ++k) {
        const auto& spec = s.specs[k];
        std::vector<double> snap(spec.parameter_count(), 0.0);
        for (const auto& local : fed.locals()) {
          const auto views = extract_params(local, VisibilityFilter::kAll);
          for (std::size_t e = 0; e < snap.size(); ++e) snap[e] += views[k].values[e];
        }
        for (double& v : snap) v /= static_cast<double>(n);
        auto& hist = layer_snapshots[k];
        hist.push_back(std::move(snap));
        if (hist.size() > rp.loss_window + 1) hist.erase(hist.begin());
        layer_losses[k].push_back(m.layer_loss_contribution[k]);
        // Undefined until two snapshots exist.
        rec.resilience.push_back(hist.size() < 2
                                     ? std::nan("")
                                     : resilience(hist, layer_losses[k], rp, rec.mean_compatibility));
      }
    }
    run.rounds.push_back(std::move(rec));
  }
  for (std::size_t i = 0; i < n; ++i) run.final_models.push_back(fed.personalized(static_cast<int>(i)));
  run.global = fed.global();
  if (secure) {
    run.plaintext_bytes = secure->plaintext_bytes();
    run.ciphertext_bytes = secure->ciphertext_bytes();
  }
  return run;
}

namespace {

// Side-by-side layered and classical runs from the same initialization.
// `on_round` sees both upload sets for each round.
template <typename F>
void paired_runs(const ExperimentConfig& raw, int rounds, std::optional<double> frozen_delta,
                 F&& on_round) {
  Setup s = make_setup(raw);
  auto layered_cfg = s.config.federation;
  layered_cfg.scope = AggregationScope::kLayered;
  auto classical_cfg = s.config.federation;
  classical_cfg.scope = AggregationScope::kClassical;
  Federation layered(layered_cfg, s.data, s.specs);
  Federation classical(classical_cfg, s.data, s.specs);
  const LayeredModel init = layered.global();
  std::optional<FrozenAttacker> a_layered, a_classical;
  if (frozen_delta) {
    const auto seed = derive_seed(s.config.seed, {seed_tag::kAttack});
    a_layered.emplace(0, *frozen_delta, seed);
    a_classical.emplace(0, *frozen_delta, seed);
  }
  for (int r = 1; r <= rounds; ++r) {
    auto ul = layered.train_clients();
    auto uc = classical.train_clients();
    if (a_layered) {
      a_layered->apply(ul, init);
      a_classical->apply(uc, init);
    }
    on_round(r, layered.global(), classical.global(), ul, uc);
    layered.aggregate(std::move(ul));
    classical.aggregate(std::move(uc));
  }
}

}  // namespace

std::vector<DivergencePoint> run_lemma_trace(const ExperimentConfig& config, int rounds) {
  std::vector<DivergencePoint> out;
  paired_runs(config, analysis_rounds(config, rounds), std::nullopt,
              [&](int r, const LayeredModel&, const LayeredModel&,
                  const std::vector<LayeredModel>& ul, const std::vector<LayeredModel>& uc) {
                out.push_back(divergence_point(r, ul, uc));
              });
  return out;
}

std::vector<MarginPoint> run_theorem_trace(const ExperimentConfig& config, int rounds,
                                           double delta_scale) {
  std::vector<MarginPoint> out;
  paired_runs(config, analysis_rounds(config, rounds), delta_scale,
              [&](int r, const LayeredModel&, const LayeredModel&,
                  const std::vector<LayeredModel>& ul, const std::vector<LayeredModel>& uc) {
                out.push_back(detection_margin_point(r, ul, uc, std::size_t{0}));
              });
  return out;
}

double lemma_pass_rate(const std::vector<DivergencePoint>& trace, int first_round) {
  std::size_t checked = 0, held = 0;
  for (const auto& p : trace) {
    if (p.round < first_round) continue;
    ++checked;
    if (p.d_c <= p.d_ce && p.d_ce <= p.d_p) ++held;
  }
  return checked ? static_cast<double>(held) / static_cast<double>(checked) : 0.0;
}

double theorem_pass_rate(const std::vector<MarginPoint>& trace, int first_round) {
  std::size_t checked = 0, held = 0;
  for (const auto& p : trace) {
    if (p.round < first_round) continue;
    ++checked;
    if (p.common > p.full && p.full > p.priv) ++held;
  }
  return checked ? static_cast<double>(held) / static_cast<double>(checked) : 0.0;
}

double ridge_probe_accuracy(const std::vector<std::vector<double>>& train_x,
                            const std::vector<int>& train_y,
                            const std::vector<std::vector<double>>& test_x,
                            const std::vector<int>& test_y, int num_classes, double ridge) {
  if (train_x.empty() || test_x.empty()) throw InputError("probe needs train and test rows");
  if (train_x.size() != train_y.size() || test_x.size() != test_y.size()) {
    throw InputError("probe rows and labels differ in count");
  }
  const auto n = static_cast<Eigen::Index>(train_x.size());
  const auto m = static_cast<Eigen::Index>(test_x.size());
  const auto d = static_cast<Eigen::Index>(train_x.front().size());
  Eigen::MatrixXd X(n, d), T(m, d);
  for (Eigen::Index i = 0; i < n; ++i) X.row(i) = Eigen::Map<const Eigen::RowVectorXd>(train_x[i].data(), d);
  for (Eigen::Index i = 0; i < m; ++i) T.row(i) = Eigen::Map<const Eigen::RowVectorXd>(test_x[i].data(), d);
  // Standardize with training statistics.
  const Eigen::RowVectorXd mu = X.colwise().mean();
  X.rowwise() -= mu;
  T.rowwise() -= mu;
  Eigen::RowVectorXd sd = (X.array().square().colwise().sum() / static_cast<double>(n)).sqrt();
  for (Eigen::Index j = 0; j < d; ++j) {
    if (sd(j) < 1e-12) sd(j) = 1.0;
  }
  X.array().rowwise() /= sd.array();
  T.array().rowwise() /= sd.array();

  Eigen::MatrixXd Y = Eigen::MatrixXd::Constant(n, num_classes, -1.0);
  for (Eigen::Index i = 0; i < n; ++i) Y(i, train_y[static_cast<std::size_t>(i)]) = 1.0;
  const Eigen::RowVectorXd y_mean = Y.colwise().mean();
  Y.rowwise() -= y_mean;

  Eigen::MatrixXd K = X * X.transpose();
  const double lambda = ridge * std::max(K.diagonal().mean(), 1e-12);
  K.diagonal().array() += lambda;
  const Eigen::MatrixXd alpha = K.ldlt().solve(Y);
  Eigen::MatrixXd scores = T * (X.transpose() * alpha);
  scores.rowwise() += y_mean;

  std::size_t correct = 0;
  for (Eigen::Index i = 0; i < m; ++i) {
    std::vector<double> row(static_cast<std::size_t>(num_classes));
    for (int c = 0; c < num_classes; ++c) row[static_cast<std::size_t>(c)] = scores(i, c);
    if (argmax(row) == test_y[static_cast<std::size_t>(i)]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(m);
}

PrivacyProbeResult run_privacy_probe(const ExperimentConfig& config, int rounds) {
  const int R = analysis_rounds(config, rounds);
  Setup s = make_setup(config);
  const int n = s.config.dataset.num_clients;
  const int C = s.data.num_classes;
  std::vector<int> dominant;
  for (const auto& p : s.data.client_partitions) dominant.push_back(dominant_label(p, C));

  // rows[client] holds that client's shared-update features over rounds.
  std::vector<std::vector<std::vector<double>>> layered_rows(n), full_rows(n);
  paired_runs(config, R, std::nullopt,
              [&](int, const LayeredModel& gl, const LayeredModel& gc,
                  const std::vector<LayeredModel>& ul, const std::vector<LayeredModel>& uc) {
                const auto base_l = flatten(gl, VisibilityFilter::kCommon);
                const auto base_c = flatten(gc, VisibilityFilter::kAll);
                for (int i = 0; i < n; ++i) {
                  auto a = flatten(ul[static_cast<std::size_t>(i)], VisibilityFilter::kCommon);
                  for (std::size_t e = 0; e < a.size(); ++e) a[e] -= base_l[e];
                  layered_rows[static_cast<std::size_t>(i)].push_back(std::move(a));
                  auto b = flatten(uc[static_cast<std::size_t>(i)], VisibilityFilter::kAll);
                  for (std::size_t e = 0; e < b.size(); ++e) b[e] -= base_c[e];
                  full_rows[static_cast<std::size_t>(i)].push_back(std::move(b));
                }
              });

  auto loco = [&](const std::vector<std::vector<std::vector<double>>>& rows) {
    double acc = 0.0;
    for (int held = 0; held < n; ++held) {
      std::vector<std::vector<double>> tx, ex;
      std::vector<int> ty, ey;
      for (int i = 0; i < n; ++i) {
        for (const auto& row : rows[static_cast<std::size_t>(i)]) {
          if (i == held) {
            ex.push_back(row);
            ey.push_back(dominant[static_cast<std::size_t>(i)]);
          } else {
            tx.push_back(row);
            ty.push_back(dominant[static_cast<std::size_t>(i)]);
          }
        }
      }
      acc += ridge_probe_accuracy(tx, ty, ex, ey, C, 1e-2);
    }
    return acc / static_cast<double>(n);
  };

  PrivacyProbeResult out;
  out.chance = 1.0 / static_cast<double>(C);
  out.layered_accuracy = loco(layered_rows);
  out.full_accuracy = loco(full_rows);
  return out;
}

bool collaboration_trend_holds(const std::vector<double>& means, double slack) {
  int inversions = 0;
  for (std::size_t k = 1; k < means.size(); ++k) {
    if (means[k] < means[k - 1]) {
      if (means[k - 1] - means[k] > slack) return false;
      ++inversions;
    }
  }
  return inversions <= 1;
}

CollabSweep collaboration_sweep(const ExperimentConfig& config, const std::vector<int>& counts,
                                const std::vector<std::uint64_t>& seeds, int rounds) {
  if (counts.empty()) throw ConfigError("collaboration.model_counts must not be empty");
  for (int k : counts) {
    if (k < 1 || k > config.dataset.num_clients) {
      throw ConfigError("collaboration.model_counts: " + std::to_string(k) + " outside 1.." +
                        std::to_string(config.dataset.num_clients));
    }
  }
  CollabSweep out;
  out.counts = counts;
  out.mean_accuracy.assign(counts.size(), 0.0);
  for (auto seed : seeds) {
    auto cfg = resolved(config, seed);
    cfg.anomaly.attack.targets.clear();
    const auto run = run_screened_training(cfg, rounds, false);
    const auto data = generate(cfg.dataset);
    std::vector<Matrix> probs;
    for (const auto& m : run.final_models) probs.push_back(forward(m, data.shared_test.features));
    for (std::size_t c = 0; c < counts.size(); ++c) {
      const double acc = mean_subset_consensus_accuracy(probs, data.shared_test.labels,
                                                        static_cast<std::size_t>(counts[c]));
      out.rows.push_back({counts[c], seed, acc});
      out.mean_accuracy[c] += acc / static_cast<double>(seeds.size());
    }
  }
  for (std::size_t c = 0; c < counts.size(); ++c) {
    out.rows.push_back({counts[c], std::nullopt, out.mean_accuracy[c]});
  }
  out.trend_holds = collaboration_trend_holds(out.mean_accuracy, 0.005);
  return out;
}

void finalize(DetectionCell& c) {
  c.precision = c.tp + c.fp ? std::optional<double>(static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp))
                            : std::nullopt;
  c.recall = c.tp + c.fn ? std::optional<double>(static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn))
                         : std::nullopt;
  const double p = c.precision.value_or(0.0), r = c.recall.value_or(0.0);
  c.f1 = p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0;
  c.false_positive_rate =
      c.fp + c.tn ? static_cast<double>(c.fp) / static_cast<double>(c.fp + c.tn) : 0.0;
}

namespace {

void tally(DetectionCell& c, const std::set<int>& flagged, const std::set<int>& attackers, int n) {
  for (int j = 0; j < n; ++j) {
    const bool f = flagged.count(j) > 0, a = attackers.count(j) > 0;
    if (f && a) ++c.tp;
    else if (f) ++c.fp;
    else if (a) ++c.fn;
    else ++c.tn;
  }
}

// Mean of the per-seed figures; precision/recall averaged where defined.
DetectionCell average_cells(const std::vector<DetectionCell>& cells) {
  DetectionCell out = cells.front();
  out.seed.reset();
  out.tp = out.fp = out.fn = out.tn = 0;
  double p = 0, r = 0, f1 = 0, fpr = 0, lat = 0;
  std::size_t np = 0, nr = 0;
  for (const auto& c : cells) {
    out.tp += c.tp;
    out.fp += c.fp;
    out.fn += c.fn;
    out.tn += c.tn;
    if (c.precision) { p += *c.precision; ++np; }
    if (c.recall) { r += *c.recall; ++nr; }
    f1 += c.f1;
    fpr += c.false_positive_rate;
    lat += c.latency_ms;
  }
  const double k = static_cast<double>(cells.size());
  out.precision = np ? std::optional<double>(p / static_cast<double>(np)) : std::nullopt;
  out.recall = nr ? std::optional<double>(r / static_cast<double>(nr)) : std::nullopt;
  out.f1 = f1 / k;
  out.false_positive_rate = fpr / k;
  out.latency_ms = lat / k;
  return out;
}

std::set<int> pick_attackers(int count, int n, std::uint64_t seed) {
  std::vector<int> ids(static_cast<std::size_t>(n));
  std::iota(ids.begin(), ids.end(), 0);
  Rng rng(derive_seed(seed, {seed_tag::kAttack, 0xA77ACCu}));
  std::shuffle(ids.begin(), ids.end(), rng);
  return {ids.begin(), ids.begin() + count};
}

}  // namespace

DetectionSuite detection_suite(const ExperimentConfig& config,
                               const std::vector<std::uint64_t>& seeds) {
  const auto& grid = config.anomaly;
  if (grid.grid_delta_scales.empty() || grid.grid_attackers.empty()) {
    throw ConfigError("anomaly grid must not be empty");
  }
  if (seeds.empty()) throw ConfigError("sweep_seeds must not be empty");
  DetectionSuite suite;
  const int n = config.dataset.num_clients;
  for (double delta : grid.grid_delta_scales) {
    for (int k : grid.grid_attackers) {
      if (k < 0 || k >= n) throw ConfigError("anomaly.grid_attackers: " + std::to_string(k) + " out of range");
      std::vector<DetectionCell> clmd_cells, z_cells;
      for (auto seed : seeds) {
        auto cfg = resolved(config, seed);
        cfg.anomaly.attack.kind = AttackKind::kParamNoise;
        cfg.anomaly.attack.frozen = false;
        cfg.anomaly.attack.delta_scale = delta;
        cfg.anomaly.attack.targets = pick_attackers(k, n, seed);
        const auto run = run_screened_training(cfg, grid.detection_rounds, false);
        DetectionCell clmd, z;
        clmd.detector = "clmd_common";
        z.detector = "zscore_full";
        for (auto* c : {&clmd, &z}) {
          c->delta_scale = delta;
          c->attackers = k;
          c->seed = seed;
        }
        for (const auto& rec : run.rounds) {
          tally(clmd, rec.flagged, rec.attackers, n);
          tally(z, rec.zscore_flagged, rec.attackers, n);
          clmd.latency_ms += rec.detection_ms;
          z.latency_ms += rec.zscore_ms;
        }
        clmd.latency_ms /= static_cast<double>(run.rounds.size());
        z.latency_ms /= static_cast<double>(run.rounds.size());
        finalize(clmd);
        finalize(z);
        clmd_cells.push_back(clmd);
        z_cells.push_back(z);
      }
      suite.rows.insert(suite.rows.end(), clmd_cells.begin(), clmd_cells.end());
      suite.rows.insert(suite.rows.end(), z_cells.begin(), z_cells.end());
      suite.cells.push_back(average_cells(clmd_cells));
      suite.cells.push_back(average_cells(z_cells));
    }
  }
  suite.latency_by_devices = detection_latency_sweep(config, {5, 10, 20});
  return suite;
}

bool detection_operating_point_holds(const DetectionSuite& suite) {
  bool any = false;
  for (const auto& c : suite.cells) {
    if (c.detector != "clmd_common" || c.attackers == 0 || c.delta_scale < 5.0) continue;
    const auto z = std::find_if(suite.cells.begin(), suite.cells.end(), [&](const DetectionCell& o) {
      return o.detector == "zscore_full" && o.delta_scale == c.delta_scale && o.attackers == c.attackers;
    });
    if (c.recall.value_or(0.0) < 1.0 || c.precision.value_or(0.0) < 0.9) return false;
    if (z != suite.cells.end() && c.f1 < z->f1) return false;
    any = true;
  }
  return any;
}

std::vector<std::pair<int, double>> detection_latency_sweep(const ExperimentConfig& config,
                                                            const std::vector<int>& device_counts) {
  auto base = resolved(config);
  const auto specs = model_layers(base);
  std::vector<std::pair<int, double>> out;
  for (int m : device_counts) {
    if (m < 3) throw ConfigError("latency sweep needs at least three devices");
    auto dc = base.dataset;
    dc.num_clients = m;
    dc.samples_per_client = 10 * dc.num_classes;
    dc.test_size = dc.num_classes;
    dc.num_edge_nodes = 1;
    const auto data = generate(dc);
    std::vector<LayeredModel> models;
    std::vector<int> ids;
    for (int i = 0; i < m; ++i) {
      models.push_back(init_layered_model(specs, derive_seed(base.seed, {static_cast<std::uint64_t>(i)}), i));
      ids.push_back(i);
    }
    const auto batch = make_upload_batch(0, models, ids);
    constexpr int kRepeats = 5;
    const auto t0 = Clock::now();
    for (int rep = 0; rep < kRepeats; ++rep) {
      (void)detect(batch, specs, data.detection_sets.front(), base.anomaly.detector);
    }
    out.emplace_back(m, ms_since(t0) / kRepeats);
  }
  return out;
}

}  // namespace flt
