#include "flt/collaboration.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "flt/error.hpp"

namespace flt {

void validate(const ModelProfile& p) {
  auto unit = [](double v) { return v >= 0.0 && v <= 1.0; };
  if (!unit(p.alpha_exp) || !unit(p.beta_expertise)) {
    throw InputError("profile weights must lie in [0, 1]");
  }
  if (std::abs(p.alpha_exp + p.beta_expertise - 1.0) > 1e-12) {
    throw InputError("profile weights must sum to 1");
  }
  if (p.experience < 0.0) throw InputError("experience must be nonnegative");
  if (!unit(p.expertise)) throw InputError("expertise must lie in [0, 1]");
}

double knowledge_share(const ModelProfile& receiver, const ModelProfile& donor) {
  if (receiver.model_id == donor.model_id) throw InputError("a model cannot share with itself");
  validate(receiver);
  return receiver.alpha_exp * donor.experience + receiver.beta_expertise * donor.expertise;
}

double learning_enhancement(const ModelProfile& receiver, std::span<const ModelProfile> peers) {
  double total = 0.0;
  for (const auto& p : peers) {
    if (p.model_id == receiver.model_id) continue;
    total += knowledge_share(receiver, p);
  }
  return total;
}

ConsensusDecision negotiate_decision(std::span<const LayeredModel> models,
                                     std::span<const double> input) {
  if (models.empty()) throw InputError("negotiation needs at least one model");
  const Matrix row(1, input.size(), {input.begin(), input.end()});
  std::vector<Matrix> probs;
  for (const auto& m : models) {
    if (m.input_dim() != input.size()) throw InputError("input dimension mismatch in negotiation");
    probs.push_back(forward(m, row));
  }
  const Matrix consensus = consensus_probabilities(probs);
  ConsensusDecision out;
  out.probabilities.assign(consensus.row(0).begin(), consensus.row(0).end());
  out.decision = argmax(out.probabilities);
  return out;
}

Matrix consensus_probabilities(std::span<const Matrix> members) {
  if (members.empty()) throw InputError("consensus of no members");
  Matrix out(members.front().rows(), members.front().cols());
  for (const auto& m : members) {
    if (m.rows() != out.rows() || m.cols() != out.cols()) {
      throw InputError("member probability shapes differ");
    }
    for (std::size_t i = 0; i < m.size(); ++i) out.data()[i] += m.data()[i];
  }
  const double n = static_cast<double>(members.size());
  for (double& v : out.data()) v /= n;
  return out;
}

double consensus_accuracy(std::span<const Matrix> members, std::span<const int> labels) {
  const Matrix c = consensus_probabilities(members);
  if (labels.size() != c.rows()) throw InputError("label count does not match rows");
  if (labels.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t r = 0; r < c.rows(); ++r) hits += argmax(c.row(r)) == labels[r];
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

double mean_subset_consensus_accuracy(std::span<const Matrix> members,
                                      std::span<const int> labels, std::size_t k) {
  const std::size_t n = members.size();
  if (k == 0 || k > n) throw InputError("subset size must be in [1, member count]");
  // Lexicographic enumeration of k-combinations.
  std::vector<std::size_t> idx(k);
  std::iota(idx.begin(), idx.end(), 0);
  double total = 0.0;
  std::size_t subsets = 0;
  std::vector<Matrix> pick(k);
  while (true) {
    for (std::size_t i = 0; i < k; ++i) pick[i] = members[idx[i]];
    total += consensus_accuracy(pick, labels);
    ++subsets;
    std::size_t i = k;
    while (i > 0 && idx[i - 1] == n - k + (i - 1)) --i;
    if (i == 0) break;
    ++idx[i - 1];
    for (std::size_t j = i; j < k; ++j) idx[j] = idx[j - 1] + 1;
  }
  return total / static_cast<double>(subsets);
}

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw InputError("cosine similarity of unequal lengths");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  // The product na*nb commutes, so the result is symmetric bit for bit.
  const double c = dot / std::sqrt(na * nb);
  return std::clamp(c, -1.0, 1.0);
}

double compatibility(const ParamView& a, const ParamView& b) {
  if (a.layer_name != b.layer_name) throw InputError("compatibility across different layers");
  if (a.values.size() != b.values.size()) throw InputError("compatibility of unequal shapes");
  return cosine_similarity(a.values, b.values);
}

double update_rate(std::span<const std::vector<double>> snapshots) {
  if (snapshots.size() < 2) throw InputError("update rate needs at least two snapshots");
  const std::size_t dim = snapshots.front().size();
  if (dim == 0) return 0.0;
  double total = 0.0;
  for (std::size_t t = 1; t < snapshots.size(); ++t) {
    if (snapshots[t].size() != dim) throw InputError("snapshot lengths differ");
    double step = 0.0;
    for (std::size_t e = 0; e < dim; ++e) step += std::abs(snapshots[t][e] - snapshots[t - 1][e]);
    total += step / static_cast<double>(dim);
  }
  return total / static_cast<double>(snapshots.size() - 1);
}

double adaptability(std::span<const std::vector<double>> snapshots, double compat) {
  return update_rate(snapshots) * compat;
}

double learning_stability(std::span<const double> layer_losses, std::size_t window) {
  if (layer_losses.size() < 2) throw InputError("learning stability needs at least two losses");
  if (window < 2) window = 2;
  const auto tail = layer_losses.last(std::min(window, layer_losses.size()));
  const double mean = std::accumulate(tail.begin(), tail.end(), 0.0) / static_cast<double>(tail.size());
  double var = 0.0;
  for (double v : tail) var += (v - mean) * (v - mean);
  var /= static_cast<double>(tail.size());
  return 1.0 / (1.0 + var);
}

double resilience(std::span<const std::vector<double>> snapshots,
                  std::span<const double> layer_losses, const ResilienceParams& params,
                  double compat) {
  const double beta = params.beta_resilience;
  if (!(beta >= 0.0 && beta <= 1.0)) throw InputError("beta_resilience must lie in [0, 1]");
  const double lear = learning_stability(layer_losses, params.loss_window);
  const double adap = adaptability(snapshots, compat);
  return beta * lear + (1.0 - beta) * adap;
}

}  // namespace flt
