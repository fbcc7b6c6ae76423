#pragma once

#include <span>
#include <vector>

#include "flt/model.hpp"

namespace flt {

struct ModelProfile {
  int model_id = 0;
  double experience = 0.0;  // samples consumed / cohort maximum
  double expertise = 0.0;   // accuracy on the shared test set
  double alpha_exp = 0.5;
  double beta_expertise = 0.5;  // alpha_exp + beta_expertise == 1
};

// Throws InputError unless the weights are in [0,1] and sum to 1 within 1e-12.
void validate(const ModelProfile& profile);

// K = alpha * Experience(donor) + beta * Expertise(donor), weights taken
// from the receiver's profile.
double knowledge_share(const ModelProfile& receiver, const ModelProfile& donor);

// Lambda = sum of knowledge_share over peers (receiver excluded).
double learning_enhancement(const ModelProfile& receiver, std::span<const ModelProfile> peers);

struct ConsensusDecision {
  int decision = 0;
  std::vector<double> probabilities;
};

// Mean of every member's probability row for `input`; argmax with ties to
// the lowest class index.
ConsensusDecision negotiate_decision(std::span<const LayeredModel> models,
                                     std::span<const double> input);

// Row-wise consensus of several probability matrices of equal shape.
Matrix consensus_probabilities(std::span<const Matrix> member_probabilities);
double consensus_accuracy(std::span<const Matrix> member_probabilities,
                          std::span<const int> labels);
// Mean consensus accuracy over every size-k subset of the members.
double mean_subset_consensus_accuracy(std::span<const Matrix> member_probabilities,
                                      std::span<const int> labels, std::size_t k);

// Cosine similarity; 0 when either side has zero norm.
double compatibility(const ParamView& a, const ParamView& b);
double cosine_similarity(std::span<const double> a, std::span<const double> b);

// Mean element-wise |change| per round between consecutive snapshots.
double update_rate(std::span<const std::vector<double>> snapshots);
// Adap = UpdateRate * compat.
double adaptability(std::span<const std::vector<double>> snapshots, double compat);

struct ResilienceParams {
  double beta_resilience = 0.5;
  std::size_t loss_window = 5;
};

// Lear = 1 / (1 + variance of the last `loss_window` loss contributions).
double learning_stability(std::span<const double> layer_losses, std::size_t window);
// Resi = beta * Lear + (1 - beta) * Adap.
double resilience(std::span<const std::vector<double>> snapshots,
                  std::span<const double> layer_losses, const ResilienceParams& params,
                  double compat);

}  // namespace flt
