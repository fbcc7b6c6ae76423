#pragma once

#include <set>
#include <string>

namespace flt {

enum class AttackKind { kParamNoise, kParamScale, kLabelFlip };

const char* to_string(AttackKind kind);
AttackKind parse_attack_kind(const std::string& s);

// Poisoning attack applied by the devices in `targets`. For parameter
// attacks delta_scale sizes the perturbation; for label flips it is the
// flipped fraction of the partition.
struct AttackSpec {
  AttackKind kind = AttackKind::kParamNoise;
  double delta_scale = 0.0;
  std::set<int> targets;
  // Frozen attackers skip training and resend (w_m + delta_m) every round.
  bool frozen = false;

  bool operator==(const AttackSpec&) const = default;
};

}  // namespace flt
