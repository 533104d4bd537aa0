#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <string_view>

#include "ctcbench/core/error.hpp"
#include "ctcbench/data.hpp"

namespace ctcbench {

enum class ArmName { AUG1, AUG2, BF_WO_DAPI, BF_W_DAPI_NO_AUG, BF_W_DAPI, DAPI_WO_BF, DAPI_W_BF };

/// One training-data composition of the ablation matrix. Validation and test
/// always use the primary channel only.
struct ExperimentArm {
  ArmName name = ArmName::BF_W_DAPI;
  Channel primary_channel = Channel::BF;
  int n_aug_ops = 3;
  bool inject_other_channel = true;

  /// Training samples emitted per training record.
  std::size_t multiplier() const noexcept {
    return 1 + static_cast<std::size_t>(n_aug_ops) + (inject_other_channel ? 1 : 0);
  }

  friend bool operator==(const ExperimentArm&, const ExperimentArm&) = default;
};

inline constexpr std::array<ArmName, 7> kAllArms = {
    ArmName::AUG1,      ArmName::AUG2,       ArmName::BF_WO_DAPI, ArmName::BF_W_DAPI_NO_AUG,
    ArmName::BF_W_DAPI, ArmName::DAPI_WO_BF, ArmName::DAPI_W_BF};

inline constexpr ExperimentArm arm_definition(ArmName n) noexcept {
  switch (n) {
    case ArmName::AUG1: return {n, Channel::BF, 1, false};
    case ArmName::AUG2: return {n, Channel::BF, 2, false};
    case ArmName::BF_WO_DAPI: return {n, Channel::BF, 3, false};
    case ArmName::BF_W_DAPI_NO_AUG: return {n, Channel::BF, 0, true};
    case ArmName::BF_W_DAPI: return {n, Channel::BF, 3, true};
    case ArmName::DAPI_WO_BF: return {n, Channel::DAPI, 3, false};
    case ArmName::DAPI_W_BF: return {n, Channel::DAPI, 3, true};
  }
  return {};
}

inline constexpr std::string_view to_string(ArmName n) noexcept {
  switch (n) {
    case ArmName::AUG1: return "AUG1";
    case ArmName::AUG2: return "AUG2";
    case ArmName::BF_WO_DAPI: return "BF_WO_DAPI";
    case ArmName::BF_W_DAPI_NO_AUG: return "BF_W_DAPI_NO_AUG";
    case ArmName::BF_W_DAPI: return "BF_W_DAPI";
    case ArmName::DAPI_WO_BF: return "DAPI_WO_BF";
    case ArmName::DAPI_W_BF: return "DAPI_W_BF";
  }
  return "?";
}

/// Row label used in rendered tables.
inline constexpr std::string_view display_name(ArmName n) noexcept {
  switch (n) {
    case ArmName::AUG1: return "AUG1";
    case ArmName::AUG2: return "AUG2";
    case ArmName::BF_WO_DAPI: return "BF w/o DAPI";
    case ArmName::BF_W_DAPI_NO_AUG: return "BF w/ DAPI no AUG";
    case ArmName::BF_W_DAPI: return "BF w/ DAPI";
    case ArmName::DAPI_WO_BF: return "DAPI w/o BF";
    case ArmName::DAPI_W_BF: return "DAPI w/ BF";
  }
  return "?";
}

inline ArmName parse_arm(std::string_view s) {
  for (auto n : kAllArms)
    if (to_string(n) == s || display_name(n) == s) return n;
  throw ValidationError("unknown arm '" + std::string(s) + "'");
}

}  // namespace ctcbench
