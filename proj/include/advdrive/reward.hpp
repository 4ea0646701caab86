#pragma once

#include "advdrive/world.hpp"

namespace advdrive {

// Only beta is tunable; the remaining coefficients are fixed by the reward
// definitions below.
struct RewardParams {
  double beta = 0.5;
};

inline constexpr double kVictimCollisionPenalty = -100.0;
inline constexpr double kVictimOffroadPenalty = -0.5;
inline constexpr double kAdversaryCollisionBonus = 5.0;
inline constexpr double kAdversaryOffroadBonus = 0.05;
inline constexpr double kSpeedDivisor = 10.0;

// (D_prev - D_cur) + F/10 - 100 (CV + CO) - 0.5 (IO + IOL) + beta [while in lane]
double VictimReward(const StepFlags& prev, const StepFlags& cur, const RewardParams& p);

// (D_prev - D_cur) + F/10 + 5 (CV + CO) + 0.05 (IO + IOL)
double AdversaryCollisionReward(const StepFlags& prev, const StepFlags& cur, const RewardParams& p);

// (D_prev - D_cur) + F/10 + 0.05 (IO + IOL)
double AdversaryOffroadReward(const StepFlags& prev, const StepFlags& cur, const RewardParams& p);

double Reward(RewardKind kind, const StepFlags& prev, const StepFlags& cur, const RewardParams& p);

}  // namespace advdrive
