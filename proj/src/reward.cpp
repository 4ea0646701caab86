#include "advdrive/reward.hpp"

namespace advdrive {

namespace {

double Progress(const StepFlags& prev, const StepFlags& cur) {
  return (prev.remaining_distance - cur.remaining_distance) + cur.forward_speed / kSpeedDivisor;
}

double Collisions(const StepFlags& f) { return (f.cv ? 1.0 : 0.0) + (f.co ? 1.0 : 0.0); }
double Offroad(const StepFlags& f) { return (f.io ? 1.0 : 0.0) + (f.iol ? 1.0 : 0.0); }

}  // namespace

double VictimReward(const StepFlags& prev, const StepFlags& cur, const RewardParams& p) {
  const double lane_bonus = cur.iol ? 0.0 : p.beta;
  return Progress(prev, cur) + kVictimCollisionPenalty * Collisions(cur) +
         kVictimOffroadPenalty * Offroad(cur) + lane_bonus;
}

double AdversaryCollisionReward(const StepFlags& prev, const StepFlags& cur, const RewardParams&) {
  return Progress(prev, cur) + kAdversaryCollisionBonus * Collisions(cur) +
         kAdversaryOffroadBonus * Offroad(cur);
}

double AdversaryOffroadReward(const StepFlags& prev, const StepFlags& cur, const RewardParams&) {
  return Progress(prev, cur) + kAdversaryOffroadBonus * Offroad(cur);
}

double Reward(RewardKind kind, const StepFlags& prev, const StepFlags& cur, const RewardParams& p) {
  switch (kind) {
    case RewardKind::kVictim:
      return VictimReward(prev, cur, p);
    case RewardKind::kAdvCollision:
      return AdversaryCollisionReward(prev, cur, p);
    case RewardKind::kAdvOffroad:
      return AdversaryOffroadReward(prev, cur, p);
  }
  return 0.0;
}

}  // namespace advdrive
