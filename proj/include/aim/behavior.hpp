#pragma once

#include <optional>

#include "aim/dynamics.hpp"
#include "aim/world.hpp"

namespace aim::behavior {

enum class CfVariant { IDM, EIDM };

struct CfParams {
  double v0 = 10.0;     // desired speed
  double T = 1.5;       // time headway
  double s0 = 2.0;      // minimum gap
  double a = 3.0;       // max acceleration
  double b = 2.0;       // comfortable deceleration
  double delta = 4.0;
  double driveoff_delay = 0.5;  // EIDM reaction time after the leader departs
  CfVariant variant = CfVariant::EIDM;
};

enum class LeaderSource { None, Real, VirtualHalt, SignalStop };

struct LeaderView {
  double gap = kInf;           // bumper to bumper, meters
  double leader_speed = 0.0;   // m/s
  LeaderSource source = LeaderSource::None;
};

// Plain IDM. gap <= 0 returns a_min (emergency clamp).
double idm_accel(double ego_v, const LeaderView& view, const CfParams& p,
                 const dynamics::MotionLimits& limits = {});

// IDM plus deterministic drive-off: after the leader departs beyond s0, the
// follower reacts once the configured delay elapsed and launches with the
// headway term dropped from s* until it is up to speed.
double eidm_accel(double ego_v, const LeaderView& view, const CfParams& p,
                  const dynamics::MotionLimits& limits, CfMemory& mem, double now);

// Variant dispatch; updates mem and counts emergency (gap<=0) events.
double cf_accel(double ego_v, const LeaderView& view, const CfParams& p,
                const dynamics::MotionLimits& limits, CfMemory& mem, double now);

// Center-to-center along-path distance to `other` if it currently leads `ego`
// on the same path: same route, shared approach prefix, or a shared exit
// suffix the other vehicle already reached. nullopt otherwise.
std::optional<double> path_gap(const World& world, std::size_t ego_index,
                               std::size_t other_index);

// Nearest same-path predecessor: same route, shared approach prefix, or a
// vehicle already on a shared exit suffix.
LeaderView find_leader(const World& world, std::size_t ego_index);

// find_leader plus the right-of-way halt-point substitution: a yielding
// vehicle sees a stationary virtual leader at the halt point whenever the real
// leader is farther away than the halt point.
LeaderView resolve_leader(const World& world, std::size_t ego_index, bool right_of_way);

// Merges a stationary virtual leader at arc length stop_s into the view.
LeaderView with_virtual_stop(const World& world, std::size_t ego_index, double stop_s,
                             LeaderView base, LeaderSource source);

}  // namespace aim::behavior
