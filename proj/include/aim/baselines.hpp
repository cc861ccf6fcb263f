#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "aim/behavior.hpp"
#include "aim/world.hpp"

namespace aim::baselines {

enum class SignalState { Green, Yellow, Red };

struct SignalPhase {
  int group = -1;
  double green = 0.0;
  double yellow = 0.0;
};

struct SignalPlan {
  std::vector<SignalPhase> phases;
  double cycle_length = 0.0;

  // Fixed-time plan: 24 s main green, 12 s for left-turn and side groups,
  // 2 s yellow each, no all-red phase.
  static SignalPlan for_layout(const geometry::IntersectionLayout& layout,
                               double main_green = 24.0, double side_green = 12.0,
                               double yellow = 2.0);
};

// Periodic lookup; exactly one group is non-red at any time.
SignalState signal_state(const SignalPlan& plan, double t, int signal_group);

// Arrival stamps plus active occupancy grants per crossing conflict.
struct ReservationLedger {
  std::map<int, double> arrival;  // vehicle id -> control-zone entry time
  std::map<int, int> grant;       // conflict table index -> vehicle id
};

class Controller {
 public:
  virtual ~Controller() = default;
  // Commanded acceleration per world.vehicles index. May update vehicle
  // bookkeeping (committed flags, car-following memory).
  virtual std::vector<double> step(World& world) = 0;
  virtual std::string name() const = 0;
};

struct ControllerConfig {
  behavior::CfParams cf;
  dynamics::MotionLimits limits;
  double dt = 0.1;
  double pr_gap_margin = 2.0;     // PR acceptance margin, seconds
  double convoy_gap = 12.0;       // eFIFO same-lane convoy chaining, meters
  double yield_setback = 3.0;     // in-box stop offset before a conflict
  double threat_margin = 3.0;     // left-turn gap acceptance margin, seconds
};

// Plain car-following, no intersection coordination (test harness aid).
class CarFollowingController : public Controller {
 public:
  explicit CarFollowingController(const ControllerConfig& cfg) : cfg_(cfg) {}
  std::vector<double> step(World& world) override;
  std::string name() const override { return "cf"; }

 private:
  ControllerConfig cfg_;
};

class TrafficLightController : public Controller {
 public:
  TrafficLightController(const ControllerConfig& cfg, const geometry::IntersectionLayout& layout);
  std::vector<double> step(World& world) override;
  std::string name() const override { return "tl"; }
  const SignalPlan& plan() const { return plan_; }

 private:
  ControllerConfig cfg_;
  SignalPlan plan_;
};

class FifoController : public Controller {
 public:
  explicit FifoController(const ControllerConfig& cfg) : cfg_(cfg) {}
  std::vector<double> step(World& world) override;
  std::string name() const override { return "fifo"; }
  const ReservationLedger& ledger() const { return ledger_; }

 private:
  ControllerConfig cfg_;
  ReservationLedger ledger_;
};

class EFifoController : public Controller {
 public:
  explicit EFifoController(const ControllerConfig& cfg) : cfg_(cfg) {}
  std::vector<double> step(World& world) override;
  std::string name() const override { return "efifo"; }
  const ReservationLedger& ledger() const { return ledger_; }
  int stamp_tiebreaks() const { return stamp_tiebreaks_; }

 private:
  ControllerConfig cfg_;
  ReservationLedger ledger_;
  int stamp_tiebreaks_ = 0;
};

class PriorityController : public Controller {
 public:
  explicit PriorityController(const ControllerConfig& cfg) : cfg_(cfg) {}
  std::vector<double> step(World& world) override;
  std::string name() const override { return "pr"; }

 private:
  ControllerConfig cfg_;
};

// Earliest time to cover `dist` from speed v, accelerating at a_max, capped
// at v_max. Returns 0 for dist <= 0.
double time_to_cover(double dist, double v, const dynamics::MotionLimits& limits);

std::unique_ptr<Controller> make_controller(const std::string& name, const ControllerConfig& cfg,
                                            const geometry::IntersectionLayout& layout);

}  // namespace aim::baselines
