#pragma once

#include <array>
#include <cstddef>
#include <vector>

namespace rtgnn {

// Wraps an angle to (-pi, pi].
double wrap_angle(double theta);

struct VehicleState {
  double x = 0.0;      // m
  double y = 0.0;      // m
  double theta = 0.0;  // rad, (-pi, pi]
  double v = 0.0;      // m/s

  bool operator==(const VehicleState&) const = default;
};

struct ControlInput {
  double a = 0.0;      // m/s^2
  double omega = 0.0;  // rad/s

  bool operator==(const ControlInput&) const = default;
};

struct IntegrationOptions {
  // When set, speed saturates at zero: a braking vehicle stops and stays put
  // for the rest of the interval instead of reversing.
  bool clamp_speed = true;
};

// Exact integration of the dynamically extended unicycle under a control held
// constant for dt seconds. Throws std::invalid_argument if dt <= 0.
VehicleState integrate_unicycle(const VehicleState& x, const ControlInput& u, double dt,
                                const IntegrationOptions& options = {});

struct PrimitiveConfig {
  std::size_t accel_count = 21;
  double accel_min = -8.0;
  double accel_max = 8.0;
  std::size_t omega_count = 21;
  double omega_min = -0.5;
  double omega_max = 0.5;
  double dt = 0.5;
};

// The (acceleration x angular velocity) lattice. Primitive index
// i = accel_index * omega_count + omega_index.
class MotionPrimitiveSet {
 public:
  // Throws std::invalid_argument for even counts, inverted ranges or dt <= 0.
  explicit MotionPrimitiveSet(const PrimitiveConfig& config = {});

  const PrimitiveConfig& config() const { return config_; }
  std::size_t size() const { return accels_.size() * omegas_.size(); }
  std::size_t accel_count() const { return accels_.size(); }
  std::size_t omega_count() const { return omegas_.size(); }
  double dt() const { return config_.dt; }
  const std::vector<double>& accelerations() const { return accels_; }
  const std::vector<double>& angular_velocities() const { return omegas_; }
  double accel_spacing() const;
  double omega_spacing() const;

  std::size_t index(std::size_t accel_index, std::size_t omega_index) const {
    return accel_index * omegas_.size() + omega_index;
  }
  ControlInput control(std::size_t index) const;
  // Index of the zero-control primitive (lattice centre).
  std::size_t zero_index() const;
  // Nearest primitive along each axis independently, clamped to the lattice.
  std::size_t nearest(const ControlInput& u) const;

 private:
  PrimitiveConfig config_;
  std::vector<double> accels_;
  std::vector<double> omegas_;
};

MotionPrimitiveSet build_primitive_set(const PrimitiveConfig& config = {});

// State reached from one start state under every primitive, in primitive
// index order.
struct FutureStates {
  std::size_t accel_count = 0;
  std::size_t omega_count = 0;
  std::vector<VehicleState> states;

  const VehicleState& at(std::size_t accel_index, std::size_t omega_index) const {
    return states[accel_index * omega_count + omega_index];
  }
};

FutureStates future_states(const VehicleState& x, const MotionPrimitiveSet& prims,
                           const IntegrationOptions& options = {});

// Rigid planar transform p -> R(theta) (p - (x, y)). Storing the origin
// rather than the post-rotation offset makes an agent's own state map to
// exactly (0, 0, 0, v) in its own frame.
struct Pose2 {
  double x = 0.0;
  double y = 0.0;
  double theta = 0.0;

  static Pose2 identity() { return {}; }
  // Transform taking global coordinates into the body frame of `s`.
  static Pose2 frame_of(const VehicleState& s);

  Pose2 inverse() const;
  // (this * other)(p) == this(other(p)).
  Pose2 compose(const Pose2& other) const;
  std::array<double, 2> apply(double px, double py) const;
};

// Position and heading are transformed; speed is frame independent.
VehicleState to_frame(const Pose2& transform, const VehicleState& s);
FutureStates to_frame(const Pose2& transform, const FutureStates& w);

}  // namespace rtgnn
