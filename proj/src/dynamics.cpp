#include "rtgnn/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace rtgnn {

double wrap_angle(double theta) {
  double r = std::remainder(theta, 2.0 * std::numbers::pi);
  if (r <= -std::numbers::pi) r += 2.0 * std::numbers::pi;
  return r;
}

namespace {

constexpr double kSmallOmega = 1e-6;

// sin(h) - h cos(h), evaluated without cancellation for small h.
double sin_minus_hcos(double h) {
  if (std::abs(h) < 0.1) {
    const double h2 = h * h;
    return h * h2 *
           (1.0 / 3.0 +
            h2 * (-1.0 / 30.0 + h2 * (1.0 / 840.0 + h2 * (-1.0 / 45360.0 + h2 / 3991680.0))));
  }
  return std::sin(h) - h * std::cos(h);
}

// Displacement of  d/ds p = (v + a s) (cos, sin)(theta + omega s)  over [0, t].
std::array<double, 2> displacement(double v, double a, double omega, double theta, double t) {
  if (std::abs(omega) < kSmallOmega) {
    // Second-order expansion in omega.
    const double t2 = t * t;
    const double a1 = v * t + 0.5 * a * t2;
    const double b1 = 0.5 * v * t2 + a * t2 * t / 3.0;
    const double c2 = v * t2 * t / 6.0 + a * t2 * t2 / 8.0;
    const double c = std::cos(theta);
    const double s = std::sin(theta);
    return {a1 * c - omega * b1 * s - omega * omega * c2 * c,
            a1 * s + omega * b1 * c - omega * omega * c2 * s};
  }
  // Half-angle form: with h = omega t / 2 and theta_m = theta + h,
  //   dx = (2v + a t) sin(h)/omega cos(theta_m) - a G sin(theta_m)
  //   dy = (2v + a t) sin(h)/omega sin(theta_m) + a G cos(theta_m)
  // where G = 2 (sin h - h cos h) / omega^2.
  const double h = 0.5 * omega * t;
  const double tm = theta + h;
  const double s_over_w = std::sin(h) / omega;
  const double g = 2.0 * sin_minus_hcos(h) / (omega * omega);
  const double lin = (2.0 * v + a * t) * s_over_w;
  const double c = std::cos(tm);
  const double s = std::sin(tm);
  return {lin * c - a * g * s, lin * s + a * g * c};
}

}  // namespace

VehicleState integrate_unicycle(const VehicleState& x, const ControlInput& u, double dt,
                                const IntegrationOptions& options) {
  if (!(dt > 0.0)) throw std::invalid_argument("integrate_unicycle: dt must be positive");
  double moving = dt;
  double v_end = x.v + u.a * dt;
  if (options.clamp_speed && v_end < 0.0) {
    moving = (u.a < 0.0 && x.v > 0.0) ? std::min(dt, -x.v / u.a) : 0.0;
    v_end = 0.0;
  }
  VehicleState out;
  if (moving > 0.0) {
    const auto d = displacement(x.v, u.a, u.omega, x.theta, moving);
    out.x = x.x + d[0];
    out.y = x.y + d[1];
  } else {
    out.x = x.x;
    out.y = x.y;
  }
  out.theta = wrap_angle(x.theta + u.omega * dt);
  out.v = v_end;
  return out;
}

MotionPrimitiveSet::MotionPrimitiveSet(const PrimitiveConfig& config) : config_(config) {
  if (config.accel_count % 2 == 0 || config.omega_count % 2 == 0) {
    throw std::invalid_argument("primitive lattice needs odd counts so zero control is on-lattice (got " +
                                std::to_string(config.accel_count) + "x" +
                                std::to_string(config.omega_count) + ")");
  }
  if (!(config.accel_max > config.accel_min) || !(config.omega_max > config.omega_min)) {
    throw std::invalid_argument("primitive lattice ranges must be increasing");
  }
  if (config.accel_count < 3 || config.omega_count < 3) {
    throw std::invalid_argument("primitive lattice needs at least 3 values per axis");
  }
  if (!(config.dt > 0.0)) throw std::invalid_argument("primitive duration must be positive");
  const auto axis = [](std::size_t n, double lo, double hi) {
    std::vector<double> out(n);
    const double mid = 0.5 * (lo + hi);
    const double span = hi - lo;
    const double centre = static_cast<double>(n - 1) / 2.0;
    for (std::size_t i = 0; i < n; ++i) {
      out[i] = mid + ((static_cast<double>(i) - centre) * span) / static_cast<double>(n - 1);
    }
    return out;
  };
  accels_ = axis(config.accel_count, config.accel_min, config.accel_max);
  omegas_ = axis(config.omega_count, config.omega_min, config.omega_max);
}

double MotionPrimitiveSet::accel_spacing() const {
  return (config_.accel_max - config_.accel_min) / static_cast<double>(accels_.size() - 1);
}

double MotionPrimitiveSet::omega_spacing() const {
  return (config_.omega_max - config_.omega_min) / static_cast<double>(omegas_.size() - 1);
}

ControlInput MotionPrimitiveSet::control(std::size_t index) const {
  return {accels_.at(index / omegas_.size()), omegas_.at(index % omegas_.size())};
}

std::size_t MotionPrimitiveSet::zero_index() const {
  return index(accels_.size() / 2, omegas_.size() / 2);
}

std::size_t MotionPrimitiveSet::nearest(const ControlInput& u) const {
  const auto snap = [](double value, double lo, double spacing, std::size_t n) {
    const double pos = std::round((value - lo) / spacing);
    return static_cast<std::size_t>(std::clamp(pos, 0.0, static_cast<double>(n - 1)));
  };
  return index(snap(u.a, config_.accel_min, accel_spacing(), accels_.size()),
               snap(u.omega, config_.omega_min, omega_spacing(), omegas_.size()));
}

MotionPrimitiveSet build_primitive_set(const PrimitiveConfig& config) {
  return MotionPrimitiveSet(config);
}

FutureStates future_states(const VehicleState& x, const MotionPrimitiveSet& prims,
                           const IntegrationOptions& options) {
  FutureStates w;
  w.accel_count = prims.accel_count();
  w.omega_count = prims.omega_count();
  w.states.reserve(prims.size());
  for (std::size_t i = 0; i < prims.size(); ++i) {
    w.states.push_back(integrate_unicycle(x, prims.control(i), prims.dt(), options));
  }
  return w;
}

Pose2 Pose2::frame_of(const VehicleState& s) { return Pose2{s.x, s.y, -s.theta}; }

Pose2 Pose2::inverse() const {
  // q = R(theta)(p - o)  =>  p = R(-theta) q + o = R(-theta)(q - (-R(theta) o)).
  const double c = std::cos(theta);
  const double s = std::sin(theta);
  return Pose2{-(c * x - s * y), -(s * x + c * y), -theta};
}

Pose2 Pose2::compose(const Pose2& other) const {
  // this(other(p)) = R(ta + tb)(p - o_b - R(-tb) o_a).
  const double c = std::cos(other.theta);
  const double s = std::sin(other.theta);
  return Pose2{other.x + c * x + s * y, other.y - s * x + c * y, theta + other.theta};
}

std::array<double, 2> Pose2::apply(double px, double py) const {
  const double dx = px - x;
  const double dy = py - y;
  const double c = std::cos(theta);
  const double s = std::sin(theta);
  return {c * dx - s * dy, s * dx + c * dy};
}

VehicleState to_frame(const Pose2& transform, const VehicleState& s) {
  const auto p = transform.apply(s.x, s.y);
  return VehicleState{p[0], p[1], wrap_angle(s.theta + transform.theta), s.v};
}

FutureStates to_frame(const Pose2& transform, const FutureStates& w) {
  FutureStates out;
  out.accel_count = w.accel_count;
  out.omega_count = w.omega_count;
  out.states.reserve(w.states.size());
  for (const auto& s : w.states) out.states.push_back(to_frame(transform, s));
  return out;
}

}  // namespace rtgnn
