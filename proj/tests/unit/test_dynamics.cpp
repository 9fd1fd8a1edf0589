#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "rtgnn/dynamics.hpp"
#include "rtgnn/traffic.hpp"

namespace rtgnn {
namespace {

using std::numbers::pi;

// Classical RK4 on the unclamped unicycle with n sub-steps.
VehicleState rk4(VehicleState s, const ControlInput& u, double dt, int n) {
  const auto f = [&](const std::array<double, 4>& z) {
    return std::array<double, 4>{z[3] * std::cos(z[2]), z[3] * std::sin(z[2]), u.omega, u.a};
  };
  std::array<double, 4> z = {s.x, s.y, s.theta, s.v};
  const double h = dt / n;
  for (int i = 0; i < n; ++i) {
    const auto add = [](const std::array<double, 4>& a, const std::array<double, 4>& b, double c) {
      return std::array<double, 4>{a[0] + c * b[0], a[1] + c * b[1], a[2] + c * b[2], a[3] + c * b[3]};
    };
    const auto k1 = f(z);
    const auto k2 = f(add(z, k1, h / 2));
    const auto k3 = f(add(z, k2, h / 2));
    const auto k4 = f(add(z, k3, h));
    for (int j = 0; j < 4; ++j) z[j] += h / 6 * (k1[j] + 2 * k2[j] + 2 * k3[j] + k4[j]);
  }
  return {z[0], z[1], wrap_angle(z[2]), z[3]};
}

double angle_gap(double a, double b) { return std::abs(wrap_angle(a - b)); }

TEST(Integrate, ConstantSpeedStraightLine) {
  const VehicleState s = integrate_unicycle({0, 0, 0, 2}, {0, 0}, 0.5);
  EXPECT_EQ(s, (VehicleState{1.0, 0.0, 0.0, 2.0}));
}

TEST(Integrate, AccelerationFromRest) {
  const VehicleState s = integrate_unicycle({0, 0, 0, 0}, {1, 0}, 0.5);
  EXPECT_NEAR(s.x, 0.125, 1e-15);
  EXPECT_EQ(s.y, 0.0);
  EXPECT_EQ(s.theta, 0.0);
  EXPECT_NEAR(s.v, 0.5, 1e-15);
}

TEST(Integrate, TurningAtRestMatchesRk4) {
  const VehicleState s = integrate_unicycle({0, 0, 0, 0}, {0, 0.5}, 0.5);
  const VehicleState r = rk4({0, 0, 0, 0}, {0, 0.5}, 0.5, 1000);
  EXPECT_NEAR(s.x, r.x, 1e-6);
  EXPECT_NEAR(s.y, r.y, 1e-6);
  EXPECT_NEAR(s.theta, 0.25, 1e-12);
}

TEST(Integrate, RandomisedAgreementWithFineRk4) {
  std::mt19937_64 rng(17);
  const IntegrationOptions free{false};
  for (int trial = 0; trial < 500; ++trial) {
    const VehicleState x{40 * uniform_unit(rng) - 20, 40 * uniform_unit(rng) - 20,
                         2 * pi * uniform_unit(rng) - pi, 15 * uniform_unit(rng)};
    const ControlInput u{16 * uniform_unit(rng) - 8, uniform_unit(rng) - 0.5};
    const VehicleState e = integrate_unicycle(x, u, 0.5, free);
    const VehicleState r = rk4(x, u, 0.5, 400);
    EXPECT_LT(std::hypot(e.x - r.x, e.y - r.y), 1e-6);
    EXPECT_LT(angle_gap(e.theta, r.theta), 1e-8);
    EXPECT_NEAR(e.v, x.v + u.a * 0.5, 1e-12);
  }
}

TEST(Integrate, SmallOmegaBranchIsContinuous) {
  const VehicleState x{1.0, -2.0, 0.3, 7.0};
  for (const double a : {-3.0, 0.0, 2.0}) {
    // One ulp either side of the switch between expansion and closed form.
    const VehicleState lo = integrate_unicycle(x, {a, std::nextafter(1e-6, 0.0)}, 0.5, {false});
    const VehicleState hi = integrate_unicycle(x, {a, 1e-6}, 0.5, {false});
    EXPECT_LT(std::hypot(lo.x - hi.x, lo.y - hi.y), 1e-9);
    const VehicleState r = rk4(x, {a, 1e-6}, 0.5, 400);
    EXPECT_LT(std::hypot(lo.x - r.x, lo.y - r.y), 1e-9);
  }
}

TEST(Integrate, HeadingWrapsIntoHalfOpenInterval) {
  const VehicleState s = integrate_unicycle({0, 0, pi - 0.01, 1}, {0, 0.5}, 0.5);
  EXPECT_GT(s.theta, -pi);
  EXPECT_LE(s.theta, pi);
  EXPECT_NEAR(s.theta, -pi + 0.24, 1e-12);
  EXPECT_EQ(wrap_angle(pi), pi);
  EXPECT_EQ(wrap_angle(-pi), pi);
}

TEST(Integrate, ClampedBrakingStopsInsteadOfReversing) {
  const VehicleState s = integrate_unicycle({0, 0, 0, 2}, {-8, 0}, 0.5);
  EXPECT_EQ(s.v, 0.0);
  EXPECT_NEAR(s.x, 0.25, 1e-12);  // v^2 / (2 |a|)
  const VehicleState r = integrate_unicycle({0, 0, 0, 2}, {-8, 0}, 0.5, {false});
  EXPECT_EQ(r.v, -2.0);
}

TEST(Integrate, RejectsNonPositiveStep) {
  EXPECT_THROW(integrate_unicycle({}, {}, 0.0), std::invalid_argument);
  EXPECT_THROW(integrate_unicycle({}, {}, -0.5), std::invalid_argument);
}

TEST(Primitives, DefaultLattice) {
  const MotionPrimitiveSet p;
  EXPECT_EQ(p.size(), 441u);
  EXPECT_EQ(p.zero_index(), 220u);
  EXPECT_EQ(p.control(220), (ControlInput{0.0, 0.0}));
  EXPECT_NEAR(p.accel_spacing(), 0.8, 1e-15);
  EXPECT_NEAR(p.omega_spacing(), 0.05, 1e-15);
  EXPECT_EQ(p.control(0), (ControlInput{-8.0, -0.5}));
  EXPECT_EQ(p.control(440), (ControlInput{8.0, 0.5}));
  EXPECT_EQ(p.index(11, 10), 241u);
}

TEST(Primitives, InvalidConfigurationsRejected) {
  PrimitiveConfig even;
  even.accel_count = 20;
  EXPECT_THROW(MotionPrimitiveSet{even}, std::invalid_argument);
  PrimitiveConfig inverted;
  inverted.omega_min = 1.0;
  EXPECT_THROW(MotionPrimitiveSet{inverted}, std::invalid_argument);
  PrimitiveConfig bad_dt;
  bad_dt.dt = 0.0;
  EXPECT_THROW(MotionPrimitiveSet{bad_dt}, std::invalid_argument);
}

TEST(Primitives, NearestSnapsPerAxisAndClamps) {
  const MotionPrimitiveSet p;
  EXPECT_EQ(p.nearest({0.0, 0.0}), 220u);
  EXPECT_EQ(p.nearest({0.9, 0.0}), p.index(11, 10));
  EXPECT_EQ(p.nearest({100.0, -100.0}), p.index(20, 0));
  for (std::size_t i = 0; i < p.size(); ++i) EXPECT_EQ(p.nearest(p.control(i)), i);
}

TEST(FutureStatesTest, ZeroControlAtCentre) {
  const MotionPrimitiveSet p;
  const VehicleState x{3, 4, 0.7, 6};
  const FutureStates w = future_states(x, p);
  ASSERT_EQ(w.states.size(), 441u);
  EXPECT_EQ(w.at(10, 10), integrate_unicycle(x, {0, 0}, 0.5));
  const FutureStates still = future_states({1, 2, 0, 0}, p);
  EXPECT_EQ(still.at(10, 10).x, 1.0);
  EXPECT_EQ(still.at(10, 10).y, 2.0);
}

TEST(FutureStatesTest, OmegaMirrorSymmetry) {
  const MotionPrimitiveSet p;
  const FutureStates w = future_states({0, 0, 0, 5}, p);
  for (std::size_t ia = 0; ia < 21; ++ia) {
    for (std::size_t io = 0; io < 21; ++io) {
      const VehicleState& a = w.at(ia, io);
      const VehicleState& b = w.at(ia, 20 - io);
      EXPECT_NEAR(a.x, b.x, 1e-12);
      EXPECT_NEAR(a.y, -b.y, 1e-12);
      EXPECT_NEAR(a.theta, -b.theta, 1e-12);
    }
  }
}

TEST(Frames, IdentityOwnFrameAndInverse) {
  const VehicleState s{5.0, -3.0, 1.1, 4.0};
  EXPECT_EQ(to_frame(Pose2::identity(), s), s);
  const VehicleState own = to_frame(Pose2::frame_of(s), s);
  EXPECT_EQ(own, (VehicleState{0.0, 0.0, 0.0, 4.0}));
  const Pose2 f = Pose2::frame_of({-7.0, 2.0, -2.5, 0.0});
  const VehicleState back = to_frame(f.inverse(), to_frame(f, s));
  EXPECT_NEAR(back.x, s.x, 1e-12);
  EXPECT_NEAR(back.y, s.y, 1e-12);
  EXPECT_NEAR(angle_gap(back.theta, s.theta), 0.0, 1e-12);
}

TEST(Frames, DistancesPreservedAndComposition) {
  std::mt19937_64 rng(8);
  const Pose2 f = Pose2::frame_of({3.0, 1.0, 0.4, 0.0});
  const Pose2 g = Pose2::frame_of({-2.0, 5.0, 2.9, 0.0});
  for (int i = 0; i < 50; ++i) {
    const double ax = 20 * uniform_unit(rng), ay = 20 * uniform_unit(rng);
    const double bx = 20 * uniform_unit(rng), by = 20 * uniform_unit(rng);
    const auto pa = f.apply(ax, ay), pb = f.apply(bx, by);
    EXPECT_NEAR(std::hypot(pa[0] - pb[0], pa[1] - pb[1]), std::hypot(ax - bx, ay - by), 1e-12);
    const auto c1 = f.compose(g).apply(ax, ay);
    const auto inner = g.apply(ax, ay);
    const auto c2 = f.apply(inner[0], inner[1]);
    EXPECT_NEAR(c1[0], c2[0], 1e-12);
    EXPECT_NEAR(c1[1], c2[1], 1e-12);
  }
}

}  // namespace
}  // namespace rtgnn
