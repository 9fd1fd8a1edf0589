#include "rtgnn/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <stdexcept>

#include "rtgnn/traffic.hpp"

namespace rtgnn {
namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kPathStep = 0.5;       // m between path samples
constexpr std::size_t kLaneStride = 4;  // path samples per map lane point
constexpr double kVehicleLength = 4.5;
constexpr double kDt = kSceneStepSeconds;
constexpr double kInf = std::numeric_limits<double>::infinity();

// IDM constants.
constexpr double kAccelMax = 1.5;
constexpr double kComfortBrake = 2.5;
constexpr double kHeadway = 1.2;
constexpr double kMinGap = 2.5;

struct Path {
  std::vector<Point2> pts;
  std::vector<double> heading;
  std::vector<double> s;
  std::vector<double> kappa;
};

class PathBuilder {
 public:
  PathBuilder(Point2 start, double heading) : p_(start), h_(heading) { push(); }

  PathBuilder& straight(double length) {
    const auto n = static_cast<std::size_t>(std::ceil(length / kPathStep));
    const Point2 a = p_;
    for (std::size_t i = 1; i <= n; ++i) {
      const double d = length * static_cast<double>(i) / static_cast<double>(n);
      p_ = {a.x + d * std::cos(h_), a.y + d * std::sin(h_)};
      push();
    }
    return *this;
  }

  // Positive angle turns left.
  PathBuilder& arc(double radius, double angle) {
    const double sign = angle > 0.0 ? 1.0 : -1.0;
    const Point2 c{p_.x - sign * radius * std::sin(h_), p_.y + sign * radius * std::cos(h_)};
    const double h0 = h_;
    const auto n = static_cast<std::size_t>(std::ceil(radius * std::abs(angle) / kPathStep));
    for (std::size_t i = 1; i <= n; ++i) {
      const double phi = h0 + angle * static_cast<double>(i) / static_cast<double>(n);
      p_ = {c.x + sign * radius * std::sin(phi), c.y - sign * radius * std::cos(phi)};
      h_ = phi;
      push();
    }
    return *this;
  }

  Path build() const {
    Path path = path_;
    const std::size_t n = path.pts.size();
    path.s.assign(n, 0.0);
    path.kappa.assign(n, 0.0);
    for (std::size_t i = 1; i < n; ++i) {
      path.s[i] = path.s[i - 1] + std::hypot(path.pts[i].x - path.pts[i - 1].x,
                                             path.pts[i].y - path.pts[i - 1].y);
    }
    for (std::size_t i = 1; i + 1 < n; ++i) {
      const double ds = path.s[i + 1] - path.s[i - 1];
      path.kappa[i] = wrap_angle(path.heading[i + 1] - path.heading[i - 1]) / ds;
    }
    return path;
  }

 private:
  void push() {
    path_.pts.push_back(p_);
    path_.heading.push_back(wrap_angle(h_));
  }

  Point2 p_;
  double h_;
  Path path_;
};

Path rotate(const Path& in, double phi) {
  Path out = in;
  const double c = std::cos(phi), s = std::sin(phi);
  for (std::size_t i = 0; i < in.pts.size(); ++i) {
    out.pts[i] = {c * in.pts[i].x - s * in.pts[i].y, s * in.pts[i].x + c * in.pts[i].y};
    out.heading[i] = wrap_angle(in.heading[i] + phi);
  }
  return out;
}

Lane to_lane(const Path& path) {
  Lane lane;
  for (std::size_t i = 0; i < path.pts.size(); i += kLaneStride) {
    lane.points.push_back(path.pts[i]);
    lane.headings.push_back(path.heading[i]);
  }
  if ((path.pts.size() - 1) % kLaneStride != 0) {
    lane.points.push_back(path.pts.back());
    lane.headings.push_back(path.heading.back());
  }
  return lane;
}

Polygon rect(double x0, double y0, double x1, double y1) {
  return {{x0, y0}, {x1, y0}, {x1, y1}, {x0, y1}};
}

struct Projection {
  double s = 0.0;
  double lateral = 0.0;
  std::size_t index = 0;
};

Projection project(const Path& path, double x, double y) {
  std::size_t best = 0;
  double best_d = kInf;
  for (std::size_t i = 0; i < path.pts.size(); ++i) {
    const double d = std::hypot(x - path.pts[i].x, y - path.pts[i].y);
    if (d < best_d) {
      best_d = d;
      best = i;
    }
  }
  const double c = std::cos(path.heading[best]), s = std::sin(path.heading[best]);
  const double dx = x - path.pts[best].x, dy = y - path.pts[best].y;
  return {path.s[best] + c * dx + s * dy, -s * dx + c * dy, best};
}

// Position and heading at arclength s; extrapolates straight past the ends.
VehicleState pose_at(const Path& path, double s) {
  const auto it = std::upper_bound(path.s.begin(), path.s.end(), s);
  std::size_t i = it == path.s.begin() ? 0 : static_cast<std::size_t>(it - path.s.begin()) - 1;
  i = std::min(i, path.pts.size() - 1);
  const double ds = s - path.s[i];
  const double h = path.heading[i];
  if (i + 1 < path.pts.size() && ds >= 0.0) {
    const double f = ds / (path.s[i + 1] - path.s[i]);
    return {path.pts[i].x + f * (path.pts[i + 1].x - path.pts[i].x),
            path.pts[i].y + f * (path.pts[i + 1].y - path.pts[i].y),
            wrap_angle(h + f * wrap_angle(path.heading[i + 1] - h)), 0.0};
  }
  return {path.pts[i].x + ds * std::cos(h), path.pts[i].y + ds * std::sin(h), h, 0.0};
}

struct SimAgent {
  std::int64_t id = 0;
  AgentKind kind = AgentKind::kVehicle;
  VehicleState state;
  std::size_t path = 0;
  double v_des = 0.0;
  bool parked = false;
  // Pending lane change to `target` from step `change_step` on.
  std::optional<std::size_t> target;
  std::size_t change_step = 0;
  // Requests a change to `target` once a parked vehicle blocks the lane.
  bool merge_around_parked = false;
  // Desired-speed change at a given step.
  std::optional<std::pair<std::size_t, double>> speed_event;
};

struct Crosswalk {
  double x = 0.0;
  std::vector<double> stop_s;  // per path, centre limit while blocked
};

struct World {
  std::vector<Path> paths;
  SemanticMap map;
  std::optional<Crosswalk> crosswalk;
  std::vector<SimAgent> agents;
};

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform_unit(gen_); }
  std::size_t integer(std::size_t lo, std::size_t hi) {
    const auto span = static_cast<double>(hi - lo + 1);
    return std::min(hi, lo + static_cast<std::size_t>(uniform_unit(gen_) * span));
  }
  bool chance(double p) { return uniform_unit(gen_) < p; }

 private:
  std::mt19937_64 gen_;
};

// Distance covered in one step from speed v under acceleration a, stopping at 0.
double advance(double v, double a) {
  if (a < 0.0 && v + a * kDt < 0.0) return v * v / (-2.0 * a);
  return v * kDt + 0.5 * a * kDt * kDt;
}

double idm(double v, double v0, double gap, double lead_v) {
  v0 = std::max(v0, 0.1);
  const double free = v <= v0 ? kAccelMax * (1.0 - std::pow(v / v0, 4.0))
                              : -kComfortBrake * (1.0 - (v0 / v) * (v0 / v));
  if (!std::isfinite(gap)) return free;
  const double s_star =
      kMinGap + std::max(0.0, v * kHeadway + v * (v - lead_v) / (2.0 * std::sqrt(kAccelMax * kComfortBrake)));
  const double ratio = s_star / std::max(gap, 0.1);
  return free - kAccelMax * ratio * ratio;
}

bool crosswalk_blocked(const World& w) {
  for (const SimAgent& a : w.agents) {
    if (a.kind != AgentKind::kPedestrian) continue;
    if (std::abs(a.state.x - w.crosswalk->x) > 4.0) continue;
    const double y = a.state.y;
    const double vy = a.state.v * std::sin(a.state.theta);
    if (std::abs(y) < 4.5 || (std::abs(y) < 10.0 && y * vy < 0.0)) return true;
  }
  return false;
}

struct Leader {
  double gap = kInf;    // free space ahead, m
  double speed = 0.0;   // along my path
  double limit = kInf;  // largest centre arclength I may reach next step
  bool parked = false;
};

Leader find_leader(const World& w, std::size_t i, const Projection& me) {
  const SimAgent& self = w.agents[i];
  const Path& path = w.paths[self.path];
  Leader lead;
  for (std::size_t j = 0; j < w.agents.size(); ++j) {
    const SimAgent& o = w.agents[j];
    if (j == i || o.kind == AgentKind::kPedestrian) continue;
    const Projection p = project(path, o.state.x, o.state.y);
    if (std::abs(p.lateral) > 2.0) continue;
    const double dh = wrap_angle(o.state.theta - path.heading[p.index]);
    if (std::abs(dh) > kPi / 3.0) continue;
    const double ds = p.s - me.s;
    if (ds <= 0.0 || ds > 80.0) continue;
    const double gap = ds - kVehicleLength;
    if (gap < lead.gap) {
      lead.gap = gap;
      lead.speed = o.state.v * std::cos(dh);
      lead.limit = p.s + advance(o.state.v, -8.0) - kVehicleLength;
      lead.parked = o.parked;
    }
  }
  if (w.crosswalk && crosswalk_blocked(w)) {
    const double stop = w.crosswalk->stop_s[self.path];
    const double gap = stop - me.s;
    const double v = self.state.v;
    // Only stop when a comfortable stop is still possible.
    if (gap > 0.0 && v * v / 8.0 <= gap + 1.0 && gap < lead.gap) {
      lead.gap = gap;
      lead.speed = 0.0;
      lead.limit = stop;
      lead.parked = false;
    }
  }
  return lead;
}

bool lane_free(const World& w, std::size_t i, std::size_t target) {
  const Path& path = w.paths[target];
  const SimAgent& self = w.agents[i];
  const double s_me = project(path, self.state.x, self.state.y).s;
  for (std::size_t j = 0; j < w.agents.size(); ++j) {
    const SimAgent& o = w.agents[j];
    if (j == i || o.kind == AgentKind::kPedestrian) continue;
    const Projection p = project(path, o.state.x, o.state.y);
    if (std::abs(p.lateral) > 2.0) continue;
    const double ds = p.s - s_me;
    if (ds > -12.0 && ds < 14.0) return false;
  }
  return true;
}

ControlInput drive(World& w, std::size_t i, std::size_t step, const MotionPrimitiveSet& prims) {
  SimAgent& self = w.agents[i];
  if (self.kind == AgentKind::kPedestrian || self.parked) return prims.control(prims.zero_index());
  if (self.speed_event && self.speed_event->first == step) self.v_des = self.speed_event->second;

  Projection me = project(w.paths[self.path], self.state.x, self.state.y);
  Leader lead = find_leader(w, i, me);
  if (self.merge_around_parked && lead.parked && lead.gap < 35.0 && self.target) {
    self.change_step = std::min(self.change_step, step);
  }
  if (self.target && step >= self.change_step && lane_free(w, i, *self.target)) {
    self.path = *self.target;
    self.target.reset();
    me = project(w.paths[self.path], self.state.x, self.state.y);
    lead = find_leader(w, i, me);
  }
  const Path& path = w.paths[self.path];
  const double v = self.state.v;

  double a = idm(v, self.v_des, lead.gap, lead.speed);
  // Slow down ahead of curves so |omega| stays inside the lattice.
  for (std::size_t k = me.index; k < path.pts.size() && path.s[k] <= me.s + 40.0; ++k) {
    const double kappa = std::abs(path.kappa[k]);
    if (kappa < 1e-3) continue;
    const double v_turn = std::min(0.45 / kappa, std::sqrt(2.5 / kappa));
    if (v <= v_turn) continue;
    const double d = std::max(path.s[k] - me.s, 2.0);
    a = std::min(a, (v_turn * v_turn - v * v) / (2.0 * d));
  }

  // Pure pursuit on the path.
  const double lookahead = std::max(4.0, 1.2 * v);
  const VehicleState target = pose_at(path, me.s + lookahead);
  const auto local = Pose2::frame_of(self.state).apply(target.x, target.y);
  const double alpha = std::atan2(local[1], local[0]);
  const double omega = v * 2.0 * std::sin(alpha) / lookahead;

  const std::size_t nearest = prims.nearest({a, omega});
  std::size_t ai = nearest / prims.omega_count();
  const std::size_t oi = nearest % prims.omega_count();
  // Never advance past the worst-case position of the vehicle ahead.
  while (ai > 0 && me.s + advance(v, prims.accelerations()[ai]) > lead.limit) --ai;
  return prims.control(prims.index(ai, oi));
}

SceneSequence simulate(World& w, const ScenarioSpec& spec, const std::string& id) {
  const MotionPrimitiveSet prims;
  SceneSequence scene;
  scene.id = id;
  scene.map = w.map;
  for (std::size_t step = 0; step < spec.steps; ++step) {
    SceneStep snap;
    snap.t = kDt * static_cast<double>(step);
    for (const SimAgent& a : w.agents) snap.agents.push_back({a.id, a.kind, a.state, {}});
    scene.steps.push_back(std::move(snap));
    if (step + 1 == spec.steps) break;
    std::vector<ControlInput> u(w.agents.size());
    for (std::size_t i = 0; i < w.agents.size(); ++i) u[i] = drive(w, i, step, prims);
    for (std::size_t i = 0; i < w.agents.size(); ++i) {
      w.agents[i].state = integrate_unicycle(w.agents[i].state, u[i], kDt);
    }
  }
  return scene;
}

SimAgent vehicle_on(const World& w, std::size_t path, double s, double v) {
  SimAgent a;
  a.state = pose_at(w.paths[path], s);
  a.state.v = v;
  a.path = path;
  a.v_des = v;
  return a;
}

void assign_ids(World& w) {
  for (std::size_t i = 0; i < w.agents.size(); ++i) w.agents[i].id = static_cast<std::int64_t>(i + 1);
}

bool clear_of(const World& w, const VehicleState& s, double min_dist) {
  return std::all_of(w.agents.begin(), w.agents.end(), [&](const SimAgent& a) {
    return std::hypot(a.state.x - s.x, a.state.y - s.y) >= min_dist;
  });
}

// Straight road along x; lanes given by their y offset and direction.
World straight_road(const std::vector<std::pair<double, bool>>& lanes, double y0, double y1) {
  World w;
  for (const auto& [y, east] : lanes) {
    const Path p = east ? PathBuilder({-120.0, y}, 0.0).straight(340.0).build()
                        : PathBuilder({220.0, y}, kPi).straight(340.0).build();
    w.paths.push_back(p);
    w.map.lanes.push_back(to_lane(p));
  }
  w.map.drivable.push_back(rect(-120.0, y0, 220.0, y1));
  return w;
}

// Arclength of a path at global x along its travel direction.
double s_at_x(const Path& p, double x) { return project(p, x, p.pts.front().y).s; }

World car_following(const ScenarioSpec& spec, Rng& rng) {
  World w = straight_road({{-1.75, true}, {1.75, false}}, -3.5, 3.5);
  const std::size_t n = rng.integer(spec.min_agents, spec.max_agents);
  const double base = rng.uniform(spec.min_speed, spec.max_speed);
  double x = rng.uniform(15.0, 35.0);
  for (std::size_t k = 0; k < n; ++k) {
    const double v = std::clamp(base + rng.uniform(-1.0, 1.0), spec.min_speed, spec.max_speed);
    SimAgent a = vehicle_on(w, 0, s_at_x(w.paths[0], x), v);
    if (k == 0) {
      if (rng.chance(0.7)) {
        const std::size_t at = rng.integer(1, std::max<std::size_t>(1, spec.steps - 2));
        const double target = rng.chance(0.6) ? rng.uniform(0.0, 0.6) * base
                                              : rng.uniform(spec.min_speed, spec.max_speed);
        a.speed_event = std::make_pair(at, target);
      }
    } else {
      a.v_des = base + rng.uniform(1.0, 3.0);
    }
    w.agents.push_back(a);
    x -= rng.uniform(10.0, 18.0) + 0.8 * v;
  }
  w.agents[rng.integer(0, n - 1)].kind = AgentKind::kEgo;
  return w;
}

World lane_change(const ScenarioSpec& spec, Rng& rng) {
  World w = straight_road({{-1.75, true}, {-5.25, true}}, -7.0, 0.0);
  const std::size_t n = rng.integer(spec.min_agents, spec.max_agents);
  const double base[2] = {rng.uniform(spec.min_speed, spec.max_speed),
                          rng.uniform(spec.min_speed, spec.max_speed)};
  for (std::size_t k = 0; k < n; ++k) {
    for (int attempt = 0; attempt < 50; ++attempt) {
      const std::size_t lane = rng.integer(0, 1);
      const double x = k == 0 ? 0.0 : rng.uniform(-8.0, 38.0);
      const double v =
          std::clamp(base[lane] + rng.uniform(-1.0, 1.0), spec.min_speed, spec.max_speed);
      SimAgent a = vehicle_on(w, lane, s_at_x(w.paths[lane], x), v);
      if (!clear_of(w, a.state, 12.0)) continue;
      const bool changes = k == 0 ? rng.chance(0.25) : rng.chance(0.5);
      if (changes) {
        a.target = 1 - lane;
        a.change_step = rng.integer(0, 3);
      }
      w.agents.push_back(a);
      break;
    }
  }
  // At least one non-ego lane change when there are other vehicles.
  const bool any = std::any_of(w.agents.begin() + 1, w.agents.end(),
                               [](const SimAgent& a) { return a.target.has_value(); });
  if (!any && w.agents.size() > 1) {
    SimAgent& a = w.agents[rng.integer(1, w.agents.size() - 1)];
    a.target = 1 - a.path;
    a.change_step = rng.integer(0, 3);
  }
  w.agents.front().kind = AgentKind::kEgo;
  return w;
}

World parked_merge(const ScenarioSpec& spec, Rng& rng) {
  World w = straight_road({{-1.75, true}, {-5.25, true}}, -7.0, 0.0);
  const std::size_t n = std::max<std::size_t>(2, rng.integer(spec.min_agents, spec.max_agents));
  const double xp = rng.uniform(30.0, 50.0);
  SimAgent parked = vehicle_on(w, 1, s_at_x(w.paths[1], xp), 0.0);
  parked.parked = true;
  w.agents.push_back(parked);
  const bool ego_behind = rng.chance(0.5);
  for (std::size_t k = 1; k < n; ++k) {
    for (int attempt = 0; attempt < 50; ++attempt) {
      const bool ego = k == 1;
      const std::size_t lane = ego ? (ego_behind ? 1 : 0) : rng.integer(0, 1);
      const double x = ego ? (ego_behind ? 0.0 : rng.uniform(-5.0, 10.0))
                           : rng.uniform(-10.0, lane == 1 ? xp - 14.0 : 45.0);
      const double v = rng.uniform(spec.min_speed, spec.max_speed);
      SimAgent a = vehicle_on(w, lane, s_at_x(w.paths[lane], x), v);
      if (!clear_of(w, a.state, 12.0)) continue;
      if (lane == 1) {
        a.target = 0;
        a.change_step = spec.steps;  // triggered by the parked vehicle
        a.merge_around_parked = true;
      }
      if (ego) a.kind = AgentKind::kEgo;
      w.agents.push_back(a);
      break;
    }
  }
  return w;
}

World pedestrian_cross(const ScenarioSpec& spec, Rng& rng) {
  World w = straight_road({{-1.75, true}, {1.75, false}}, -3.5, 3.5);
  Crosswalk cw;
  cw.x = rng.uniform(15.0, 30.0);
  for (const Path& p : w.paths) cw.stop_s.push_back(s_at_x(p, cw.x) - 5.0);
  w.crosswalk = cw;
  const std::size_t n = rng.integer(spec.min_agents, spec.max_agents);
  for (std::size_t k = 0; k < n; ++k) {
    for (int attempt = 0; attempt < 50; ++attempt) {
      const std::size_t lane = k == 0 ? 0 : rng.integer(0, 1);
      const double x = k == 0      ? 0.0
                       : lane == 0 ? rng.uniform(-10.0, cw.x - 8.0)
                                   : rng.uniform(cw.x + 8.0, cw.x + 45.0);
      SimAgent a = vehicle_on(w, lane, s_at_x(w.paths[lane], x),
                              rng.uniform(spec.min_speed, spec.max_speed));
      if (!clear_of(w, a.state, 12.0)) continue;
      if (k == 0) a.kind = AgentKind::kEgo;
      w.agents.push_back(a);
      break;
    }
  }
  const std::size_t peds = rng.integer(1, 2);
  for (std::size_t k = 0; k < peds; ++k) {
    const double side = rng.chance(0.5) ? 1.0 : -1.0;
    SimAgent p;
    p.kind = AgentKind::kPedestrian;
    p.state = {cw.x + rng.uniform(-1.2, 1.2), side * rng.uniform(4.0, 8.0), wrap_angle(-side * kPi / 2.0),
               rng.uniform(1.0, 1.8)};
    w.agents.push_back(p);
  }
  return w;
}

World intersection(const ScenarioSpec& spec, Rng& rng) {
  World w;
  constexpr double kExtent = 80.0;
  constexpr double kBox = 12.0;
  // Canonical eastbound approach; routes straight, left, right.
  const Point2 start{-kExtent, -1.75};
  const double left_r = 10.0, right_r = 8.0;
  const std::vector<Path> canonical = {
      PathBuilder(start, 0.0).straight(2.0 * kExtent).build(),
      PathBuilder(start, 0.0)
          .straight(kExtent + 1.75 - left_r)
          .arc(left_r, kPi / 2.0)
          .straight(kExtent - (left_r - 1.75))
          .build(),
      PathBuilder(start, 0.0)
          .straight(kExtent - 1.75 - right_r)
          .arc(right_r, -kPi / 2.0)
          .straight(kExtent - (right_r + 1.75))
          .build(),
  };
  for (int a = 0; a < 4; ++a) {
    for (const Path& p : canonical) {
      w.paths.push_back(rotate(p, a * kPi / 2.0));
      w.map.lanes.push_back(to_lane(w.paths.back()));
    }
  }
  w.map.drivable = {rect(-kExtent, -3.5, kExtent, 3.5), rect(-3.5, -kExtent, 3.5, kExtent),
                    rect(-kBox, -kBox, kBox, kBox)};

  const std::size_t n = rng.integer(spec.min_agents, spec.max_agents);
  for (std::size_t k = 0; k < n; ++k) {
    for (int attempt = 0; attempt < 50; ++attempt) {
      const std::size_t approach = k == 0 ? 0 : rng.integer(0, 3);
      const std::size_t route = rng.integer(0, 2);
      const std::size_t path = approach * 3 + route;
      const double before_box = k == 0 ? rng.uniform(0.0, 30.0) : rng.uniform(-6.0, 35.0);
      const double s = kExtent - kBox - before_box;
      const Projection at = project(w.paths[path], pose_at(w.paths[path], s).x,
                                    pose_at(w.paths[path], s).y);
      double v = rng.uniform(spec.min_speed, spec.max_speed);
      const double kappa = std::abs(w.paths[path].kappa[at.index]);
      if (kappa > 1e-3) v = std::min(v, std::min(0.45 / kappa, std::sqrt(2.5 / kappa)));
      SimAgent a = vehicle_on(w, path, s, v);
      a.v_des = std::max(v, rng.uniform(spec.min_speed, spec.max_speed));
      if (!clear_of(w, a.state, 10.0)) continue;
      if (k == 0) a.kind = AgentKind::kEgo;
      w.agents.push_back(a);
      break;
    }
  }
  return w;
}

}  // namespace

std::string to_string(ScenarioKind kind) {
  switch (kind) {
    case ScenarioKind::kCarFollowing: return "car_following";
    case ScenarioKind::kIntersection: return "intersection";
    case ScenarioKind::kLaneChange: return "lane_change";
    case ScenarioKind::kParkedMerge: return "parked_merge";
    case ScenarioKind::kPedestrianCross: return "pedestrian_cross";
  }
  throw std::invalid_argument("unknown scenario kind");
}

ScenarioKind scenario_kind_from_string(const std::string& name) {
  for (const ScenarioKind k : {ScenarioKind::kCarFollowing, ScenarioKind::kIntersection,
                               ScenarioKind::kLaneChange, ScenarioKind::kParkedMerge,
                               ScenarioKind::kPedestrianCross}) {
    if (to_string(k) == name) return k;
  }
  throw std::invalid_argument("unknown scenario kind '" + name +
                              "' (expected car_following, intersection, lane_change, "
                              "parked_merge or pedestrian_cross)");
}

void ScenarioSpec::validate() const {
  if (steps < 2) throw std::invalid_argument("scenario steps must be >= 2");
  if (min_agents < 1 || min_agents > max_agents) {
    throw std::invalid_argument("scenario agent range must satisfy 1 <= min <= max");
  }
  if (!(min_speed >= 0.0) || !(max_speed <= kMaxScenarioSpeed) || min_speed > max_speed) {
    throw std::invalid_argument("scenario speed range [" + std::to_string(min_speed) + ", " +
                                std::to_string(max_speed) + "] is outside the reachable [0, " +
                                std::to_string(kMaxScenarioSpeed) + "] m/s envelope");
  }
}

SceneSequence generate_scene(const ScenarioSpec& spec, std::uint64_t seed, const std::string& id) {
  spec.validate();
  Rng rng(seed);
  World w;
  switch (spec.kind) {
    case ScenarioKind::kCarFollowing: w = car_following(spec, rng); break;
    case ScenarioKind::kIntersection: w = intersection(spec, rng); break;
    case ScenarioKind::kLaneChange: w = lane_change(spec, rng); break;
    case ScenarioKind::kParkedMerge: w = parked_merge(spec, rng); break;
    case ScenarioKind::kPedestrianCross: w = pedestrian_cross(spec, rng); break;
  }
  assign_ids(w);
  return simulate(w, spec, id);
}

std::vector<SceneSequence> generate_corpus(const std::vector<ScenarioSpec>& specs,
                                           std::size_t n_sequences, std::uint64_t seed) {
  if (n_sequences == 0) throw std::invalid_argument("generate_corpus: n_sequences must be >= 1");
  if (specs.empty()) throw std::invalid_argument("generate_corpus: no scenario specs");
  for (const ScenarioSpec& s : specs) s.validate();
  std::vector<SceneSequence> out;
  out.reserve(n_sequences);
  for (std::size_t i = 0; i < n_sequences; ++i) {
    const ScenarioSpec& spec = specs[i % specs.size()];
    char id[64];
    std::snprintf(id, sizeof id, "%s-%05zu", to_string(spec.kind).c_str(), i);
    out.push_back(generate_scene(spec, derive_seed(seed, i), id));
  }
  return out;
}

std::vector<ScenarioSpec> default_scenario_mix(std::size_t steps) {
  std::vector<ScenarioSpec> mix;
  for (const ScenarioKind k : {ScenarioKind::kCarFollowing, ScenarioKind::kIntersection,
                               ScenarioKind::kLaneChange, ScenarioKind::kParkedMerge,
                               ScenarioKind::kPedestrianCross}) {
    ScenarioSpec s;
    s.kind = k;
    s.steps = steps;
    mix.push_back(s);
  }
  return mix;
}

}  // namespace rtgnn
