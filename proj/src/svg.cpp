#include "rtgnn/svg.hpp"

#include <algorithm>
#include <cstdio>
#include <limits>
#include <sstream>

namespace rtgnn {
namespace {

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

std::string escape(const std::string& text) {
  std::string out;
  for (const char c : text) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

struct Bounds {
  double x0 = std::numeric_limits<double>::infinity();
  double y0 = std::numeric_limits<double>::infinity();
  double x1 = -std::numeric_limits<double>::infinity();
  double y1 = -std::numeric_limits<double>::infinity();

  void add(const Point2& p) {
    x0 = std::min(x0, p.x);
    y0 = std::min(y0, p.y);
    x1 = std::max(x1, p.x);
    y1 = std::max(y1, p.y);
  }
  bool empty() const { return x0 > x1; }
};

std::string points(const std::vector<Point2>& pts) {
  std::string out;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    if (i > 0) out += ' ';
    out += num(pts[i].x) + "," + num(pts[i].y);
  }
  return out;
}

}  // namespace

std::string render_svg(const SceneSequence& scene, const ScenePrediction& prediction,
                       const SvgStyle& style) {
  const SceneStep* start =
      prediction.t0 < scene.steps.size() ? &scene.steps[prediction.t0] : nullptr;
  const auto origin = [&](std::int64_t id) -> std::optional<Point2> {
    if (start == nullptr) return std::nullopt;
    const AgentState* a = start->find(id);
    if (a == nullptr) return std::nullopt;
    return Point2{a->state.x, a->state.y};
  };

  struct Trace {
    std::string method;
    std::string color;
    const Trajectory* trajectory;
  };
  std::vector<Trace> layers;
  for (const Trajectory& t : prediction.samples) layers.push_back({"sample", style.sample_color, &t});
  layers.push_back({"const_vel", style.const_vel_color, &prediction.const_vel});
  layers.push_back({"truth", style.truth_color, &prediction.truth});
  layers.push_back({"ml", style.ml_color, &prediction.ml});

  Bounds box;
  for (const Trace& layer : layers) {
    for (std::size_t k = 0; k < layer.trajectory->agent_ids.size(); ++k) {
      if (const auto o = origin(layer.trajectory->agent_ids[k])) box.add(*o);
      for (const Point2& p : layer.trajectory->waypoints[k]) box.add(p);
    }
  }
  if (box.empty()) {
    for (const Polygon& poly : scene.map.drivable) {
      for (const Point2& p : poly) box.add(p);
    }
    for (const Lane& lane : scene.map.lanes) {
      for (const Point2& p : lane.points) box.add(p);
    }
  }
  if (box.empty()) box.add({0.0, 0.0});
  box.x0 -= style.margin;
  box.y0 -= style.margin;
  box.x1 += style.margin;
  box.y1 += style.margin;
  const double w = box.x1 - box.x0;
  const double h = box.y1 - box.y0;

  std::ostringstream out;
  out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(w * style.pixels_per_meter)
      << "\" height=\"" << num(h * style.pixels_per_meter) << "\" viewBox=\"" << num(box.x0)
      << ' ' << num(-box.y1) << ' ' << num(w) << ' ' << num(h) << "\">\n"
      << "<title>" << escape(scene.id) << "</title>\n"
      << "<rect x=\"" << num(box.x0) << "\" y=\"" << num(-box.y1) << "\" width=\"" << num(w)
      << "\" height=\"" << num(h) << "\" fill=\"#ffffff\"/>\n"
      // World y points up; SVG y points down.
      << "<g transform=\"scale(1,-1)\">\n"
      << "<g class=\"map\">\n";
  for (const Polygon& poly : scene.map.drivable) {
    out << "<polygon points=\"" << points(poly) << "\" fill=\"#e6e6e6\" stroke=\"none\"/>\n";
  }
  for (const Lane& lane : scene.map.lanes) {
    out << "<polyline points=\"" << points(lane.points)
        << "\" fill=\"none\" stroke=\"#c8c8c8\" stroke-width=\"0.15\" stroke-dasharray=\"1 1\"/>\n";
  }
  out << "</g>\n";
  for (const Trace& layer : layers) {
    const Trajectory& t = *layer.trajectory;
    for (std::size_t k = 0; k < t.agent_ids.size(); ++k) {
      std::vector<Point2> pts;
      if (const auto o = origin(t.agent_ids[k])) pts.push_back(*o);
      pts.insert(pts.end(), t.waypoints[k].begin(), t.waypoints[k].end());
      out << "<g class=\"trace\" data-agent=\"" << t.agent_ids[k] << "\" data-method=\""
          << layer.method << "\"><polyline points=\"" << points(pts)
          << "\" fill=\"none\" stroke=\"" << layer.color << "\" stroke-width=\""
          << num(style.line_width) << "\" stroke-linejoin=\"round\"/></g>\n";
    }
  }
  if (start != nullptr) {
    out << "<g class=\"agents\">\n";
    for (const AgentState& a : start->agents) {
      const char* fill = a.kind == AgentKind::kEgo          ? "#d62828"
                         : a.kind == AgentKind::kPedestrian ? "#f4a261"
                                                            : "#333333";
      out << "<circle cx=\"" << num(a.state.x) << "\" cy=\"" << num(a.state.y)
          << "\" r=\"0.8\" fill=\"" << fill << "\"/>\n";
    }
    out << "</g>\n";
  }
  out << "</g>\n</svg>\n";
  return out.str();
}

}  // namespace rtgnn
