#pragma once

#include <string>

#include "rtgnn/rollout.hpp"
#include "rtgnn/scene.hpp"

namespace rtgnn {

struct SvgStyle {
  double pixels_per_meter = 8.0;
  double margin = 12.0;  // m around the trajectories
  double line_width = 0.25;  // m
  std::string truth_color = "#7b2cbf";      // purple
  std::string const_vel_color = "#2a9d3f";  // green
  std::string ml_color = "#1f5fd1";         // blue
  std::string sample_color = "#9a9a9a";     // gray
};

// Map beneath, then one <g class="trace"> per (agent, method): samples, the
// constant-velocity baseline, truth and the max-likelihood rollout. Each trace
// starts at the agent's position at prediction.t0. With no trajectories the
// view covers the whole map. Output depends only on the inputs.
std::string render_svg(const SceneSequence& scene, const ScenePrediction& prediction,
                       const SvgStyle& style = {});

}  // namespace rtgnn
