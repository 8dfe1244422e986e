#pragma once

#include <optional>
#include <string>

#include "mate/tensor.hpp"

namespace mate {

struct SvgOptions {
  double width = 640.0;
  double height = 640.0;
  double margin = 40.0;
  std::string title;
};

/// Standalone SVG of one scene: observed steps solid, ground-truth future
/// dashed, prediction in the agent's colour. One <g class="agent"> per agent.
/// positions: [T][N][2]; prediction: [t_pred][N][2] following step t_obs-1.
std::string trajectory_svg(const Tensor& positions, std::size_t t_obs, const std::optional<Tensor>& prediction,
                           const SvgOptions& options = {});

}  // namespace mate
