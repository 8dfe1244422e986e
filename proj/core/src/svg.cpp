#include "mate/svg.hpp"

#include <algorithm>
#include <cstdio>
#include <limits>

#include "mate/errors.hpp"

namespace mate {

namespace {

constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                                    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

std::string escape(const std::string& text) {
  std::string out;
  for (char c : text) {
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

}  // namespace

std::string trajectory_svg(const Tensor& positions, std::size_t t_obs, const std::optional<Tensor>& prediction,
                           const SvgOptions& opt) {
  if (positions.rank() != 3 || positions.dim(2) != 2 || positions.dim(0) == 0) {
    throw ShapeError("svg: expected [T][N][2] positions, got " + shape_str(positions.shape()));
  }
  const std::size_t steps = positions.dim(0), n = positions.dim(1);
  t_obs = std::clamp<std::size_t>(t_obs, 1, steps);
  if (prediction && (prediction->rank() != 3 || prediction->dim(1) != n || prediction->dim(2) != 2)) {
    throw ShapeError("svg: prediction " + shape_str(prediction->shape()) + " does not match the episode");
  }

  double lo[2] = {std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity()};
  double hi[2] = {-lo[0], -lo[1]};
  auto extend = [&](const Tensor& t) {
    for (std::size_t r = 0; r < t.size() / 2; ++r)
      for (int c = 0; c < 2; ++c) {
        lo[c] = std::min(lo[c], t[2 * r + c]);
        hi[c] = std::max(hi[c], t[2 * r + c]);
      }
  };
  extend(positions);
  if (prediction && prediction->size() > 0) extend(*prediction);
  const double span = std::max({hi[0] - lo[0], hi[1] - lo[1], 1e-9});
  const double scale = std::min(opt.width, opt.height) - 2.0 * opt.margin;
  auto px = [&](double x) { return num(opt.margin + (x - lo[0]) / span * scale); };
  auto py = [&](double y) { return num(opt.height - opt.margin - (y - lo[1]) / span * scale); };
  auto point = [&](double x, double y) { return px(x) + "," + py(y); };

  std::string s;
  s += "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  s += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(opt.width) + "\" height=\"" + num(opt.height) +
       "\" viewBox=\"0 0 " + num(opt.width) + " " + num(opt.height) + "\">\n";
  s += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  if (!opt.title.empty()) {
    s += "<text x=\"" + num(opt.margin) + "\" y=\"" + num(opt.margin * 0.6) +
         "\" font-family=\"sans-serif\" font-size=\"14\">" + escape(opt.title) + "</text>\n";
  }
  for (std::size_t i = 0; i < n; ++i) {
    const std::string colour = kPalette[i % std::size(kPalette)];
    s += "<g class=\"agent\" id=\"agent-" + std::to_string(i) + "\">\n";
    std::string pts;
    for (std::size_t t = 0; t < t_obs; ++t) pts += (t ? " " : "") + point(positions(t, i, 0), positions(t, i, 1));
    s += "<polyline class=\"observed\" fill=\"none\" stroke=\"" + colour + "\" stroke-width=\"2\" points=\"" + pts +
         "\"/>\n";
    if (steps > t_obs) {
      pts.clear();
      for (std::size_t t = t_obs - 1; t < steps; ++t)
        pts += (t + 1 > t_obs ? " " : "") + point(positions(t, i, 0), positions(t, i, 1));
      s += "<polyline class=\"truth\" fill=\"none\" stroke=\"#444444\" stroke-width=\"1.5\" "
           "stroke-dasharray=\"5,4\" points=\"" + pts + "\"/>\n";
    }
    if (prediction && prediction->dim(0) > 0) {
      pts = point(positions(t_obs - 1, i, 0), positions(t_obs - 1, i, 1));
      for (std::size_t t = 0; t < prediction->dim(0); ++t)
        pts += " " + point((*prediction)(t, i, 0), (*prediction)(t, i, 1));
      s += "<polyline class=\"prediction\" fill=\"none\" stroke=\"" + colour +
           "\" stroke-width=\"2\" stroke-opacity=\"0.6\" points=\"" + pts + "\"/>\n";
    }
    s += "<circle cx=\"" + px(positions(t_obs - 1, i, 0)) + "\" cy=\"" + py(positions(t_obs - 1, i, 1)) +
         "\" r=\"3\" fill=\"" + colour + "\"/>\n";
    s += "</g>\n";
  }
  const double ly = opt.height - opt.margin * 0.35;
  double lx = opt.margin;
  auto legend = [&](const std::string& label, const std::string& style) {
    s += "<line x1=\"" + num(lx) + "\" y1=\"" + num(ly) + "\" x2=\"" + num(lx + 24) + "\" y2=\"" + num(ly) + "\" " +
         style + "/>\n";
    s += "<text x=\"" + num(lx + 30) + "\" y=\"" + num(ly + 4) + "\" font-family=\"sans-serif\" font-size=\"12\">" +
         label + "</text>\n";
    lx += 150;
  };
  s += "<g class=\"legend\">\n";
  legend("observed", "stroke=\"#1f77b4\" stroke-width=\"2\"");
  legend("ground truth", "stroke=\"#444444\" stroke-width=\"1.5\" stroke-dasharray=\"5,4\"");
  legend("prediction", "stroke=\"#1f77b4\" stroke-width=\"2\" stroke-opacity=\"0.6\"");
  s += "</g>\n</svg>\n";
  return s;
}

}  // namespace mate
