#include "vamamba/path_planner.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "vamamba/error.hpp"

namespace vamamba {

ScanPath ScanPath::from_forward(std::vector<std::size_t> forward, std::size_t grid) {
  ScanPath p;
  p.backward.assign(forward.rbegin(), forward.rend());
  p.forward = std::move(forward);
  p.grid = grid;
  return p;
}

std::vector<std::size_t> neighbors(std::size_t k, std::size_t grid) {
  if (k >= grid * grid) {
    throw ShapeError("patch index " + std::to_string(k) + " out of range for grid " +
                     std::to_string(grid));
  }
  const std::size_t r = k / grid, c = k % grid;
  std::vector<std::size_t> out;
  if (r > 0) out.push_back(k - grid);
  if (c > 0) out.push_back(k - 1);
  if (c + 1 < grid) out.push_back(k + 1);
  if (r + 1 < grid) out.push_back(k + grid);
  return out;
}

namespace {

// Highest probability among candidates; first (lowest index) wins ties as
// long as candidates arrive in ascending order.
template <typename Range, typename Pred>
std::size_t best_of(const Range& candidates, std::span<const double> probs, Pred usable,
                    bool& found) {
  std::size_t best = 0;
  found = false;
  for (std::size_t k : candidates) {
    if (!usable(k)) continue;
    if (!found || probs[k] > probs[best]) {
      best = k;
      found = true;
    }
  }
  return best;
}

}  // namespace

ScanPath plan_path(std::span<const double> probs, std::size_t grid) {
  const std::size_t n = grid * grid;
  if (n == 0 || probs.size() != n) {
    throw ShapeError("plan_path: expected " + std::to_string(n) + " scores, got " +
                     std::to_string(probs.size()));
  }
  std::vector<std::size_t> all(n);
  for (std::size_t k = 0; k < n; ++k) all[k] = k;
  std::vector<bool> visited(n, false);
  auto unvisited = [&](std::size_t k) { return !visited[k]; };

  std::vector<std::size_t> forward;
  forward.reserve(n);
  bool found = false;
  std::size_t current = best_of(all, probs, unvisited, found);
  while (forward.size() < n) {
    forward.push_back(current);
    visited[current] = true;
    std::size_t next = best_of(neighbors(current, grid), probs, unvisited, found);
    if (!found) {
      next = best_of(all, probs, unvisited, found);
      if (!found) break;
    }
    current = next;
  }
  return ScanPath::from_forward(std::move(forward), grid);
}

std::vector<PathViolation> validate_path(const ScanPath& path, std::span<const double> probs) {
  std::vector<PathViolation> out;
  const std::size_t g = path.grid;
  const std::size_t n = g * g;
  if (path.forward.size() != n || probs.size() != n || path.backward.size() != n) {
    out.push_back({PathViolation::Kind::length, 0,
                   "expected " + std::to_string(n) + " entries in forward/backward/probs"});
    return out;
  }

  std::vector<int> count(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t k = path.forward[i];
    if (k >= n) {
      out.push_back({PathViolation::Kind::permutation, i, "index out of range"});
    } else if (++count[k] > 1) {
      out.push_back({PathViolation::Kind::permutation, i,
                     "patch " + std::to_string(k) + " visited twice"});
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (path.backward[i] != path.forward[n - 1 - i]) {
      out.push_back({PathViolation::Kind::reverse, i, "backward is not reverse(forward)"});
      break;
    }
  }
  if (!out.empty()) return out;

  // Rank every patch by (prob desc, index asc); a choice is greedy iff no
  // eligible candidate has a better rank.
  std::vector<std::size_t> order(n);
  for (std::size_t k = 0; k < n; ++k) order[k] = k;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return probs[a] > probs[b]; });
  std::vector<std::size_t> rank(n);
  for (std::size_t r = 0; r < n; ++r) rank[order[r]] = r;

  if (rank[path.forward[0]] != 0) {
    out.push_back({PathViolation::Kind::start, 0, "path does not start at the global argmax"});
  }
  std::vector<bool> seen(n, false);
  seen[path.forward[0]] = true;
  for (std::size_t i = 1; i < n; ++i) {
    const std::size_t prev = path.forward[i - 1];
    const std::size_t pr = prev / g, pc = prev % g;
    std::vector<std::size_t> open;
    const long dr[4] = {-1, 1, 0, 0}, dc[4] = {0, 0, -1, 1};
    for (int d = 0; d < 4; ++d) {
      const long r = static_cast<long>(pr) + dr[d], c = static_cast<long>(pc) + dc[d];
      if (r < 0 || c < 0 || r >= static_cast<long>(g) || c >= static_cast<long>(g)) continue;
      const std::size_t k = static_cast<std::size_t>(r) * g + static_cast<std::size_t>(c);
      if (!seen[k]) open.push_back(k);
    }
    if (open.empty()) {
      for (std::size_t k = 0; k < n; ++k)
        if (!seen[k]) open.push_back(k);
    }
    std::size_t expected = open.front();
    for (std::size_t k : open)
      if (rank[k] < rank[expected]) expected = k;
    const std::size_t actual = path.forward[i];
    if (actual != expected) {
      out.push_back({PathViolation::Kind::greedy, i,
                     "step " + std::to_string(i) + " chose " + std::to_string(actual) +
                         " but greedy choice is " + std::to_string(expected)});
    }
    seen[actual] = true;
  }
  return out;
}

std::vector<std::size_t> raster_order(std::size_t grid) {
  std::vector<std::size_t> order(grid * grid);
  for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
  return order;
}

std::vector<std::size_t> snake_order(std::size_t grid) {
  std::vector<std::size_t> order;
  order.reserve(grid * grid);
  for (std::size_t r = 0; r < grid; ++r) {
    for (std::size_t c = 0; c < grid; ++c) {
      order.push_back(r * grid + (r % 2 == 0 ? c : grid - 1 - c));
    }
  }
  return order;
}

std::vector<std::size_t> column_order(std::size_t grid) {
  std::vector<std::size_t> order;
  order.reserve(grid * grid);
  for (std::size_t c = 0; c < grid; ++c)
    for (std::size_t r = 0; r < grid; ++r) order.push_back(r * grid + c);
  return order;
}

std::string path_to_text(std::span<const std::size_t> order) {
  std::string text;
  for (std::size_t i = 0; i < order.size(); ++i) {
    if (i) text += ' ';
    text += std::to_string(order[i]);
  }
  text += '\n';
  return text;
}

std::vector<std::size_t> path_from_text(const std::string& text) {
  std::istringstream is(text);
  std::vector<std::size_t> order;
  std::string token;
  while (is >> token) {
    std::size_t consumed = 0;
    unsigned long long v = 0;
    try {
      v = std::stoull(token, &consumed);
    } catch (const std::exception&) {
      consumed = 0;
    }
    if (consumed != token.size() || token.front() == '-') {
      throw IoError("malformed path entry '" + token + "'");
    }
    order.push_back(static_cast<std::size_t>(v));
  }
  return order;
}

std::string path_to_svg(const ScanPath& path, std::span<const double> probs,
                        const SvgStyle& style) {
  const std::size_t g = path.grid;
  const double cell = style.cell;
  const double side = cell * static_cast<double>(g);
  char buf[256];
  std::string svg;
  std::snprintf(buf, sizeof buf,
                "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%.1f\" height=\"%.1f\" "
                "viewBox=\"0 0 %.1f %.1f\">\n",
                side, side, side, side);
  svg += buf;

  double lo = 0.0, hi = 0.0;
  if (!probs.empty()) {
    lo = *std::min_element(probs.begin(), probs.end());
    hi = *std::max_element(probs.begin(), probs.end());
  }
  for (std::size_t k = 0; k < g * g; ++k) {
    const double x = cell * static_cast<double>(k % g), y = cell * static_cast<double>(k / g);
    int shade = 255;
    if (style.shade_scores && probs.size() == g * g && hi > lo) {
      shade = 255 - static_cast<int>(std::lround(120.0 * (probs[k] - lo) / (hi - lo)));
    }
    std::snprintf(buf, sizeof buf,
                  "  <rect x=\"%.1f\" y=\"%.1f\" width=\"%.1f\" height=\"%.1f\" "
                  "fill=\"rgb(255,%d,%d)\" stroke=\"#444\" stroke-width=\"1\"/>\n",
                  x, y, cell, cell, shade, shade);
    svg += buf;
  }

  svg += "  <polyline fill=\"none\" stroke=\"#1f5fbf\" stroke-width=\"2\" points=\"";
  for (std::size_t i = 0; i < path.forward.size(); ++i) {
    const std::size_t k = path.forward[i];
    std::snprintf(buf, sizeof buf, "%s%.1f,%.1f", i ? " " : "",
                  cell * (static_cast<double>(k % g) + 0.5),
                  cell * (static_cast<double>(k / g) + 0.5));
    svg += buf;
  }
  svg += "\"/>\n";

  for (std::size_t i = 0; i < path.forward.size(); ++i) {
    const std::size_t k = path.forward[i];
    const double cx = cell * (static_cast<double>(k % g) + 0.5);
    const double cy = cell * (static_cast<double>(k / g) + 0.5);
    std::snprintf(buf, sizeof buf,
                  "  <circle cx=\"%.1f\" cy=\"%.1f\" r=\"%.1f\" fill=\"%s\"/>\n"
                  "  <text x=\"%.1f\" y=\"%.1f\" font-family=\"monospace\" font-size=\"%.1f\" "
                  "text-anchor=\"middle\" dominant-baseline=\"central\" fill=\"#fff\">%zu</text>\n",
                  cx, cy, cell * 0.22, i == 0 ? "#c0392b" : "#1f5fbf", cx, cy, cell * 0.22,
                  i);
    svg += buf;
  }
  svg += "</svg>\n";
  return svg;
}

}  // namespace vamamba
