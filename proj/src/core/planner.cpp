#include "psda/planner.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>
#include <tuple>

#include "psda/error.hpp"

namespace psda {

int Grid::cells_per_side() const { return static_cast<int>(std::ceil(extent / cell_size - 1e-9)); }

bool Grid::inside(const Cell& c) const {
  const int n = cells_per_side();
  return c[0] >= 0 && c[1] >= 0 && c[0] < n && c[1] < n;
}

bool Grid::free(const Cell& c) const {
  if (!inside(c)) return false;
  if (blocked.empty()) return true;
  return !blocked[static_cast<std::size_t>(c[1] * cells_per_side() + c[0])];
}

Cell Grid::cell_of(const Eigen::Vector2d& p) const {
  const int n = cells_per_side();
  auto clampi = [n](double v) { return std::clamp(static_cast<int>(std::floor(v)), 0, n - 1); };
  return {clampi(p.x() / cell_size), clampi(p.y() / cell_size)};
}

Eigen::Vector2d Grid::center(const Cell& c) const { return {(c[0] + 0.5) * cell_size, (c[1] + 0.5) * cell_size}; }

double octile(const Cell& a, const Cell& b) {
  const double dx = std::abs(a[0] - b[0]);
  const double dy = std::abs(a[1] - b[1]);
  return std::max(dx, dy) + (std::sqrt(2.0) - 1.0) * std::min(dx, dy);
}

std::optional<std::vector<Cell>> astar(const Grid& grid, const Cell& start, const Cell& goal) {
  if (!grid.inside(start) || !grid.inside(goal)) fail(ErrorCode::kInvalidArgument, "astar: cell outside grid");
  if (start == goal) return std::vector<Cell>{};
  if (!grid.free(goal)) return std::nullopt;

  const int n = grid.cells_per_side();
  auto index = [n](const Cell& c) { return static_cast<std::size_t>(c[1] * n + c[0]); };
  const std::size_t total = static_cast<std::size_t>(n) * static_cast<std::size_t>(n);
  std::vector<double> g(total, std::numeric_limits<double>::infinity());
  std::vector<std::ptrdiff_t> parent(total, -1);
  std::vector<bool> closed(total, false);

  // (f, h, insertion order, cell index); insertion order makes tie-breaking deterministic.
  using Entry = std::tuple<double, double, std::uint64_t, std::size_t>;
  std::priority_queue<Entry, std::vector<Entry>, std::greater<>> open;
  std::uint64_t order = 0;
  g[index(start)] = 0.0;
  open.emplace(octile(start, goal), octile(start, goal), order++, index(start));

  static constexpr int kDx[8] = {1, -1, 0, 0, 1, 1, -1, -1};
  static constexpr int kDy[8] = {0, 0, 1, -1, 1, -1, 1, -1};
  while (!open.empty()) {
    const auto [f, h, ord, idx] = open.top();
    open.pop();
    if (closed[idx]) continue;
    closed[idx] = true;
    const Cell cur{static_cast<int>(idx % n), static_cast<int>(idx / n)};
    if (cur == goal) break;
    for (int d = 0; d < 8; ++d) {
      const Cell nb{cur[0] + kDx[d], cur[1] + kDy[d]};
      if (!grid.free(nb)) continue;
      // No corner cutting past blocked cells.
      if (kDx[d] != 0 && kDy[d] != 0 && (!grid.free({cur[0] + kDx[d], cur[1]}) || !grid.free({cur[0], cur[1] + kDy[d]}))) continue;
      const std::size_t ni = index(nb);
      if (closed[ni]) continue;
      const double cand = g[idx] + ((kDx[d] != 0 && kDy[d] != 0) ? std::sqrt(2.0) : 1.0);
      if (cand < g[ni] - 1e-12) {
        g[ni] = cand;
        parent[ni] = static_cast<std::ptrdiff_t>(idx);
        const double hn = octile(nb, goal);
        open.emplace(cand + hn, hn, order++, ni);
      }
    }
  }
  if (!closed[index(goal)]) return std::nullopt;

  std::vector<Cell> path;
  for (std::ptrdiff_t i = static_cast<std::ptrdiff_t>(index(goal)); i != static_cast<std::ptrdiff_t>(index(start)); i = parent[static_cast<std::size_t>(i)]) {
    path.push_back({static_cast<int>(i % n), static_cast<int>(i / n)});
  }
  std::reverse(path.begin(), path.end());
  return path;
}

}  // namespace psda
