#pragma once

#include <array>
#include <optional>
#include <vector>

#include <Eigen/Dense>

namespace psda {

using Cell = std::array<int, 2>;

/// Square occupancy grid over [0, extent]^2 with unit-free cell size.
struct Grid {
  double extent = 50.0;
  double cell_size = 1.0;
  /// Row-major blocked flags (empty means obstacle-free).
  std::vector<bool> blocked;

  int cells_per_side() const;
  bool inside(const Cell& c) const;
  bool free(const Cell& c) const;
  Cell cell_of(const Eigen::Vector2d& p) const;
  Eigen::Vector2d center(const Cell& c) const;
};

/// Octile distance in cells.
double octile(const Cell& a, const Cell& b);

/// 8-connected A* with the octile heuristic. The returned path excludes the
/// start cell and ends at the goal; it is empty when start == goal and nullopt
/// when the goal is unreachable.
std::optional<std::vector<Cell>> astar(const Grid& grid, const Cell& start, const Cell& goal);

}  // namespace psda
