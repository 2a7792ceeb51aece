#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include "vp/voxel_world.hpp"

namespace vp {

struct VoxelPath {
  std::vector<VoxelIndex> voxels;  // start .. goal, consecutive entries are 26-neighbours
  double cost = 0.0;               // metres
};

struct AStarStats {
  std::size_t expanded = 0;
  double max_expanded_f = 0.0;
};

// Reusable scratch buffers for repeated searches on one grid. Not thread-safe;
// keep one per episode worker.
class AStarPlanner {
 public:
  explicit AStarPlanner(const VoxelGrid& grid);

  // Cost-optimal 26-connected path with Euclidean edge costs. A diagonal move is only
  // taken when every cell it sweeps past (face and edge neighbours) is free, so paths
  // never squeeze through the shared edge of two buildings. nullopt when the goal is
  // unreachable. Start and goal must be free and in bounds.
  std::optional<VoxelPath> plan(const VoxelIndex& start, const VoxelIndex& goal, AStarStats* stats = nullptr);

  [[nodiscard]] const VoxelGrid& grid() const { return *grid_; }

 private:
  const VoxelGrid* grid_;
  std::vector<double> g_;
  std::vector<std::int32_t> parent_;
  std::vector<std::uint32_t> seen_stamp_;
  std::vector<std::uint32_t> closed_stamp_;
  std::uint32_t stamp_ = 0;
  std::array<std::ptrdiff_t, 26> step_flat_{};
  std::array<std::array<std::ptrdiff_t, 6>, 26> swept_flat_{};
};

// Metres along a 26-connected voxel chain.
double path_cost(const std::vector<VoxelIndex>& voxels, double voxel_size);

std::optional<VoxelPath> plan_astar(const VoxelGrid& grid, const VoxelIndex& start, const VoxelIndex& goal,
                                    AStarStats* stats = nullptr);

inline constexpr double kDefaultLookahead = 12.0;

// Unit world-frame vector toward the first waypoint at arc length >= lookahead past the
// agent's nearest point on the path, pulled back toward the agent while the straight line to
// it is blocked; zero within half a voxel of the final waypoint.
Vec3 guidance_from_path(const VoxelGrid& grid, const VoxelPath& path, const Vec3& agent_pos,
                        double lookahead = kDefaultLookahead);

struct ReplanRule {
  int max_age_steps = 10;
  double evader_shift = 12.0;  // m
};

bool replan_policy(long step, long last_plan_step, double evader_moved, const ReplanRule& rule = {});

}  // namespace vp
