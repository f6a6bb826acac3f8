#pragma once

#include <array>
#include <memory>
#include <vector>

#include "flowcast/autodiff.hpp"

namespace flowcast {

struct RopeConfig {
  int head_dim = 32;
  double base = 10000.0;
  // (time, lat, lon) sub-dimensions for the 3-D variant.
  std::array<int, 3> axis_split{16, 8, 8};

  void validate() const;
  /// half time, quarter lat, quarter lon
  static std::array<int, 3> default_split(int head_dim);
};

/// Per-row rotation angles for one head; the same rotation is applied to
/// every head of a [n, n_heads * head_dim] matrix. Pair i is the adjacent
/// columns (2i, 2i+1).
struct RotaryPlan {
  int head_dim = 0;
  Matrix cos;  // [n, head_dim / 2]
  Matrix sin;
};

RotaryPlan rope1d_plan(const std::vector<int>& positions, const RopeConfig& config);
RotaryPlan rope3d_plan(const std::vector<int>& time_pos, const std::vector<int>& lat_pos,
                       const std::vector<int>& lon_pos, const RopeConfig& config);

/// Rotates every head of `x`; `inverse` applies the transpose rotation.
Matrix apply_rotary(const Matrix& x, const RotaryPlan& plan, bool inverse = false);

/// Single-head convenience forms.
Matrix rope_rotate(const Matrix& vectors, const std::vector<int>& positions, const RopeConfig& config);
Matrix rope3d_rotate(const Matrix& vectors, const std::vector<int>& time_pos, const std::vector<int>& lat_pos,
                     const std::vector<int>& lon_pos, const RopeConfig& config);

namespace ad {
Var rotary(Var x, std::shared_ptr<const RotaryPlan> plan);
/// tokens [T*S, d] in time-major order plus table [S, d]: row s of the table
/// is added to the token at slot s of every frame.
Var apply_spatial_embed(Var tokens, Var table);
}  // namespace ad

}  // namespace flowcast
