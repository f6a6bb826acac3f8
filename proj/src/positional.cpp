#include "flowcast/positional.hpp"

#include <cmath>

#include "flowcast/errors.hpp"

namespace flowcast {

void RopeConfig::validate() const {
  if (head_dim <= 0 || head_dim % 2 != 0) throw ConfigError("rope head_dim must be even and positive");
  if (!(base > 1.0)) throw ConfigError("rope base must exceed 1");
  int sum = 0;
  for (int s : axis_split) {
    if (s < 0 || s % 2 != 0) throw ConfigError("rope axis_split entries must be even");
    sum += s;
  }
  if (sum != head_dim) throw ConfigError("rope axis_split must sum to head_dim");
}

std::array<int, 3> RopeConfig::default_split(int head_dim) {
  // quarter blocks rounded down to even sizes, the rest goes to time
  const int q = (head_dim / 4) & ~1;
  return {head_dim - 2 * q, q, q};
}

namespace {

// Fills pair columns [first_pair, first_pair + sub_dim/2) with the rotation
// for one axis; frequencies restart inside every sub-block.
void fill_axis(RotaryPlan& plan, const std::vector<int>& pos, int first_pair, int sub_dim, double base) {
  const int pairs = sub_dim / 2;
  for (int i = 0; i < pairs; ++i) {
    const double freq = std::pow(base, -2.0 * i / sub_dim);
    for (std::size_t r = 0; r < pos.size(); ++r) {
      const double a = pos[r] * freq;
      plan.cos(static_cast<Eigen::Index>(r), first_pair + i) = std::cos(a);
      plan.sin(static_cast<Eigen::Index>(r), first_pair + i) = std::sin(a);
    }
  }
}

}  // namespace

RotaryPlan rope1d_plan(const std::vector<int>& positions, const RopeConfig& config) {
  if (config.head_dim <= 0 || config.head_dim % 2 != 0) throw ConfigError("rope head_dim must be even");
  RotaryPlan plan;
  plan.head_dim = config.head_dim;
  const auto n = static_cast<Eigen::Index>(positions.size());
  plan.cos.resize(n, config.head_dim / 2);
  plan.sin.resize(n, config.head_dim / 2);
  fill_axis(plan, positions, 0, config.head_dim, config.base);
  return plan;
}

RotaryPlan rope3d_plan(const std::vector<int>& time_pos, const std::vector<int>& lat_pos,
                       const std::vector<int>& lon_pos, const RopeConfig& config) {
  config.validate();
  if (time_pos.size() != lat_pos.size() || time_pos.size() != lon_pos.size()) {
    throw std::invalid_argument("rope3d position lists differ in length");
  }
  RotaryPlan plan;
  plan.head_dim = config.head_dim;
  const auto n = static_cast<Eigen::Index>(time_pos.size());
  plan.cos.resize(n, config.head_dim / 2);
  plan.sin.resize(n, config.head_dim / 2);
  int pair = 0;
  const std::vector<int>* axes[3] = {&time_pos, &lat_pos, &lon_pos};
  for (int a = 0; a < 3; ++a) {
    if (config.axis_split[a] > 0) fill_axis(plan, *axes[a], pair, config.axis_split[a], config.base);
    pair += config.axis_split[a] / 2;
  }
  return plan;
}

Matrix apply_rotary(const Matrix& x, const RotaryPlan& plan, bool inverse) {
  if (x.rows() != plan.cos.rows()) throw std::invalid_argument("rotary plan row count mismatch");
  if (plan.head_dim <= 0 || x.cols() % plan.head_dim != 0) throw std::invalid_argument("rotary head split");
  const int pairs = plan.head_dim / 2;
  const int heads = static_cast<int>(x.cols() / plan.head_dim);
  const double sign = inverse ? -1.0 : 1.0;
  Matrix out(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    for (int h = 0; h < heads; ++h) {
      const int o = h * plan.head_dim;
      for (int i = 0; i < pairs; ++i) {
        const double c = plan.cos(r, i);
        const double s = sign * plan.sin(r, i);
        const double a = x(r, o + 2 * i);
        const double b = x(r, o + 2 * i + 1);
        out(r, o + 2 * i) = a * c - b * s;
        out(r, o + 2 * i + 1) = a * s + b * c;
      }
    }
  }
  return out;
}

Matrix rope_rotate(const Matrix& vectors, const std::vector<int>& positions, const RopeConfig& config) {
  if (vectors.cols() != config.head_dim) throw std::invalid_argument("rope_rotate width != head_dim");
  return apply_rotary(vectors, rope1d_plan(positions, config));
}

Matrix rope3d_rotate(const Matrix& vectors, const std::vector<int>& time_pos, const std::vector<int>& lat_pos,
                     const std::vector<int>& lon_pos, const RopeConfig& config) {
  if (vectors.cols() != config.head_dim) throw std::invalid_argument("rope3d_rotate width != head_dim");
  return apply_rotary(vectors, rope3d_plan(time_pos, lat_pos, lon_pos, config));
}

namespace ad {

Var rotary(Var x, std::shared_ptr<const RotaryPlan> plan) {
  Tape* t = x.tape;
  Matrix out = apply_rotary(x.value(), *plan);
  return t->record(std::move(out), {x}, [t, x, plan](const Matrix& g) {
    t->grad(x) += apply_rotary(g, *plan, true);
  });
}

Var apply_spatial_embed(Var tokens, Var table) {
  const auto slots = table.rows();
  if (slots <= 0 || tokens.rows() % slots != 0) throw std::invalid_argument("token count not a multiple of slots");
  if (tokens.cols() != table.cols()) throw std::invalid_argument("spatial table width mismatch");
  std::vector<int> index(static_cast<std::size_t>(tokens.rows()));
  for (std::size_t r = 0; r < index.size(); ++r) index[r] = static_cast<int>(r % slots);
  return add_gathered(tokens, table, std::move(index));
}

}  // namespace ad

}  // namespace flowcast
