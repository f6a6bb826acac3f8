#include <cmath>

#include "doctest.h"
#include "flowcast/errors.hpp"
#include "flowcast/positional.hpp"
#include "flowcast/rng.hpp"
#include "test_util.hpp"

using namespace flowcast;

namespace {

Matrix randn(int r, int c, Rng& rng) {
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
  return m;
}

}  // namespace

TEST_CASE("rope at position zero is the identity") {
  Rng rng(1);
  RopeConfig cfg;
  cfg.head_dim = 16;
  const Matrix v = randn(3, 16, rng);
  CHECK((rope_rotate(v, {0, 0, 0}, cfg) - v).cwiseAbs().maxCoeff() == 0.0);
  cfg.axis_split = RopeConfig::default_split(16);
  CHECK((rope3d_rotate(v, {0, 0, 0}, {0, 0, 0}, {0, 0, 0}, cfg) - v).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("rope preserves norms") {
  Rng rng(2);
  RopeConfig cfg;
  cfg.head_dim = 32;
  cfg.axis_split = RopeConfig::default_split(32);
  std::vector<int> pos, lat, lon;
  for (int i = 0; i < 64; ++i) {
    pos.push_back(rng.uniform_int(0, 512));
    lat.push_back(rng.uniform_int(0, 512));
    lon.push_back(rng.uniform_int(0, 512));
  }
  const Matrix v = randn(64, 32, rng);
  const Matrix a = rope_rotate(v, pos, cfg);
  const Matrix b = rope3d_rotate(v, pos, lat, lon, cfg);
  for (int r = 0; r < 64; ++r) {
    CHECK(std::fabs(a.row(r).norm() - v.row(r).norm()) <= 1e-6);
    CHECK(std::fabs(b.row(r).norm() - v.row(r).norm()) <= 1e-6);
  }
}

TEST_CASE("rope logits depend only on the position difference") {
  Rng rng(3);
  RopeConfig cfg;
  cfg.head_dim = 32;
  const Matrix q = randn(1, 32, rng);
  const Matrix k = randn(1, 32, rng);
  auto logit = [&](int pq, int pk) { return rope_rotate(q, {pq}, cfg).row(0).dot(rope_rotate(k, {pk}, cfg).row(0)); };
  CHECK(std::fabs(logit(7, 3) - logit(14, 10)) <= 1e-5);

  double worst = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const Matrix qq = randn(1, 32, rng);
    const Matrix kk = randn(1, 32, rng);
    const int a = rng.uniform_int(0, 512), b = rng.uniform_int(0, 512);
    const int shift = rng.uniform_int(-std::min(a, b), 512 - std::max(a, b));
    const double l1 = rope_rotate(qq, {a}, cfg).row(0).dot(rope_rotate(kk, {b}, cfg).row(0));
    const double l2 = rope_rotate(qq, {a + shift}, cfg).row(0).dot(rope_rotate(kk, {b + shift}, cfg).row(0));
    worst = std::max(worst, std::fabs(l1 - l2));
  }
  CHECK(worst <= 1e-5);
}

TEST_CASE("rope3d sub-blocks move independently") {
  Rng rng(4);
  RopeConfig cfg;
  cfg.head_dim = 16;
  cfg.axis_split = RopeConfig::default_split(16);
  REQUIRE(cfg.axis_split == std::array<int, 3>{8, 4, 4});
  const Matrix v = randn(5, 16, rng);
  const std::vector<int> t{1, 2, 3, 4, 5}, la{0, 1, 2, 3, 4}, lo{9, 8, 7, 6, 5};
  const Matrix base = rope3d_rotate(v, t, la, lo, cfg);
  const Matrix lat_shift = rope3d_rotate(v, t, {7, 7, 7, 7, 7}, lo, cfg);
  CHECK((base.leftCols(8) - lat_shift.leftCols(8)).cwiseAbs().maxCoeff() == 0.0);
  CHECK((base.rightCols(4) - lat_shift.rightCols(4)).cwiseAbs().maxCoeff() == 0.0);
  CHECK((base.middleCols(8, 4) - lat_shift.middleCols(8, 4)).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("rope3d logits are invariant to a joint shift on all axes") {
  Rng rng(5);
  RopeConfig cfg;
  cfg.head_dim = 32;
  cfg.axis_split = RopeConfig::default_split(32);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const Matrix q = randn(1, 32, rng);
    const Matrix k = randn(1, 32, rng);
    int p[6];
    for (int& x : p) x = rng.uniform_int(0, 256);
    const int dt = rng.uniform_int(0, 256), dl = rng.uniform_int(0, 256), dn = rng.uniform_int(0, 256);
    auto logit = [&](int s0, int s1, int s2) {
      const Matrix a = rope3d_rotate(q, {p[0] + s0}, {p[1] + s1}, {p[2] + s2}, cfg);
      const Matrix b = rope3d_rotate(k, {p[3] + s0}, {p[4] + s1}, {p[5] + s2}, cfg);
      return a.row(0).dot(b.row(0));
    };
    worst = std::max(worst, std::fabs(logit(0, 0, 0) - logit(dt, dl, dn)));
  }
  CHECK(worst <= 1e-5);
}

TEST_CASE("rope config validation") {
  RopeConfig cfg;
  cfg.head_dim = 15;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg.head_dim = 16;
  cfg.axis_split = {8, 4, 2};
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg.axis_split = {6, 5, 5};
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg.axis_split = {8, 4, 4};
  CHECK_NOTHROW(cfg.validate());
  CHECK_THROWS_AS(rope1d_plan({1}, RopeConfig{15}), ConfigError);
}

TEST_CASE("multi-head rotary applies the same rotation to every head") {
  Rng rng(6);
  RopeConfig cfg;
  cfg.head_dim = 8;
  const Matrix one = randn(4, 8, rng);
  Matrix two(4, 16);
  two << one, one;
  const auto plan = rope1d_plan({0, 3, 9, 40}, cfg);
  const Matrix r = apply_rotary(two, plan);
  CHECK((r.leftCols(8) - r.rightCols(8)).cwiseAbs().maxCoeff() == 0.0);
  CHECK((apply_rotary(r, plan, true) - two).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("spatial embedding adds one row per slot in every frame") {
  Rng rng(7);
  ad::Tape t(false);
  const Matrix tok = randn(3 * 4, 5, rng);
  const Matrix tab = randn(4, 5, rng);
  const Matrix zero = ad::apply_spatial_embed(t.constant(tok), t.constant(Matrix::Zero(4, 5))).value();
  CHECK((zero - tok).cwiseAbs().maxCoeff() == 0.0);
  const Matrix out = ad::apply_spatial_embed(t.constant(tok), t.constant(tab)).value();
  for (int f = 0; f < 3; ++f) {
    for (int s = 0; s < 4; ++s) {
      const Matrix want = tok.row(f * 4 + s) + tab.row(s);
      CHECK((out.row(f * 4 + s) - want).cwiseAbs().maxCoeff() == 0.0);
    }
  }
  // differences across frames are unchanged
  CHECK(((out.middleRows(4, 4) - out.topRows(4)) - (tok.middleRows(4, 4) - tok.topRows(4))).cwiseAbs().maxCoeff() <
        1e-12);
  CHECK_THROWS(ad::apply_spatial_embed(t.constant(randn(7, 5, rng)), t.constant(tab)));
}

TEST_CASE("spatial table and rotary gradients match finite differences") {
  ParameterStore s;
  auto& tok = s.add("tokens", 9, 8, {InitKind::trunc_normal, 0.8});
  auto& tab = s.add("table", 3, 8, {InitKind::trunc_normal, 0.8});
  s.initialize(13);
  RopeConfig cfg;
  cfg.head_dim = 4;
  auto plan = std::make_shared<const RotaryPlan>(rope1d_plan({0, 0, 0, 1, 1, 1, 2, 2, 2}, cfg));
  Rng rng(8);
  const Matrix target = randn(9, 8, rng);
  const double err = max_gradient_error(s, [&](ad::Tape& t) {
    ad::Var x = ad::apply_spatial_embed(t.param(tok), t.param(tab));
    x = ad::rotary(ad::gelu(x), plan);
    return ad::mse(x, target);
  });
  CHECK(err < 1e-5);

  // table gradient equals the per-slot sum of token gradients
  s.zero_grad();
  ad::Tape t;
  ad::Var x = ad::apply_spatial_embed(t.param(tok), t.param(tab));
  t.backward(ad::mse(ad::gelu(x), target));
  for (int slot = 0; slot < 3; ++slot) {
    const Matrix sum = tok.grad.row(slot) + tok.grad.row(slot + 3) + tok.grad.row(slot + 6);
    CHECK((sum - tab.grad.row(slot)).cwiseAbs().maxCoeff() < 1e-12);
  }
  CHECK(tab.grad.norm() > 0.0);
}
