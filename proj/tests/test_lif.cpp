#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "snnd/gradcheck.hpp"
#include "snnd/lif.hpp"
#include "snnd/rng.hpp"

using namespace snnd;

TEST_CASE("parameter validation") {
  LifParams p;
  CHECK_NOTHROW(validate(p));
  p.tau = Real(1);
  CHECK_THROWS_AS(validate(p), ConfigError);
  p = LifParams{};
  p.threshold = Real(0);
  CHECK_THROWS_AS(validate(p), ConfigError);
  p = LifParams{};
  p.surrogate_width = Real(-0.5);
  CHECK_THROWS_AS(validate(p), ConfigError);
}

TEST_CASE("membrane trace under constant drive") {
  // tau=2, threshold=1, input 0.6 each step: the membrane walks
  // 0.6 -> 0.9 -> 1.05, fires on the third step, and the subtractive
  // reset leaves 0.05 behind.
  LifParams p;
  LifState st;
  st.reset(1, 1);
  Tensor drive = Tensor::from_values({1, 1}, {0.6});

  Tensor s1 = lif_step(st, drive, p, SpikeMode::hard);
  CHECK(s1(0, 0) == 0.0);
  CHECK(st.membrane(0, 0) == doctest::Approx(0.6).epsilon(1e-12));

  Tensor s2 = lif_step(st, drive, p, SpikeMode::hard);
  CHECK(s2(0, 0) == 0.0);
  CHECK(st.membrane(0, 0) == doctest::Approx(0.9).epsilon(1e-12));

  Tensor s3 = lif_step(st, drive, p, SpikeMode::hard);
  CHECK(s3(0, 0) == 1.0);
  CHECK(st.membrane(0, 0) == doctest::Approx(0.05).epsilon(1e-9));
}

TEST_CASE("zero drive never fires") {
  LifParams p;
  LifState st;
  st.reset(2, 3);
  Tensor zero = Tensor::zeros({2, 3});
  for (int t = 0; t < 10; ++t) {
    Tensor s = lif_step(st, zero, p, SpikeMode::hard);
    for (Index i = 0; i < s.numel(); ++i) CHECK(s.values()[i] == 0.0);
  }
  for (Index i = 0; i < st.membrane.numel(); ++i)
    CHECK(st.membrane.values()[i] == 0.0);
}

TEST_CASE("hard spikes are binary") {
  LifParams p;
  LifState st;
  st.reset(4, 5);
  Rng rng(41);
  for (int t = 0; t < 8; ++t) {
    Tensor drive = Tensor::zeros({4, 5});
    for (Index i = 0; i < drive.numel(); ++i)
      drive.values()[i] = Real(rng.uniform(-1, 2));
    Tensor s = lif_step(st, drive, p, SpikeMode::hard);
    for (Index i = 0; i < s.numel(); ++i) {
      const Real v = s.values()[i];
      CHECK((v == 0.0 || v == 1.0));
    }
  }
}

TEST_CASE("strong drive fires every step") {
  LifParams p;
  LifState st;
  st.reset(1, 1);
  Tensor drive = Tensor::from_values({1, 1}, {2.0});
  for (int t = 0; t < 5; ++t) {
    Tensor s = lif_step(st, drive, p, SpikeMode::hard);
    CHECK(s(0, 0) == 1.0);
  }
}

TEST_CASE("surrogate window hand values") {
  FlatArray<Real> h(6);
  h << 1.0, 1.49, 1.5, 0.51, 0.5, 0.4;
  FlatArray<Real> g = surrogate_grad<Real>(h, Real(1), Real(1));
  CHECK(g[0] == 1.0);   // centre of the window
  CHECK(g[1] == 1.0);   // just inside the upper edge
  CHECK(g[2] == 0.0);   // boundary is exclusive
  CHECK(g[3] == 1.0);   // just inside the lower edge
  CHECK(g[4] == 0.0);   // boundary is exclusive
  CHECK(g[5] == 0.0);   // outside

  // Narrow window scales the magnitude as 1/width.
  FlatArray<Real> g2 = surrogate_grad<Real>(h, Real(1), Real(0.5));
  CHECK(g2[0] == 2.0);
  CHECK(g2[1] == 0.0);  // 0.49 away, window now reaches 0.25
}

TEST_CASE("soft forward is the clipped ramp") {
  LifParams p;
  Tensor h = Tensor::from_values({1, 5}, {0.4, 0.6, 1.0, 1.4, 1.6});
  Tensor s = spike_soft(h, p);
  CHECK(s(0, 0) == 0.0);                                    // below window
  CHECK(s(0, 1) == doctest::Approx(0.1).epsilon(1e-12));    // ramp
  CHECK(s(0, 2) == doctest::Approx(0.5).epsilon(1e-12));    // centre
  CHECK(s(0, 3) == doctest::Approx(0.9).epsilon(1e-12));    // ramp
  CHECK(s(0, 4) == 1.0);                                    // above window

  // Hard mode steps at the threshold instead.
  Tensor sh = spike_hard(h, p);
  CHECK(sh(0, 0) == 0.0);
  CHECK(sh(0, 1) == 0.0);
  CHECK(sh(0, 2) == 1.0);
  CHECK(sh(0, 3) == 1.0);
  CHECK(sh(0, 4) == 1.0);
}

TEST_CASE("hard and soft modes share one backward mask") {
  // Same membranes, same upstream gradient: the spike gradients agree
  // bitwise because both modes gate on |h - threshold| < width/2.
  LifParams p;
  std::vector<Real> grid;
  for (int i = 0; i <= 16; ++i) grid.push_back(Real(i) / Real(8));  // dyadic

  Tensor ha = Tensor::from_values({1, (Index)grid.size()}, grid);
  Tensor hb = Tensor::from_values({1, (Index)grid.size()}, grid);
  ha.set_requires_grad(true);
  hb.set_requires_grad(true);

  backward(sum_all(spike_hard(ha, p)));
  backward(sum_all(spike_soft(hb, p)));

  for (Index i = 0; i < ha.numel(); ++i)
    CHECK(ha.grad()[i] == hb.grad()[i]);
}

TEST_CASE("soft mode matches finite differences through the reset") {
  // Two steps; membranes sit away from the window edges so the loss is
  // locally linear in the inputs.
  LifParams p;
  Tensor i1 = Tensor::from_values({1, 2}, {0.3, 1.2});
  Tensor i2 = Tensor::from_values({1, 2}, {0.9, 0.1});
  const double err = finite_difference_check<Real>(
      [&] {
        LifState st;
        st.reset(1, 2);
        Tensor s1 = lif_step(st, i1, p, SpikeMode::soft);
        Tensor s2 = lif_step(st, i2, p, SpikeMode::soft);
        return sum_all(add(s1, s2));
      },
      {i1, i2});
  CHECK(err < 1e-6);
}

TEST_CASE("hard mode detaches the reset") {
  // With a loss on the *next* membrane, hard mode sees only the leak path;
  // soft mode adds the -threshold * dS/dH term.
  LifParams p;

  auto run = [&](SpikeMode mode) {
    Tensor i1 = Tensor::from_values({1, 1}, {1.2});  // inside the window
    i1.set_requires_grad(true);
    LifState st;
    st.reset(1, 1);
    lif_step(st, i1, p, mode);
    backward(sum_all(st.membrane));
    return i1.grad()[0];
  };

  CHECK(run(SpikeMode::hard) == 1.0);   // d(h - const)/di = 1
  CHECK(run(SpikeMode::soft) == 0.0);   // 1 - threshold * (1/width) = 0
}

TEST_CASE("rows evolve independently of batch composition") {
  LifParams p;
  Rng rng(9);
  Tensor d1 = Tensor::zeros({3, 2});
  Tensor d2 = Tensor::zeros({3, 2});
  for (Index i = 0; i < d1.numel(); ++i) {
    d1.values()[i] = Real(rng.uniform(-0.5, 1.5));
    d2.values()[i] = Real(rng.uniform(-0.5, 1.5));
  }

  LifState full;
  full.reset(3, 2);
  Tensor fs1 = lif_step(full, d1, p, SpikeMode::hard);
  Tensor fs2 = lif_step(full, d2, p, SpikeMode::hard);

  for (Index r = 0; r < 3; ++r) {
    Tensor r1 = Tensor::zeros({1, 2});
    Tensor r2 = Tensor::zeros({1, 2});
    for (Index c = 0; c < 2; ++c) {
      r1.values()[c] = d1(r, c);
      r2.values()[c] = d2(r, c);
    }
    LifState solo;
    solo.reset(1, 2);
    Tensor ss1 = lif_step(solo, r1, p, SpikeMode::hard);
    Tensor ss2 = lif_step(solo, r2, p, SpikeMode::hard);
    for (Index c = 0; c < 2; ++c) {
      CHECK(ss1(0, c) == fs1(r, c));
      CHECK(ss2(0, c) == fs2(r, c));
      CHECK(solo.membrane(0, c) == full.membrane(r, c));
    }
  }
}

TEST_CASE("state reset gives a fresh zero membrane") {
  LifState st;
  st.reset(2, 4);
  CHECK(st.membrane.dim(0) == 2);
  CHECK(st.membrane.dim(1) == 4);
  for (Index i = 0; i < st.membrane.numel(); ++i)
    CHECK(st.membrane.values()[i] == 0.0);

  Tensor drive = Tensor::full({2, 4}, Real(2));
  LifParams p;
  lif_step(st, drive, p, SpikeMode::hard);
  st.reset(2, 4);
  for (Index i = 0; i < st.membrane.numel(); ++i)
    CHECK(st.membrane.values()[i] == 0.0);
}
