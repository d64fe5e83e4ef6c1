import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gldensity.competitors import (IterationSchedule, NoAdmissibleLevel, choose_Nk, h_of_R, med,
                                   phi_a, phi_a_cap_radius, phi_k, radial_shell, t_infty_choice)
from gldensity.energy import (CoefficientField, EnergyParams, EnergySpec, eval_W, make_rng,
                              validate_assumptions)
from gldensity.lattice import Grid, RegionMask, ball_mask, shell_mask


@given(st.floats(-1e6, 1e6))
def test_med_is_clamp(s):
    assert med(-1.0, 1.0, s) == min(max(s, -1.0), 1.0)


def test_schedule_sequences():
    s = IterationSchedule(-0.5, 5)
    assert s.R == 32.0
    assert s.t(0) == -0.75 == (s.t_infty - 1) / 2
    ts = [s.t(k) for k in range(30)]
    rs = [s.r(k) for k in range(30)]
    assert all(a < b for a, b in zip(ts, ts[1:])) and ts[-1] < -0.5
    assert all(a > b for a, b in zip(rs, rs[1:])) and rs[0] == 32.0 and rs[-1] > 16.0
    for k in range(s.L - 1):
        assert len(s.admissible_N(k)) == 2 ** (s.L - k - 2)
    with pytest.raises(ValueError):
        IterationSchedule(0.0, 3)
    with pytest.raises(ValueError):
        IterationSchedule(-0.5, 1)


def test_radial_shell_examples():
    v = radial_shell(10.0)
    assert v.profile(10.0) == -1.0
    assert v.profile(12.0) == 1.0
    assert v.profile(11.5) == 0.5
    r = make_rng(0).uniform(0, 30, 1000)
    np.testing.assert_array_equal(v.profile(r), v.formula(r))
    assert np.all(v.radial_slope(r) <= 1.0)


def test_phi_k_branches():
    s = IterationSchedule(-0.5, 4)
    outer = phi_k(s, 3)
    assert outer.kind == "phi_k_outer"
    assert outer.profile(s.r(4)) == s.t(3)
    assert outer.profile(s.r(3)) == 1.0
    N = s.admissible_N(0)[0]
    inner = phi_k(s, 0, N)
    assert inner.kind == "phi_k_inner" and inner.profile(float(N)) == 1.0
    assert inner.profile(N - 1.0) == -0.75
    with pytest.raises(ValueError):
        phi_k(s, 0, int(s.r(1)))  # r_{k+1} itself is excluded
    with pytest.raises(ValueError):
        phi_k(s, 0)


@pytest.mark.parametrize("k", range(6))
def test_phi_k_plateaus_exact(k):
    s = IterationSchedule(-0.3, 4)
    rng = make_rng(k)
    if k >= s.L - 1:
        comp = phi_k(s, k)
        outer_r, inner_r = s.r(k), s.r(k + 1)
    else:
        N = s.admissible_N(k)[-1]
        comp = phi_k(s, k, N)
        outer_r, inner_r = float(N), N - 1.0
    far = rng.uniform(outer_r, 4 * s.R, 1000)
    near = rng.uniform(0, inner_r, 1000)
    assert np.all(comp.profile(far) == 1.0)
    assert np.all(comp.profile(near) == s.t(k))
    mid = rng.uniform(0, 4 * s.R, 1000)
    np.testing.assert_allclose(comp.profile(mid), comp.formula(mid), atol=1e-12)
    vals = comp.profile(mid)
    assert np.all((vals >= -1) & (vals <= 1))


def test_phi_a_examples_and_cap():
    R, h = 10.0, 0.1
    for a in (h, 1.5 * h, 2 * h):
        c = phi_a(a, h, R)
        assert c.profile(0.0) == 1 - a
        rc = phi_a_cap_radius(a, h, R)
        assert c.profile(rc) == pytest.approx(1.0, abs=1e-15)
        assert rc <= R
        # gradient at the cap boundary is 4h/R (independent of a)
        assert c.radial_slope(rc * (1 - 1e-12)) == pytest.approx(4 * h / R, rel=1e-9)
    with pytest.raises(ValueError):
        phi_a(2.5 * h, h, R)
    with pytest.raises(ValueError):
        phi_a(0.5 * h, h, R)
    with pytest.raises(ValueError):
        phi_a(0.7, 0.6, R)


@settings(max_examples=20, deadline=None)
@given(st.floats(0.01, 0.5), st.floats(1.0, 2.0), st.floats(1.0, 100.0), st.integers(0, 2**31))
def test_phi_a_gradient_bound(h, frac, R, seed):
    c = phi_a(min(frac * h, 2 * h), h, R, (0.5, -0.5))
    x = make_rng(seed).uniform(-2 * R, 2 * R, size=(1000, 2))
    assert np.all(c.gradient_norm(x) <= 8 * h / R)
    assert np.all(c(x) <= 1.0)


def test_slopes_match_finite_differences():
    s = IterationSchedule(-0.5, 4)
    comps = [radial_shell(3.0), phi_k(s, 3), phi_k(s, 0, s.admissible_N(0)[0]),
             phi_a(0.15, 0.1, 10.0)]
    r = np.linspace(0.05, 40, 4003)
    for c in comps:
        fd = np.abs(np.gradient(c.profile(r), r))
        an = c.radial_slope(r)
        smooth = np.abs(np.gradient(an, r)) * (r[1] - r[0]) < 1e-9  # away from kinks
        np.testing.assert_allclose(fd[smooth][1:-1], an[smooth][1:-1], rtol=1e-5, atol=1e-9)


def test_h_of_R_examples():
    prm = EnergyParams(1.0, 1.4, 3.0, 2)
    assert h_of_R(prm, 10.0) == pytest.approx((8 * 10**1.4) ** (-1 / 1.6))
    assert round(h_of_R(prm, 10.0), 4) == 0.0364
    assert abs(h_of_R(prm, 10.0) - 0.0363) < 2e-4
    # with lambda >= 1 and R >= 1 the base is >= 2**m, so h <= 2**(-m/(m-p)) < 1/2;
    # the clamp only acts outside the admissible class
    for m in (1.45, 2.0, 3.0, 8.0):
        prm_m = EnergyParams(1.0, 1.4, m, 2)
        assert h_of_R(prm_m, 1.0) == pytest.approx(2 ** (-m / (m - 1.4)))
        assert h_of_R(prm_m, 1.0) < 0.5
    assert h_of_R(EnergyParams(0.01, 1.4, 3.0, 2, strict=False), 1.0) == 0.5
    Rs = np.geomspace(1, 1e4, 50)
    hs = [h_of_R(prm, R) for R in Rs]
    assert all(b <= a for a, b in zip(hs, hs[1:]))
    with pytest.raises(ValueError):
        h_of_R(prm, 0.5)


def _rough_spec(lam=2.0, seed=3):
    return EnergySpec(EnergyParams(lam, 1.4, 3.0, 2), CoefficientField.random(2, lam, 5, seed))


@pytest.mark.parametrize("R", [1.0, 4.0, 16.0, 100.0])
def test_W_small_on_one_minus_h_interval(R):
    spec = _rough_spec()
    prm = spec.params
    h = h_of_R(prm, R)
    rng = make_rng(int(R))
    tau = rng.uniform(1 - h, 1, 1000)
    x = rng.uniform(-20, 20, size=(1000, 2))
    assert np.all(eval_W(spec, tau, x) <= h**prm.p * R ** (-prm.p))


@pytest.mark.parametrize("R", [1.0, 4.0, 16.0, 100.0])
def test_W_on_one_minus_2h_interval_needs_factor_2_to_the_m(R):
    spec = _rough_spec()
    prm = spec.params
    h = h_of_R(prm, R)
    rng = make_rng(int(R) + 7)
    tau = rng.uniform(1 - 2 * h, 1, 1000)
    x = rng.uniform(-20, 20, size=(1000, 2))
    bound = h**prm.p * R ** (-prm.p)
    assert np.all(eval_W(spec, tau, x) <= 2**prm.m * bound)
    # the bound without the factor fails at the left end of the interval
    canon = EnergySpec(EnergyParams(1.0, 1.4, 3.0, 2), CoefficientField.constant(2))
    h1 = h_of_R(canon.params, R)
    if h1 < 0.5:
        assert float(eval_W(canon, 1 - 2 * h1, np.zeros(2))) > h1**1.4 * R**-1.4


def test_t_infty_choice():
    canon = EnergySpec.canonical()
    t = t_infty_choice(canon, 0.1)
    assert t == -0.9
    assert float(eval_W(canon, t, np.zeros(2))) == pytest.approx(
        float(eval_W(canon, 0.9, np.zeros(2))), rel=1e-14)
    rough = _rough_spec()
    for h in (0.01, 0.2, 0.7):
        t = t_infty_choice(rough, h)
        assert t == -(1 - h)
        x = rough.coeffs.sample_centers()
        assert np.all(eval_W(rough, np.full(len(x), t), x)
                      <= eval_W(rough, np.full(len(x), 1 - h), x) * (1 + 1e-12))


def test_t_infty_choice_hook_failure():
    lopsided = EnergySpec(
        EnergyParams(2.0, 1.4, 3.0, 2), CoefficientField.constant(2),
        W_hook=lambda tau, x: (1 - np.square(tau)) ** 3 * np.where(tau < 0, 1.0, 0.5))
    assert validate_assumptions(lopsided, 1000).ok
    assert -1 < t_infty_choice(lopsided, 0.1) < 0
    with pytest.raises(NoAdmissibleLevel):
        t_infty_choice(lopsided, 1e-6)


def test_choose_Nk_examples():
    s = IterationSchedule(-0.5, 5)
    g = Grid.cube(2, 33.0, 0.5)
    empty = RegionMask(g, np.zeros(g.dims, bool))
    ch = choose_Nk(empty, s, 0)
    assert ch.shell_measure == 0 and ch.N in s.admissible_N(0)
    full = ball_mask(g, (0, 0), s.r(0))
    ch = choose_Nk(full, s, 0)
    assert ch.within_bound
    assert ch.shell_measure == min(ch.measures.values())
    N0 = s.admissible_N(0)[3]
    lump = shell_mask(g, (0, 0), N0 - 1, N0)
    ch = choose_Nk(lump, s, 0)
    assert ch.N != N0 and ch.shell_measure == 0


def test_choose_Nk_pigeonhole_random_masks():
    rng = make_rng(99)
    g = Grid.cube(2, 17.0, 0.5)
    for trial in range(100):
        L = int(rng.integers(2, 5))
        s = IterationSchedule(-0.5, L)
        k = int(rng.integers(0, L - 1))
        density = rng.uniform(0, 1)
        A = RegionMask(g, rng.random(g.dims) < density) & ball_mask(g, (0, 0), s.r(k))
        ch = choose_Nk(A, s, k)
        counts = {N: (shell_mask(g, (0, 0), N - 1, N) & A).count for N in s.admissible_N(k)}
        assert counts == ch.counts
        assert ch.counts[ch.N] == min(counts.values())
        assert ch.within_bound
        assert ch.shell_measure <= ch.bound * (1 + 1e-12)


def test_rasterize_values_in_range():
    g = Grid.cube(2, 14.0, 0.5)
    for c in (radial_shell(5.0), phi_a(0.2, 0.1, 12.0)):
        f = c.rasterize(g)
        assert np.all(np.abs(f.values) <= 1.0)
