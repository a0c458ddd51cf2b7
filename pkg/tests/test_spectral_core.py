import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from channel_stab.spectral_core import (
    antiderivative,
    build_grid,
    cheb_coefficients,
    compute_norms,
    h1k_norm,
    hm1k_norm,
    inner,
    l1_norm,
    l2_norm,
    solve_helmholtz,
    velocity_from_vorticity,
)
from oracles import fd_velocity_l2

PI = np.pi


def phi_sin(y):
    return -np.sin(PI * y) / (PI**2 + 1)


def phi_poly(y):
    return -(y**2) / 4 + 1 / 8 + np.cosh(2 * y) / (8 * np.cosh(2))


def smooth_profiles(draw_seed, n, vanishing=True):
    rng = np.random.default_rng(draw_seed)
    g = build_grid(n)
    y = g.nodes
    c = rng.standard_normal(6) + 1j * rng.standard_normal(6)
    f = sum(cc * np.cos(j * y + 0.3 * j) for j, cc in enumerate(c))
    if vanishing:
        f = f * (1 - y**2)
    return g, f


class TestGrid:
    def test_endpoints(self):
        g = build_grid(8)
        assert g.nodes[0] == 1.0 and g.nodes[7] == -1.0

    def test_weights_sum_to_interval_length(self):
        assert abs(build_grid(16).quad_weights.sum() - 2.0) <= 1e-12

    def test_derivative_of_square(self):
        g = build_grid(64)
        assert np.max(np.abs(g.d1 @ g.nodes**2 - 2 * g.nodes)) <= 1e-10

    @pytest.mark.parametrize("n", [8, 17, 64, 200])
    def test_invariants(self, n):
        g = build_grid(n)
        assert np.all(np.diff(g.nodes) < 0)
        assert np.max(np.abs(g.d1 @ np.ones(n))) <= 1e-10 * n**2
        assert np.max(np.abs(g.d2 - g.d1 @ g.d1)) <= 1e-8 * np.max(np.abs(g.d2))

    def test_rejects_small_grids(self):
        with pytest.raises(ValueError):
            build_grid(7)

    def test_deterministic(self):
        assert build_grid(33) is build_grid(33)
        g = build_grid(33)
        assert not g.nodes.flags.writeable


class TestHelmholtz:
    def test_zero(self):
        g = build_grid(32)
        assert np.all(solve_helmholtz(g, 1, np.zeros(32)) == 0)

    def test_sine_closed_form(self):
        g = build_grid(64)
        phi = solve_helmholtz(g, 1, np.sin(PI * g.nodes))
        assert np.max(np.abs(phi - phi_sin(g.nodes))) <= 1e-10

    def test_polynomial_closed_form(self):
        g = build_grid(64)
        phi = solve_helmholtz(g, 2, g.nodes**2 - 1)
        assert np.max(np.abs(phi - phi_poly(g.nodes))) <= 1e-9

    def test_poisson_k0(self):
        g = build_grid(48)
        phi = solve_helmholtz(g, 0, -(PI**2) * np.sin(PI * g.nodes))
        assert np.max(np.abs(phi - np.sin(PI * g.nodes))) <= 1e-10

    def test_boundary_exact(self):
        g, f = smooth_profiles(0, 40)
        phi = solve_helmholtz(g, 3, f)
        assert phi[0] == 0 and phi[-1] == 0

    @pytest.mark.parametrize("k, rhs, exact", [(1, lambda y: np.sin(PI * y), phi_sin),
                                               (2, lambda y: y**2 - 1, phi_poly)])
    def test_spectral_convergence(self, k, rhs, exact):
        errs = []
        for n in (24, 48):
            g = build_grid(n)
            errs.append(np.max(np.abs(solve_helmholtz(g, k, rhs(g.nodes)) - exact(g.nodes))))
        assert errs[1] <= errs[0] / 10 or errs[1] < 1e-13

    def test_bad_input(self):
        g = build_grid(16)
        with pytest.raises(ValueError):
            solve_helmholtz(g, 1, np.zeros(15))
        with pytest.raises(ValueError):
            solve_helmholtz(g, 1, np.full(16, np.nan))


class TestNorms:
    def test_sine_norms(self):
        g = build_grid(64)
        b = compute_norms(g, 1, np.sin(PI * g.nodes))
        assert abs(b.l2 - 1.0) <= 1e-10
        assert abs(b.l1 - 4 / PI) <= 1e-8
        assert abs(b.hm1k - 1 / np.sqrt(PI**2 + 1)) <= 1e-8

    def test_zero_bundle(self):
        g = build_grid(16)
        b = compute_norms(g, 2, np.zeros(16))
        assert (b.l2, b.l1, b.linf, b.h1k, b.hm1k) == (0, 0, 0, 0, 0)

    def test_dual_requires_nonzero_k(self):
        g = build_grid(16)
        with pytest.raises(ValueError):
            hm1k_norm(g, 0, np.ones(16))

    def test_l1_complex_profile(self):
        g = build_grid(64)
        f = np.exp(1j * PI * g.nodes) * (1 + 0.5 * g.nodes)
        # |f| = 1 + y/2 > 0, integral 2
        assert abs(l1_norm(g, f) - 2.0) <= 1e-10

    def test_l1_phase_rotated(self):
        g = build_grid(64)
        assert abs(l1_norm(g, np.exp(0.7j) * np.sin(3 * PI * g.nodes)) - 4 / PI) <= 1e-8

    @settings(max_examples=40, deadline=None)
    @given(seed=st.integers(0, 10**6), k=st.integers(1, 6), n=st.sampled_from([24, 40, 64]))
    def test_norm_consistency(self, seed, k, n):
        g, f = smooth_profiles(seed, n)
        b = compute_norms(g, k, f)
        tol = 1e-9 * (1 + b.linf)
        assert b.l1 <= np.sqrt(2) * b.l2 + tol
        assert np.sqrt(2) * b.l2 <= 2 * b.linf + tol
        assert b.h1k >= k * b.l2 - tol
        assert min(b.l2, b.l1, b.linf, b.h1k, b.hm1k) >= 0

    @settings(max_examples=40, deadline=None)
    @given(seed=st.integers(0, 10**6), k=st.integers(1, 6))
    def test_duality(self, seed, k):
        g, f = smooth_profiles(seed, 48, vanishing=False)
        _, h = smooth_profiles(seed + 1, 48)
        h[0] = h[-1] = 0
        assert abs(inner(g, f, h)) <= hm1k_norm(g, k, f) * h1k_norm(g, k, h) * (1 + 1e-9) + 1e-12


class TestVelocity:
    def test_zero(self):
        g = build_grid(16)
        u1, u2 = velocity_from_vorticity(g, 1, np.zeros(16))
        assert not np.any(u1) and not np.any(u2)

    def test_sine_closed_form(self):
        g = build_grid(64)
        y = g.nodes
        u1, u2 = velocity_from_vorticity(g, 1, np.sin(PI * y))
        assert np.max(np.abs(u1 + PI * np.cos(PI * y) / (PI**2 + 1))) <= 1e-9
        assert np.max(np.abs(u2 - 1j * np.sin(PI * y) / (PI**2 + 1))) <= 1e-9
        assert u2[0] == 0 and u2[-1] == 0

    def test_against_finite_differences(self):
        rng = np.random.default_rng(3)
        c = rng.standard_normal(6)

        def om(y):
            return sum(cc * np.cos(j * y) for j, cc in enumerate(c))

        g = build_grid(96)
        u1, u2 = velocity_from_vorticity(g, 3, om(g.nodes))
        ref = fd_velocity_l2(4096, 3, om)
        assert abs(np.hypot(l2_norm(g, u1), l2_norm(g, u2)) - ref) <= 1e-6 * ref

    def test_rejects_zero_mode(self):
        with pytest.raises(ValueError):
            velocity_from_vorticity(build_grid(16), 0, np.zeros(16))

    @settings(max_examples=30, deadline=None)
    @given(seed=st.integers(0, 10**6), k=st.integers(1, 8))
    def test_energy_identity(self, seed, k):
        g, w = smooth_profiles(seed, 48)
        phi = solve_helmholtz(g, k, w)
        u1, u2 = velocity_from_vorticity(g, k, w)
        lhs = inner(g, -w, phi).real
        rhs = l2_norm(g, u1) ** 2 + l2_norm(g, u2) ** 2
        assert abs(lhs - rhs) <= 1e-8 * rhs


def test_chebyshev_coefficients_of_polynomial():
    g = build_grid(16)
    c = cheb_coefficients(g, 3 * g.nodes**2 - 1)  # 0.5 T0 + 1.5 T2
    expected = np.zeros(16)
    expected[0], expected[2] = 0.5, 1.5
    assert np.allclose(c, expected, atol=1e-13)


def test_antiderivative_vanishes_at_lower_wall():
    g = build_grid(32)
    F = antiderivative(g, np.cos(g.nodes))
    assert np.max(np.abs(F - (np.sin(g.nodes) - np.sin(-1.0)))) <= 1e-13
