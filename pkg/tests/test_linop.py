import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from channel_stab import linop
from channel_stab.linop import HEAT_ONLY, ConditioningError
from channel_stab.spectral_core import build_grid, l2_norm
from oracles import fd_resolvent_w_l2, sine_galerkin_operator

PI = np.pi
HEAT = PI**2 / 4


def heat_op(n=64, nu=1.0, k=1):
    return linop.assemble(build_grid(n), nu, k, HEAT_ONLY)


def weighted_svd_oracle(op, lam, out="u"):
    """sup ||u|| / ||F|| from the dense solution map and a plain SVD."""
    g = op.grid
    m = op.size
    cols_u1, cols_u2 = [], []
    for j in range(m):
        F = np.zeros(g.n, complex)
        F[j + 1] = 1.0
        _, _, (u1, u2) = linop.solve_resolvent(op, lam, F)
        cols_u1.append(u1)
        cols_u2.append(u2)
    sw = np.sqrt(g.quad_weights)
    U = np.vstack([sw[:, None] * np.array(cols_u1).T, sw[:, None] * np.array(cols_u2).T])
    return np.linalg.svd(U / sw[1:-1][None, :], compute_uv=False)[0]


class TestAssemble:
    @pytest.mark.parametrize("k", [1, 2])
    def test_heat_eigenvalue(self, k):
        ev = linop.spectrum(heat_op(64, 1.0, k))
        assert abs(ev[0].real - (HEAT + k * k)) <= 1e-6
        assert abs(ev[0].imag) <= 1e-8

    def test_abscissa_self_convergence(self):
        a = linop.spectrum(linop.assemble(build_grid(128), 1e-3, 1))[0].real
        b = linop.spectrum(linop.assemble(build_grid(256), 1e-3, 1))[0].real
        assert abs(a - b) <= 1e-6 * abs(b)

    def test_rejects_zero_mode(self):
        with pytest.raises(ValueError):
            linop.assemble(build_grid(16), 1.0, 0)

    def test_all_terms_off_is_zero(self):
        op = linop.assemble(build_grid(24), 1e-2, 3, dict(diffusion=False, transport=False, nonlocal_=False))
        assert not np.any(op.matrix)

    def test_heat_only_spectrum_real_positive(self):
        ev = linop.spectrum(heat_op(48, 0.3, 2))
        assert np.max(np.abs(ev.imag)) <= 1e-8 * np.max(np.abs(ev))
        assert np.all(ev.real > 0)

    def test_matrix_is_immutable(self):
        op = heat_op(16)
        with pytest.raises(ValueError):
            op.matrix[0, 0] = 1.0


class TestSpectrum:
    def test_heat_ladder(self):
        n = 64
        ev = linop.spectrum(heat_op(n)).real
        m = np.arange(1, n // 4 + 1)
        assert np.max(np.abs(ev[: n // 4] - (PI**2 * m**2 / 4 + 1))) <= 1e-6 * (PI**2 * (n // 4) ** 2 / 4)

    def test_stable(self):
        assert linop.spectrum(linop.assemble(build_grid(128), 1e-3, 1))[0].real > 0

    def test_resolution_independence(self):
        e1 = linop.spectrum(linop.assemble(build_grid(128), 1e-3, 1))[:20]
        e2 = linop.spectrum(linop.assemble(build_grid(192), 1e-3, 1))
        assert max(np.min(np.abs(e2 - z)) for z in e1) <= 1e-6

    def test_matches_sine_galerkin(self):
        ev = linop.spectrum(linop.assemble(build_grid(128), 1e-2, 1))[:3]
        ref = np.linalg.eigvals(sine_galerkin_operator(1e-2, 1, 200))
        assert max(np.min(np.abs(ref - z)) for z in ev) <= 1e-8


class TestResolvent:
    def test_zero_forcing(self):
        op = linop.assemble(build_grid(32), 1e-2, 1)
        w, phi, (u1, u2) = linop.solve_resolvent(op, 0.5, np.zeros(32))
        assert not np.any(w) and not np.any(u1)

    def test_against_finite_differences(self):
        op = linop.assemble(build_grid(128), 1e-2, 1)
        w, _, _ = linop.solve_resolvent(op, 0.5, np.sin(PI * op.grid.nodes))
        ref = fd_resolvent_w_l2(4096, 1e-2, 1, 0.5, lambda y: np.sin(PI * y))
        assert abs(l2_norm(op.grid, w) - ref) <= 1e-6 * ref

    def test_eigenfunction(self):
        op = heat_op(64)
        e = np.sin(PI * (op.grid.nodes + 1) / 2)
        w, _, _ = linop.solve_resolvent(op, 0.0, e * (HEAT + 1))
        assert np.max(np.abs(w - e)) <= 1e-9

    def test_residual_and_boundaries(self):
        op = linop.assemble(build_grid(96), 1e-3, 2)
        F = np.cos(3 * op.grid.nodes) * (1 - op.grid.nodes**2)
        w, phi, _ = linop.solve_resolvent(op, 0.7, F)
        res = op.shifted(0.7) @ w[1:-1] - F[1:-1]
        assert np.linalg.norm(res) <= 1e-10 * np.linalg.norm(F)
        assert w[0] == w[-1] == phi[0] == phi[-1] == 0

    def test_resolvent_identity(self):
        op = linop.assemble(build_grid(64), 1e-2, 2)
        F = np.exp(op.grid.nodes) * (1 - op.grid.nodes**2)
        lam, lam2 = 0.3, 0.8
        w1, _, _ = linop.solve_resolvent(op, lam, F)
        w2, _, _ = linop.solve_resolvent(op, lam2, F)
        w12, _, _ = linop.solve_resolvent(op, lam, w2)
        assert np.max(np.abs(w1 - (w2 + 1j * op.k * (lam - lam2) * w12))) <= 1e-8 * np.max(np.abs(w1))

    def test_conditioning_error(self):
        op = linop.assemble(build_grid(16), 0.0, 1, HEAT_ONLY)
        with pytest.raises(ConditioningError) as info:
            linop.solve_resolvent(op, 0.0, np.ones(16))
        assert info.value.sigma_min == 0.0


class TestSingularValues:
    def test_self_adjoint_case(self):
        assert abs(linop.min_singular_value(heat_op(64), 0.0) - (HEAT + 1)) <= 1e-6

    def test_matches_dense_svd(self):
        op = linop.assemble(build_grid(96), 1e-3, 1)
        sw = np.sqrt(op.grid.quad_weights[1:-1])
        A = sw[:, None] * (op.matrix - 0.5j * np.eye(op.size)) / sw[None, :]
        ref = np.linalg.svd(A, compute_uv=False)[-1]
        assert abs(linop.min_singular_value(op, 0.5) - ref) <= 1e-8

    @pytest.mark.parametrize("k", [1, 3])
    def test_lipschitz_in_shift(self, k):
        op = linop.assemble(build_grid(64), 1e-3, k)
        d = 1e-4
        for lam in (0.0, 0.4, 0.9):
            assert abs(linop.min_singular_value(op, lam + d) - linop.min_singular_value(op, lam)) <= k * d * (1 + 1e-6)

    def test_cache_transparent(self):
        g = build_grid(48)
        a = linop.assemble(g, 1e-2, 1)
        first = linop.min_singular_value(a, 0.3)
        again = linop.min_singular_value(a, 0.3)
        fresh = linop.min_singular_value(linop.assemble(g, 1e-2, 1), 0.3)
        assert first == again == fresh


class TestGap:
    def test_self_adjoint_gap(self):
        nu, k = 0.05, 2
        r = linop.pseudospectral_gap(heat_op(64, nu, k))
        assert abs(r.gap - nu * (HEAT + k * k)) <= 1e-6 * nu
        assert abs(r.argmin_lambda) <= 1e-3

    def test_against_exhaustive_grid(self):
        op = linop.assemble(build_grid(80), 1e-3, 1)
        r = linop.pseudospectral_gap(op)
        lams = np.linspace(-0.5, 1.5, 10_000)
        brute = min(linop.min_singular_value(op, s) for s in lams)
        assert r.gap <= brute * (1 + 1e-12)
        assert abs(r.gap - brute) <= 1e-4 * brute

    def test_nondecreasing_in_k(self):
        g = build_grid(128)
        gaps = [linop.pseudospectral_gap(linop.assemble(g, 1e-3, k)).gap for k in (1, 2, 4)]
        assert gaps[0] <= gaps[1] <= gaps[2]

    def test_unbracketed_window_is_flagged(self, caplog):
        r = linop.pseudospectral_gap(heat_op(32, 0.1, 1), window=(0.2, 1.0), points=9)
        assert not r.bracketed
        assert abs(r.argmin_lambda - 0.2) < 1e-12


class TestWeightedNorms:
    def test_self_adjoint_resolvent_norm(self):
        nu, k = 0.2, 2
        v = linop.weighted_operator_norm(heat_op(64, nu, k), 0.0, "w_l2", "F_l2")
        assert abs(v - 1 / (nu * (HEAT + k * k))) <= 1e-6 * v

    def test_velocity_norm_oracles(self):
        op = linop.assemble(build_grid(96), 1e-3, 1)
        v = linop.weighted_operator_norm(op, 0.5, "u_l2", "F_l2")
        assert abs(v - weighted_svd_oracle(op, 0.5)) <= 1e-8 * v
        rng = np.random.default_rng(0)
        g = op.grid
        best = 0.0
        for _ in range(1000):
            F = g.embed(rng.standard_normal(op.size) + 1j * rng.standard_normal(op.size))
            _, _, (u1, u2) = linop.solve_resolvent(op, 0.5, F)
            best = max(best, np.hypot(l2_norm(g, u1), l2_norm(g, u2)) / l2_norm(g, F))
        assert best <= v * (1 + 1e-12)

    def test_maximizer_attains_norm(self):
        op = linop.assemble(build_grid(64), 1e-2, 2)
        for lhs in linop.LHS_NORMS:
            v, F = linop.weighted_operator_norm(op, 0.6, lhs, "F_l2", return_vector=True)
            w, _, (u1, u2) = linop.solve_resolvent(op, 0.6, F)
            g = op.grid
            val = {"w_l2": l2_norm(g, w), "u_l2": np.hypot(l2_norm(g, u1), l2_norm(g, u2)),
                   "w_h1k": np.sqrt(l2_norm(g, g.d1 @ w) ** 2 + 4 * l2_norm(g, w) ** 2)}[lhs]
            assert abs(val / l2_norm(g, F) - v) <= 1e-8 * v

    @pytest.mark.parametrize("k", [1, 2, 5])
    def test_dual_norm_dominates(self, k):
        op = linop.assemble(build_grid(64), 1e-2, k)
        for lam in (0.0, 0.5, 1.0):
            assert (linop.weighted_operator_norm(op, lam, "w_l2", "F_hm1k")
                    >= linop.weighted_operator_norm(op, lam, "w_l2", "F_l2") * (1 - 1e-10))

    def test_rejects_non_quadratic(self):
        op = heat_op(16)
        with pytest.raises(ValueError):
            linop.weighted_operator_norm(op, 0.0, "w_l1", "F_l2")
        with pytest.raises(ValueError):
            linop.weighted_operator_norm(op, 0.0, "w_l2", "F_linf")


@settings(max_examples=25, deadline=None)
@given(lam=st.floats(-0.5, 1.5), k=st.integers(1, 4), s=st.floats(1e-3, 1e3))
def test_resolvent_linearity(lam, k, s):
    op = linop.assemble(build_grid(32), 1e-2, k)
    F = np.sin(PI * op.grid.nodes) + 1j * op.grid.nodes * (1 - op.grid.nodes**2)
    w1, _, _ = linop.solve_resolvent(op, lam, F)
    w2, _, _ = linop.solve_resolvent(op, lam, s * F)
    assert np.max(np.abs(w2 - s * w1)) <= 1e-12 * s * np.max(np.abs(w1))
