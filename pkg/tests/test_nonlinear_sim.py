import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from channel_stab import linear_evolution as le
from channel_stab import linop
from channel_stab import nonlinear_sim as ns
from channel_stab.snapshots import read_snapshots
from channel_stab.spectral_core import build_grid, cheb_coefficients

PI = np.pi


def random_state(K, n, seed, scale=1e-2):
    rng = np.random.default_rng(seed)
    g = build_grid(n)
    bubble = 1 - g.nodes**2
    st_ = ns.zero_state(K, n)
    for k in range(K + 1):
        c = rng.standard_normal(6) + (1j * rng.standard_normal(6) if k else 0)
        st_.omega[k] = scale * bubble * sum(cc * np.cos(j * g.nodes) for j, cc in enumerate(c))
    st_.omega[0] = st_.omega[0].real
    st_.mean_u1 = 0.1 * scale
    return st_


class TestConfig:
    def test_unknown_keys_rejected(self):
        with pytest.raises(ValueError, match="bogus"):
            ns.SimConfig.from_dict({"nu": 1e-3, "bogus": 1})

    def test_round_trip(self, tmp_path):
        cfg = ns.SimConfig(nu=2e-3, K=8, n=48, T=3.0, amplitude=1e-4, family="critical_layer")
        p = tmp_path / "cfg.json"
        p.write_text(__import__("json").dumps(cfg.to_dict()))
        assert ns.SimConfig.from_json(p) == cfg

    @pytest.mark.parametrize("bad", [dict(K=0), dict(nu=-1.0), dict(dt=0.0), dict(family="x"), dict(amplitude=-1)])
    def test_invalid(self, bad):
        with pytest.raises(ValueError):
            ns.SimConfig(**bad)

    def test_default_horizon(self):
        assert ns.SimConfig(nu=1e-2).horizon == pytest.approx(200.0)
        assert ns.SimConfig(nu=1e-8).horizon == 2.0e3

    def test_dealiased_point_count(self):
        assert ns.SimConfig(K=32).product_points >= 97
        assert ns.SimConfig(K=32, dealias=False).product_points == 65


class TestInitialData:
    def test_zero_amplitude(self):
        st_ = ns.init_state(ns.SimConfig(K=4, n=32, amplitude=0.0))
        assert not np.any(st_.omega)
        assert ns.sobolev_proxy(st_) == 0.0

    @pytest.mark.parametrize("family", ns.FAMILIES)
    def test_proxy_equals_amplitude(self, family):
        cfg = ns.SimConfig(nu=1e-3, K=16, n=96, amplitude=3e-5, family=family)
        st_ = ns.init_state(cfg)
        assert abs(ns.sobolev_proxy(st_, cfg.s) - 3e-5) <= 1e-10 * 3e-5
        assert st_.omega[:, 0].tolist() == [0] * 17 and st_.omega[:, -1].tolist() == [0] * 17

    def test_deterministic_in_seed(self):
        cfg = ns.SimConfig(K=6, n=48, amplitude=1e-3, seed=5)
        a, b = ns.init_state(cfg), ns.init_state(cfg)
        c = ns.init_state(cfg.replace(seed=6))
        assert np.array_equal(a.omega, b.omega)
        assert not np.array_equal(a.omega, c.omega)

    def test_zero_mode_real(self):
        st_ = ns.init_state(ns.SimConfig(K=6, n=48, amplitude=1e-3))
        assert not np.any(st_.omega[0].imag)


class TestSobolevProxy:
    def test_s_zero_is_coefficient_sum(self):
        st_ = random_state(3, 32, 0)
        model = ns._Model(ns.SimConfig(K=3, n=32))
        u1, u2 = model.velocities(st_)
        g = model.grid
        total = sum((1 if k == 0 else 2) * np.sum(np.abs(cheb_coefficients(g, u1[k])) ** 2
                                                  + np.abs(cheb_coefficients(g, u2[k])) ** 2) for k in range(4))
        assert ns.sobolev_proxy(st_, 0.0, model) == pytest.approx(math.sqrt(total), rel=1e-12)

    @settings(max_examples=20, deadline=None)
    @given(seed=st.integers(0, 10**5), s1=st.floats(0, 4), ds=st.floats(0, 2))
    def test_monotone_in_index(self, seed, s1, ds):
        st_ = random_state(3, 24, seed)
        assert ns.sobolev_proxy(st_, s1 + ds) >= ns.sobolev_proxy(st_, s1) * (1 - 1e-12)

    def test_negative_index(self):
        with pytest.raises(ValueError):
            ns.sobolev_proxy(random_state(2, 16, 0), -1.0)


class TestNonlinearTerm:
    def test_zero_state(self):
        f1, f2 = ns.nonlinear_term(ns.zero_state(4, 24))
        assert not np.any(f1) and not np.any(f2)

    def test_fft_matches_direct_convolution(self):
        st_ = random_state(8, 32, 1)
        cfg = ns.SimConfig(nu=1e-3, K=8, n=32)
        a1, a2 = ns.nonlinear_term(st_, cfg)
        b1, b2 = ns.nonlinear_term(st_, cfg, direct=True)
        scale = max(np.abs(b1).max(), np.abs(b2).max())
        assert max(np.abs(a1 - b1).max(), np.abs(a2 - b2).max()) <= 1e-12 * scale

    @settings(max_examples=15, deadline=None)
    @given(K=st.integers(1, 8), seed=st.integers(0, 10**5))
    def test_fft_direct_property(self, K, seed):
        st_ = random_state(K, 24, seed)
        cfg = ns.SimConfig(nu=1e-3, K=K, n=24)
        a1, a2 = ns.nonlinear_term(st_, cfg)
        b1, b2 = ns.nonlinear_term(st_, cfg, direct=True)
        scale = max(np.abs(b1).max(), np.abs(b2).max(), 1e-300)
        assert max(np.abs(a1 - b1).max(), np.abs(a2 - b2).max()) <= 1e-12 * scale

    def test_zero_mode_only_content(self):
        st_ = ns.zero_state(4, 32)
        g = build_grid(32)
        st_.omega[0] = np.sin(PI * g.nodes)
        f1, f2 = ns.nonlinear_term(st_, ns.SimConfig(K=4, n=32))
        assert np.abs(f1[1:]).max() <= 1e-15 and np.abs(f2).max() <= 1e-15
        # x-independent shear: u2 = 0, so the only product is u1_0 w_0 in mode 0
        assert np.abs(f1[0]).max() > 0

    def test_without_dealiasing_differs(self):
        st_ = random_state(6, 24, 2)
        a1, _ = ns.nonlinear_term(st_, ns.SimConfig(K=6, n=24))
        b1, _ = ns.nonlinear_term(st_, ns.SimConfig(K=6, n=24, dealias=False))
        assert np.abs(a1 - b1).max() > 1e-8 * np.abs(a1).max()


class TestZeroMode:
    def test_dirichlet_heat_mode(self):
        nu, dt, T = 1e-2, 1e-3, 1.0
        cfg = ns.SimConfig(nu=nu, K=2, n=48, dt=dt, nonlinear=False)
        model = ns._Model(cfg)
        g = model.grid
        st_ = ns.zero_state(2, 48)
        st_.omega[0] = np.sin(PI * (g.nodes + 1) / 2)
        f2 = np.zeros(48)
        for _ in range(int(round(T / dt))):
            st_.omega[0], st_.mean_u1 = ns.zero_mode_step(st_, dt, nu, f2, model=model)
        exact = np.exp(-nu * PI**2 / 4 * T) * np.sin(PI * (g.nodes + 1) / 2)
        assert np.abs(st_.omega[0] - exact).max() <= 1e-6

    def test_neumann_cosine_rate(self):
        nu, dt, T = 1e-2, 1e-2, 10.0
        g = build_grid(48)
        model = ns._Model(ns.SimConfig(nu=nu, K=1, n=48, dt=dt))
        st_ = ns.state_from_zero_velocity(g, np.cos(PI * (g.nodes + 1) / 2), 1)
        for _ in range(int(round(T / dt))):
            st_.omega[0], st_.mean_u1 = ns.zero_mode_step(st_, dt, nu, np.zeros(48), model=model)
        u = ns.zero_mode_velocity(g, st_.omega[0], st_.mean_u1)
        rate = -math.log(np.abs(u).max()) / T
        assert rate == pytest.approx(nu * PI**2 / 4, rel=1e-2)

    def test_constant_is_steady(self):
        g = build_grid(32)
        st_ = ns.state_from_zero_velocity(g, np.full(32, 0.3), 1)
        w0, m = ns.zero_mode_step(st_, 0.01, 1e-2, np.zeros(32))
        assert np.abs(w0).max() <= 1e-12 and m == pytest.approx(0.3, abs=1e-14)

    def test_mean_conserved_without_forcing(self):
        g = build_grid(32)
        st_ = ns.state_from_zero_velocity(g, np.cos(2 * g.nodes) + 0.7 * g.nodes**3, 1)
        m0 = st_.mean_u1
        model = ns._Model(ns.SimConfig(nu=1e-2, K=1, n=32))
        for _ in range(50):
            st_.omega[0], st_.mean_u1 = ns.zero_mode_step(st_, 0.01, 1e-2, np.zeros(32), model=model)
        assert st_.mean_u1 == m0


class TestStepping:
    def test_zero_state_stays_zero(self):
        cfg = ns.SimConfig(nu=1e-3, K=4, n=32, T=1.0)
        rec = ns.simulate(cfg, ns.zero_state(4, 32))
        assert not np.any(rec.final_state.omega)
        assert rec.max_energy == 0.0

    def test_reality_and_boundaries(self):
        cfg = ns.SimConfig(nu=1e-3, K=6, n=40, T=0.5, amplitude=1e-3)
        rec = ns.simulate(cfg)
        om = rec.final_state.omega
        assert not np.any(om[0].imag)
        assert not np.any(om[:, 0]) and not np.any(om[:, -1])
        assert rec.steps == 50

    def test_deterministic(self):
        cfg = ns.SimConfig(nu=1e-3, K=4, n=32, T=0.5, amplitude=1e-3)
        a, b = ns.simulate(cfg), ns.simulate(cfg)
        assert np.array_equal(a.final_state.omega, b.final_state.omega)
        assert np.array_equal(a.energy, b.energy)

    def test_cfl_violation(self):
        cfg = ns.SimConfig(nu=1e-3, K=16, n=32, dt=0.5, T=1.0)
        with pytest.raises(ValueError, match="advection"):
            ns.simulate(cfg, ns.zero_state(16, 32))

    def test_inviscid_transport_conserves_mode_norms(self):
        toggles = dict(diffusion=False, transport=True, nonlocal_=False)
        cfg = ns.SimConfig(nu=0.0, K=3, n=48, dt=0.01, T=2.0, nonlinear=False, toggles=toggles)
        st0 = random_state(3, 48, 4)
        st0.omega[0] = 0.0
        rec = ns.simulate(cfg, st0)
        w = build_grid(48).quad_weights
        before = np.sum(w * np.abs(st0.omega) ** 2, axis=1)
        after = np.sum(w * np.abs(rec.final_state.omega) ** 2, axis=1)
        assert np.abs(after - before).max() <= 1e-10 * before.max()

    def test_linear_modes_match_linear_propagator(self):
        nu, K, n, T, dt = 1e-3, 8, 64, 10.0, 0.01
        cfg = ns.SimConfig(nu=nu, K=K, n=n, dt=dt, T=T, amplitude=1e-8)
        rec = ns.simulate(cfg)
        init = ns.init_state(cfg)
        g = build_grid(n)
        err, ref_norm = 0.0, 0.0
        for k in range(1, K + 1):
            op = linop.assemble(g, nu, k)
            traj, _ = le.evolve(op, init.omega[k], T=T, dt=dt, c=0.0)
            ref = traj.states[-1]
            err = max(err, np.abs(rec.final_state.omega[k] - ref).max())
            ref_norm = max(ref_norm, np.abs(ref).max())
        assert err <= 1e-4 * ref_norm

    def test_quadratic_deviation_scaling(self):
        nu, K, n, T, dt = 1e-3, 8, 48, 5.0, 0.01

        def deviation(A):
            cfg = ns.SimConfig(nu=nu, K=K, n=n, dt=dt, T=T, amplitude=A)
            full = ns.simulate(cfg).final_state.omega
            lin = ns.simulate(cfg.replace(nonlinear=False)).final_state.omega
            return np.abs(full - lin).max()

        ratio = deviation(1e-6) / deviation(1e-7)
        assert ratio == pytest.approx(100.0, rel=0.3)


class TestEnergy:
    def test_matches_linear_space_time_norms(self):
        nu, n, T, dt = 1e-2, 48, 5.0, 0.01
        g = build_grid(n)
        st0 = ns.zero_state(2, n)
        st0.omega[1] = 1e-3 * np.sin(PI * g.nodes) * (1 + 0.3j * g.nodes)
        cfg = ns.SimConfig(nu=nu, K=2, n=n, dt=dt, T=T, nonlinear=False)
        b = ns.simulate(cfg, st0).breakdown()
        _, norms = le.evolve(linop.assemble(g, nu, 1), st0.omega[1], T=T, dt=dt, c=cfg.c)
        assert b.amp[1] == pytest.approx(norms.w_linf_l2, rel=1e-10)
        assert b.heat[1] == pytest.approx(math.sqrt(nu) * math.sqrt(norms.w_l2_l2), rel=1e-10)
        assert b.enh[1] == pytest.approx(nu**0.25 * math.sqrt(norms.w_l2_l2), rel=1e-10)
        assert b.invd[1] == pytest.approx(math.sqrt(norms.u_l2_l2), rel=1e-10)
        assert b.E[2] == 0.0

    def test_weight_only_increases_parts(self):
        cfg = ns.SimConfig(nu=1e-3, K=4, n=32, T=5.0, amplitude=1e-4)
        rec = ns.simulate(cfg, cs=[0.0, 0.05, 0.2])
        E = [rec.breakdown(c).E for c in (0.0, 0.05, 0.2)]
        assert np.all(E[0] <= E[1] * (1 + 1e-14)) and np.all(E[1] <= E[2] * (1 + 1e-14))
        assert rec.breakdown().c == 0.0
        with pytest.raises(KeyError):
            rec.breakdown(1.0)

    def test_zero_run(self):
        rec = ns.simulate(ns.SimConfig(nu=1e-3, K=3, n=24, T=1.0), ns.zero_state(3, 24))
        b, total = ns.energy_functional(rec)
        assert total == 0.0 and not np.any(b.E)


class TestBootstrap:
    def test_zero_run(self):
        rec = ns.simulate(ns.SimConfig(nu=1e-3, K=3, n=24, T=1.0), ns.zero_state(3, 24))
        rep = ns.verify_bootstrap(rec)
        assert rep["satisfied"] and rep["max_ratio"] == 0.0

    def test_min_inequality_exact(self):
        ok, failures = ns.min_inequality_sweep()
        assert ok and failures == []

    def test_min_inequality_branches(self):
        # enhanced branch binds for nu k^2 < 1 ... the heat branch for large k
        assert ns.min_inequality_holds("1e-4", 1)
        assert ns.min_inequality_holds("1e-1", 64)
        with pytest.raises(ValueError):
            ns.min_inequality_holds(0, 1)

    @pytest.mark.slow
    def test_stable_run_ratio_bounded_and_converged(self):
        nu = 1e-3
        A = 0.01 * nu ** (2 / 3)
        base = ns.SimConfig(nu=nu, K=16, n=96, dt=0.01, T=50.0, amplitude=A)
        r1 = ns.verify_bootstrap(ns.simulate(base))
        r2 = ns.verify_bootstrap(ns.simulate(base.replace(n=128, dt=0.005)))
        assert r1["max_ratio"] < 1e3
        assert r2["max_ratio"] == pytest.approx(r1["max_ratio"], rel=0.5)


class TestClassify:
    def test_zero_is_stable(self):
        rec = ns.simulate(ns.SimConfig(nu=1e-3, K=2, n=24, T=1.0), ns.zero_state(2, 24))
        assert ns.classify_outcome(rec) == ns.STABLE

    def _record(self, energies, diverged=False):
        class R:
            pass
        r = R()
        r.diverged = diverged
        r.initial_energy, r.max_energy, r.final_energy = energies
        return r

    def test_growth_is_transition(self):
        assert ns.classify_outcome(self._record((1.0, 1e3, 1e3))) == ns.TRANSITIONED

    def test_divergence_is_transition(self):
        assert ns.classify_outcome(self._record((1.0, 1.0, 1.0), diverged=True)) == ns.TRANSITIONED

    def test_inconclusive(self):
        assert ns.classify_outcome(self._record((1.0, 2.0, 0.5))) == ns.INCONCLUSIVE

    def test_decay_is_stable(self):
        assert ns.classify_outcome(self._record((1.0, 1.5, 1e-3))) == ns.STABLE

    @pytest.mark.slow
    def test_linear_regime_is_stable(self):
        rec = ns.simulate(ns.SimConfig(nu=1e-2, K=4, n=48, dt=0.01, amplitude=1e-8))
        assert ns.classify_outcome(rec) == ns.STABLE


class TestOutputs:
    def test_csv_and_snapshots(self, tmp_path):
        cfg = ns.SimConfig(nu=1e-3, K=3, n=24, T=0.2, amplitude=1e-4)
        rec = ns.simulate(cfg, snapshot_every=5)
        p = ns.write_run_csv(rec, tmp_path / "ts.csv")
        with open(p) as fh:
            rows = list(csv.reader(fh))
        assert rows[0][:3] == ["t", "energy", "amp_1"] and rows[0][-1] == "sobolev_proxy"
        assert len(rows) == len(rec.times) + 1
        snap = read_snapshots(ns.write_run_snapshots(rec, tmp_path / "s.cstb"))
        assert snap.n == 24 and len(snap.times) == len(rec.snapshots)

    def test_no_snapshots(self, tmp_path):
        rec = ns.simulate(ns.SimConfig(nu=1e-3, K=2, n=24, T=0.1), ns.zero_state(2, 24))
        assert ns.write_run_snapshots(rec, tmp_path / "s.cstb") is None
