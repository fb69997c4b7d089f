"""Time-domain simulation checked against frequency-domain oracles.

The dq circuit blocks all have the rotationally symmetric form a*I + b*J,
so the whole state-space model collapses to complex scalars (d + jq).  The
oracles below rebuild the nominal model that way and predict the periodic
steady-state response through DFT multiplication — a path that shares no
matrix code with the integrator under test.
"""

import numpy as np
import pytest

from gridarx.circuit import CircuitParams, full_circuit_model
from gridarx.pipeline import identify
from gridarx.simulate import (
    DisturbanceSpec,
    SimResult,
    _discretize,
    equilibrium,
    simulate,
)
from gridarx.signals import RbsConfig


def scalar_nominal_model(params):
    """Complex-scalar (A, B, C) of the nominal circuit in seconds."""
    wb = params.omega_base
    r1, c1 = params.r1, params.c1
    r23 = params.r2 + params.r3
    l23 = params.l2 + params.l3
    A = wb * np.array(
        [
            [-1.0 / (r1 * c1) - 1j, -1.0 / c1],
            [1.0 / l23, -r23 / l23 - 1j],
        ]
    )
    B = wb * np.array([1.0 / c1, 0.0])
    C = np.array([1.0, 0.0])
    return A, B, C


def scalar_discrete_tf(params, ts, z):
    """H_d(z) of the trapezoidal step, derived via the bilinear identity
    H_d(z) = 2/(z+1) * C (s'I - A)^-1 B with s' = (2/ts)(z-1)/(z+1)."""
    A, B, C = scalar_nominal_model(params)
    s = (2.0 / ts) * (z - 1.0) / (z + 1.0)
    resolvent = np.linalg.solve(s * np.eye(2) - A, B)
    return (2.0 / (z + 1.0)) * (C @ resolvent)


class TestDisturbanceSpec:
    def test_validation(self):
        with pytest.raises(ValueError):
            DisturbanceSpec("fault", 1.0, 5.0, 5.0)
        with pytest.raises(ValueError):
            DisturbanceSpec("fault", 0.0, 1.0, 2.0)
        with pytest.raises(ValueError):
            DisturbanceSpec("breaker", 1.0, 1.0, 2.0)

    def test_unit_conversions(self, params):
        d = DisturbanceSpec.fault_from_ohms(600.0, params, 1.0, 2.0)
        assert d.value_pu == pytest.approx(600.0 / params.z_base)
        lh = 0.35 * params.z_base / params.omega_base
        d = DisturbanceSpec.load_from_henries(lh, params, 1.0, 2.0)
        assert d.value_pu == pytest.approx(0.35)


class TestEquilibrium:
    def test_satisfies_balance(self, params):
        m = full_circuit_model(params, None)
        x = equilibrium(m, (1.0, 0.0), (1.0, 0.0))
        rhs = m.A @ x + m.B @ [1.0, 0.0] + m.E @ [1.0, 0.0]
        assert np.linalg.norm(rhs) < 1e-12

    def test_quiet_run_is_flat(self, params):
        sim = simulate(params, None, None, 0.1, noise_std=0.0)
        assert np.all(np.abs(np.diff(sim.v_dq, axis=0)) < 1e-9)
        assert np.all(np.abs(np.diff(sim.i_dq, axis=0)) < 1e-15)

    def test_quiet_run_matches_equilibrium_value(self, params):
        sim = simulate(params, None, None, 0.05, noise_std=0.0)
        m = full_circuit_model(params, None)
        x = equilibrium(m, (1.0, 0.0), (1.0, 0.0))
        assert np.allclose(sim.v_dq[0], m.C @ x, atol=1e-12)


class TestValidation:
    def test_bad_duration_and_step(self, params):
        with pytest.raises(ValueError):
            simulate(params, None, None, 0.0)
        with pytest.raises(ValueError):
            simulate(params, None, None, 1.0, ts=-1e-4)


class TestDeterminism:
    def test_identical_seeds_identical_output(self, params):
        kw = dict(duration=0.5, noise_std=1e-4, noise_seed=4)
        a = simulate(params, None, RbsConfig(seed=2), **kw)
        b = simulate(params, None, RbsConfig(seed=2), **kw)
        assert np.array_equal(a.v_dq, b.v_dq)
        assert np.array_equal(a.i_dq, b.i_dq)

    def test_noise_seed_changes_output(self, params):
        a = simulate(params, None, None, 0.2, noise_seed=1)
        b = simulate(params, None, None, 0.2, noise_seed=2)
        assert not np.array_equal(a.v_dq, b.v_dq)


class TestFrequencyDomainOracle:
    def test_square_wave_periodic_steady_state(self, params):
        """Drive the integrator with a periodic square-wave current
        perturbation; the settled final period must match the DFT
        prediction from the complex-scalar transfer function within 1%."""
        ts = 2e-4
        period = 250  # 50 ms
        n_periods = 40
        u_per = np.where(np.arange(period) < period // 2, 1.0, -1.0) * 0.1

        m = full_circuit_model(params, None)
        F, Gb, _ = _discretize(m, ts)
        x = np.zeros(m.A.shape[0])
        v = np.empty(period * n_periods, dtype=complex)
        for k in range(v.size):
            y = m.C @ x
            v[k] = y[0] + 1j * y[1]
            x = F @ x + Gb @ [u_per[k % period], 0.0]

        last = v[-period:]
        U = np.fft.fft(u_per)
        z = np.exp(2j * np.pi * np.arange(period) / period)
        H = np.array([scalar_discrete_tf(params, ts, zk) for zk in z])
        expect = np.fft.ifft(H * U)
        err = np.max(np.abs(last - expect)) / np.max(np.abs(expect))
        assert err < 0.01

    def test_discretization_matches_continuous_at_low_frequency(self, params):
        """At frequencies well below Nyquist the trapezoidal transfer must
        track the continuous-time impedance, up to the half-sample delay of
        the held input."""
        ts = 2e-4
        A, B, C = scalar_nominal_model(params)
        for f in [1.0, 10.0, 50.0]:
            s = 2j * np.pi * f
            h_ct = C @ np.linalg.solve(s * np.eye(2) - A, B)
            h_dt = scalar_discrete_tf(params, ts, np.exp(s * ts))
            h_dt *= np.exp(0.5 * s * ts)  # undo the input-hold delay
            assert abs(h_dt - h_ct) / abs(h_ct) < 2e-3


class TestIdentifiedTransferFunction:
    def test_arx_matches_circuit_up_to_tenth_nyquist(self, noiseless_run,
                                                     params):
        """The converged lattice of lag matrices must reproduce the discrete
        circuit transfer function across the identification band."""
        sim, run = noiseless_run
        theta = run.final_state.theta
        order = 3
        m = full_circuit_model(params, None)
        F, Gb, _ = _discretize(m, sim.ts)
        nx = F.shape[0]

        fs = 1.0 / sim.ts
        for f in np.linspace(2.0, fs / 20.0, 15):
            z = np.exp(2j * np.pi * f * sim.ts)
            h_true = m.C @ np.linalg.solve(z * np.eye(nx) - F, Gb)
            a_sum = np.zeros((2, 2), dtype=complex)
            b_sum = np.zeros((2, 2), dtype=complex)
            for lag in range(1, order + 1):
                zl = z ** (-lag)
                a_sum += theta[:, 2 * (lag - 1) : 2 * lag] * zl
                cols = 2 * order + 2 * (lag - 1)
                b_sum += theta[:, cols : cols + 2] * zl
            h_arx = np.linalg.solve(np.eye(2) - a_sum, b_sum)
            err = np.linalg.norm(h_arx - h_true) / np.linalg.norm(h_true)
            assert err < 0.02


class TestTopologySwitch:
    def test_vanishing_fault_leaves_trajectory_unchanged(self, params):
        """A near-open fault branch exercises the switch path without
        physics: trajectories must agree with the undisturbed run."""
        exc = RbsConfig(seed=3)
        base = simulate(params, None, exc, 1.0, noise_std=0.0)
        dist = DisturbanceSpec("fault", 1e9, 0.3, 0.7)
        switched = simulate(params, dist, exc, 1.0, noise_std=0.0)
        assert np.max(np.abs(switched.v_dq - base.v_dq)) < 1e-6

    def test_fault_window_deviation_and_recovery(self, params):
        dist = DisturbanceSpec.fault_from_ohms(20.0, params, 0.5, 1.0)
        sim = simulate(params, dist, None, 1.5, noise_std=0.0)
        pre = sim.v_dq[sim.t < 0.5]
        during = sim.v_dq[(sim.t >= 0.6) & (sim.t < 1.0)]
        post = sim.v_dq[sim.t > 1.4]
        assert np.max(np.abs(during - pre[-1])) > 0.1
        assert np.max(np.abs(post - pre[-1])) < 1e-3

    def test_load_window_deviation(self, params):
        dist = DisturbanceSpec("load", 0.35, 0.5, 1.0)
        sim = simulate(params, dist, None, 1.5, noise_std=0.0)
        during = sim.v_dq[(sim.t >= 0.9) & (sim.t < 1.0)]
        assert np.max(np.abs(during - sim.v_dq[0])) > 0.05


class TestIdentificationResidual:
    def test_noiseless_residual_under_five_percent(self, noiseless_run):
        _, run = noiseless_run
        assert run.residual_ratio(run.final_state.theta) < 0.05

    def test_samples_iterator_round_trip(self, params):
        sim = simulate(params, None, None, 0.01, noise_std=0.0)
        first = next(iter(sim.samples()))
        assert np.array_equal(first.v_dq, sim.v_dq[0])
        assert first.t == 0.0
