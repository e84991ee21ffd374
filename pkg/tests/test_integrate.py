from dataclasses import replace
from types import SimpleNamespace

import numpy as np
import pytest
from scipy.linalg import expm

from mbloch.integrate import (
    IntegrationError,
    IntegratorConfig,
    Trajectory,
    _drive_rk45,
    integrate,
    integrate_with_variational,
    molecule_norm_error,
    rabi_reference,
    read_trajectory_csv,
    trajectory_header,
    write_trajectory_csv,
)
from mbloch.model import (
    FullState,
    PumpConfig,
    ReducedState,
    SystemParams,
    ValidationError,
)

from conftest import random_full, random_reduced


class TestIntegratorConfig:
    def test_defaults(self):
        cfg = IntegratorConfig()
        assert cfg.method == "rk45"
        assert not cfg.renormalize

    @pytest.mark.parametrize(
        "kwargs, match",
        [
            ({"method": "euler"}, "method"),
            ({"abs_tol": 0.0}, "abs_tol"),
            ({"rel_tol": -1e-9}, "rel_tol"),
            ({"step": 0.0}, "step"),
            ({"max_step": 0.0}, "max_step"),
            ({"sample_stride": 0}, "sample_stride"),
            ({"sample_stride": 1.5}, "sample_stride"),
        ],
    )
    def test_rejects_bad_values(self, kwargs, match):
        with pytest.raises(ValidationError, match=match):
            IntegratorConfig(**kwargs)


class TestClosedForms:
    def test_undamped_oscillator(self, zero_pump, tight):
        params = SystemParams(Omega=1.0, sigma=0.0, omega1=0.0, omega2=1.0, q=0.0)
        y0 = ReducedState(A=1.0, B=0.0, s=np.array([[1.0, 0.0, 0.0]]))
        traj = integrate("reduced", params, zero_pump, tight, y0, 0.0, 2.0 * np.pi)
        assert abs(traj.states[-1, 0] - 1.0) < 1e-8
        assert abs(traj.states[-1, 1]) < 1e-8

    def test_damped_oscillator(self, zero_pump, tight):
        params = SystemParams(Omega=1.0, sigma=0.1, omega1=0.0, omega2=1.0, q=0.0)
        sigma = params.sigma
        om_d = np.sqrt(params.Omega**2 - sigma**2 / 4.0)
        y0 = ReducedState(A=1.0, B=0.0, s=np.array([[1.0, 0.0, 0.0]]))
        traj = integrate(
            "reduced", params, zero_pump, tight, y0, 0.0, 30.0, n_samples=16
        )
        t = traj.times
        expect = np.exp(-sigma * t / 2.0) * (
            np.cos(om_d * t) + (sigma / (2.0 * om_d)) * np.sin(om_d * t)
        )
        assert np.max(np.abs(traj.states[:, 0] - expect)) < 1e-8

    def test_empty_interval(self, sample_params, sample_pump, quick, rng):
        x = random_full(rng)
        traj = integrate("full", sample_params, sample_pump, quick, x, 1.5, 1.5)
        assert traj.n_samples == 1
        assert traj.times[0] == 1.5
        assert np.array_equal(traj.states[0], x.to_vector())
        assert traj.meta["n_steps"] == 0


class TestSampling:
    def test_uniform_grid(self, sample_params, sample_pump, quick, rng):
        x = random_full(rng)
        traj = integrate(
            "full", sample_params, sample_pump, quick, x, 0.0, 4.0, n_samples=9
        )
        assert np.array_equal(traj.times, np.linspace(0.0, 4.0, 9))

    def test_stride_keeps_endpoints(self, sample_params, sample_pump, rng):
        cfg = IntegratorConfig(abs_tol=1e-8, rel_tol=1e-8, sample_stride=5)
        x = random_full(rng)
        traj = integrate("full", sample_params, sample_pump, cfg, x, 0.0, 6.0)
        assert traj.times[0] == 0.0
        assert traj.times[-1] == 6.0
        assert np.all(np.diff(traj.times) > 0.0)

    def test_reports_steps_and_drift(self, sample_params, sample_pump, quick, rng):
        x = random_full(rng)
        traj = integrate("full", sample_params, sample_pump, quick, x, 0.0, 5.0)
        assert traj.meta["n_steps"] > 0
        assert 0.0 <= traj.norm_drift < 1e-6

    def test_rejects_reversed_interval(self, sample_params, sample_pump, quick, rng):
        with pytest.raises(ValidationError, match="precede"):
            integrate(
                "full", sample_params, sample_pump, quick, random_full(rng), 1.0, 0.0
            )

    def test_rejects_state_kind_mismatch(self, sample_params, sample_pump, quick, rng):
        with pytest.raises(ValidationError, match="FullState"):
            integrate(
                "full", sample_params, sample_pump, quick, random_reduced(rng), 0.0, 1.0
            )

    def test_modified_requires_config(self, sample_params, sample_pump, quick, rng):
        with pytest.raises(ValidationError, match="ModifiedFieldConfig"):
            integrate(
                "modified",
                sample_params,
                sample_pump,
                quick,
                random_reduced(rng),
                0.0,
                1.0,
            )

    def test_trajectory_rejects_unsorted_times(self, quick):
        with pytest.raises(ValidationError, match="increasing"):
            Trajectory(
                kind="reduced",
                times=np.array([0.0, 2.0, 1.0]),
                states=np.zeros((3, 5)),
                params_digest="x",
                integrator=quick,
                norm_drift=0.0,
            )


class TestRenormalize:
    def test_projects_molecule_norms(self, sample_params, sample_pump, rng):
        x = random_full(rng)
        loose = IntegratorConfig(abs_tol=1e-6, rel_tol=1e-6)
        raw = integrate("full", sample_params, sample_pump, loose, x, 0.0, 50.0)
        snapped = integrate(
            "full",
            sample_params,
            sample_pump,
            replace(loose, renormalize=True),
            x,
            0.0,
            50.0,
        )
        assert snapped.norm_drift < 1e-13
        assert raw.norm_drift > snapped.norm_drift


class TestFailure:
    def test_step_underflow_reported(self, quick):
        # quadratic blow-up at t = 1 forces the adaptive driver to fail
        def rhs(t, y):
            return y * y

        with pytest.raises(IntegrationError, match="step"):
            _drive_rk45(rhs, np.array([1.0]), 0.0, 2.0, quick, None, lambda s: None)


class TestVariational:
    def test_decoupled_bloch_block_rotates(self, decoupled_params, zero_pump, tight):
        tau = 1.3
        omega = decoupled_params.omega
        y0 = ReducedState(A=0.2, B=-0.1, s=np.array([[0.6, 0.0, 0.8]]))
        _, J = integrate_with_variational(
            "reduced", decoupled_params, zero_pump, tight, y0, 0.0, tau
        )
        c, s = np.cos(omega * tau), np.sin(omega * tau)
        expect = np.array([[c, s, 0.0], [-s, c, 0.0], [0.0, 0.0, 1.0]])
        assert np.max(np.abs(J[2:, 2:] - expect)) < 1e-9
        assert np.max(np.abs(J[2:, :2])) < 1e-9
        assert np.max(np.abs(J[:2, 2:])) < 1e-9

    def test_decoupled_maxwell_block_is_exponential(
        self, decoupled_params, zero_pump, tight
    ):
        tau = 2.7
        y0 = ReducedState(A=1.0, B=0.5, s=np.array([[0.0, 0.0, 1.0]]))
        _, J = integrate_with_variational(
            "reduced", decoupled_params, zero_pump, tight, y0, 0.0, tau
        )
        gen = np.array([[0.0, 1.0], [-decoupled_params.Omega**2, -decoupled_params.sigma]])
        assert np.max(np.abs(J[:2, :2] - expm(tau * gen))) < 1e-9

    def test_orientation_preserved(self, sample_params, sample_pump, tight, rng):
        y0 = random_reduced(rng)
        for tau in (0.5, 2.0, 7.0):
            _, J = integrate_with_variational(
                "reduced", sample_params, sample_pump, tight, y0, 0.0, tau
            )
            assert np.linalg.det(J) > 0.0

    def test_columns_match_flow_differences(self, sample_params, sample_pump, tight, rng):
        tau = 2.0
        y0 = random_reduced(rng)
        _, J = integrate_with_variational(
            "reduced", sample_params, sample_pump, tight, y0, 0.0, tau
        )
        v0 = y0.to_vector()
        h = 1e-6

        def flow(vec):
            state = ReducedState.from_vector(vec, tol=1e-3)
            traj = integrate(
                "reduced", sample_params, sample_pump, tight, state, 0.0, tau
            )
            return traj.states[-1]

        for i in range(v0.size):
            e = np.zeros_like(v0)
            e[i] = h
            col = (flow(v0 + e) - flow(v0 - e)) / (2.0 * h)
            scale = max(1.0, float(np.max(np.abs(col))))
            assert np.max(np.abs(J[:, i] - col)) / scale < 1e-5

    def test_fixed_step_agrees(self, sample_params, sample_pump, tight):
        y0 = ReducedState(A=0.3, B=0.0, s=np.array([[0.0, 0.6, 0.8]]))
        rk4 = IntegratorConfig(method="rk4", step=1e-3)
        ya, Ja = integrate_with_variational(
            "reduced", sample_params, sample_pump, tight, y0, 0.0, 2.0
        )
        yb, Jb = integrate_with_variational(
            "reduced", sample_params, sample_pump, rk4, y0, 0.0, 2.0
        )
        assert np.max(np.abs(ya.to_vector() - yb.to_vector())) < 1e-6
        assert np.max(np.abs(Ja - Jb)) < 1e-6

    def test_empty_interval_is_identity(self, sample_params, sample_pump, tight, rng):
        y0 = random_reduced(rng)
        y1, J = integrate_with_variational(
            "reduced", sample_params, sample_pump, tight, y0, 1.0, 1.0
        )
        assert y1 is y0
        assert np.array_equal(J, np.eye(5))

    def test_full_kind_rejected(self, sample_params, sample_pump, tight, rng):
        with pytest.raises(ValidationError, match="reduced"):
            integrate_with_variational(
                "full", sample_params, sample_pump, tight, random_reduced(rng), 0.0, 1.0
            )


class TestRabiReference:
    def test_resonant_inversion(self):
        # degenerate levels make the propagator a pure (u, v) rotation
        params = SimpleNamespace(hbar=1.0, omega1=0.0, omega2=0.0)
        C = rabi_reference(params, 1.0, np.array([1.0, 0.0]), np.pi / 2.0)
        assert np.max(np.abs(C - np.array([0.0, -1.0]))) < 1e-12

    def test_free_phase_rotation(self):
        params = SystemParams(Omega=1.0, sigma=0.1, omega1=0.7, omega2=1.2, q=0.2)
        t = 0.9
        C = rabi_reference(params, 0.0, np.array([1.0, 0.0]), t)
        assert abs(C[0] - np.exp(-1j * 0.7 * t)) < 1e-12
        assert abs(C[1]) < 1e-15

    def test_matches_frozen_field_integration(self, tight):
        # zero current weight pins (A, B) at the origin, so the pump
        # offset alone sets a constant coupling
        params = SystemParams(
            Omega=1.0, sigma=0.1, omega1=0.3, omega2=1.1, q=1.0, kappa=(0.0,)
        )
        pump = PumpConfig(Omega_p=1.0, offset=0.37)
        C0 = np.array([0.6 + 0j, 0.8j])
        x0 = FullState(A=0.0, B=0.0, C=C0[None, :])
        traj = integrate("full", params, pump, tight, x0, 0.0, 5.0)
        final = traj.states[-1]
        got = np.array([final[2] + 1j * final[3], final[4] + 1j * final[5]])
        expect = rabi_reference(params, 0.37, C0, 5.0)
        assert np.max(np.abs(got - expect)) < 1e-8

    def test_unitary(self):
        params = SystemParams(Omega=1.0, sigma=0.1, omega1=0.3, omega2=1.1, q=0.2)
        t = np.linspace(0.0, 20.0, 50)
        C = rabi_reference(params, 0.8, np.array([0.6, 0.8j]), t)
        charge = np.sum(np.abs(C) ** 2, axis=1)
        assert np.max(np.abs(charge - 1.0)) < 1e-14

    def test_rejects_bad_shape(self, sample_params):
        with pytest.raises(ValidationError, match="shape"):
            rabi_reference(sample_params, 1.0, np.array([1.0, 0.0, 0.0]), 1.0)


class TestConvergenceOrder:
    def test_rk4_is_fourth_order(self):
        params = SystemParams(
            Omega=1.0, sigma=0.1, omega1=0.3, omega2=1.1, q=1.0, kappa=(0.0,)
        )
        pump = PumpConfig(Omega_p=1.0, offset=0.37)
        C0 = np.array([0.6 + 0j, 0.8j])
        x0 = FullState(A=0.0, B=0.0, C=C0[None, :])
        expect = rabi_reference(params, 0.37, C0, 2.0)
        errors = []
        steps = [0.2, 0.1, 0.05, 0.025, 0.0125]
        for h in steps:
            cfg = IntegratorConfig(method="rk4", step=h)
            traj = integrate("full", params, pump, cfg, x0, 0.0, 2.0)
            final = traj.states[-1]
            got = np.array([final[2] + 1j * final[3], final[4] + 1j * final[5]])
            errors.append(np.max(np.abs(got - expect)))
        slope = np.polyfit(np.log(steps), np.log(errors), 1)[0]
        assert slope >= 3.8
        assert slope <= 4.5


class TestConservation:
    def test_long_run_drift_stays_small(self, sample_params, sample_pump, rng):
        cfg = IntegratorConfig(abs_tol=1e-10, rel_tol=1e-10, max_step=0.015)
        x = random_full(rng)
        span = 20.0 * sample_pump.period
        traj = integrate("full", sample_params, sample_pump, cfg, x, 0.0, span)
        assert traj.norm_drift < 1e-9

    def test_drift_matches_helper(self, sample_params, sample_pump, quick, rng):
        traj = integrate(
            "full", sample_params, sample_pump, quick, random_full(rng), 0.0, 3.0
        )
        assert traj.norm_drift == molecule_norm_error("full", traj.states)


class TestCsv:
    def test_headers(self):
        assert trajectory_header("reduced", 2) == [
            "t", "A", "B", "u1", "v1", "w1", "u2", "v2", "w2",
        ]
        assert trajectory_header("full", 1) == [
            "t", "A", "B", "reC11", "imC11", "reC12", "imC12",
        ]

    @pytest.mark.parametrize("kind", ["full", "reduced"])
    def test_round_trip(self, kind, sample_params, sample_pump, quick, rng, tmp_path):
        state = random_full(rng) if kind == "full" else random_reduced(rng)
        traj = integrate(kind, sample_params, sample_pump, quick, state, 0.0, 2.0)
        path = tmp_path / "traj.csv"
        write_trajectory_csv(traj, path)
        kind_read, times, states = read_trajectory_csv(path)
        assert kind_read == kind
        assert np.array_equal(times, traj.times)
        assert np.array_equal(states, traj.states)

    def test_read_rejects_foreign_csv(self, tmp_path):
        path = tmp_path / "other.csv"
        path.write_text("x,y\n1,2\n")
        with pytest.raises(ValidationError, match="trajectory"):
            read_trajectory_csv(path)
