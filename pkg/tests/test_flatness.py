import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from softlanding.errors import (
    ConfigError,
    FluxSingularityError,
    InfeasibleTrajectoryError,
    SaturationError,
)
from softlanding.flatness import (
    EPS_RAD,
    ControlSignal,
    HoldConfig,
    PreChargeConfig,
    constant_signal,
    flat_flux,
    flat_flux_rate,
    flat_voltage,
    flux_radicand,
    hold_flux,
    static_voltage,
    synthesize_signal,
)
from softlanding.model import (
    magnetic_force,
    passive_force,
    reluctance_core,
    reluctance_gap,
    reluctance_gap_d1,
    reluctance_gap_d2,
)
from softlanding.trajectory import design_quintic, evaluate

TRAJ = design_quintic(1e-3, 0.0, 0.0, 3.5e-3)


def ref(t):
    return [evaluate(TRAJ, t, k) for k in range(4)]


def test_table1_flux_exceeds_saturation(table1):
    assert math.sqrt(flux_radicand(1e-3, 0.0, table1)) == pytest.approx(3.842, abs=1e-3)
    with pytest.raises(SaturationError):
        flat_flux(1e-3, 0.0, table1)


def test_desk_resting_flux(desk):
    lam = flat_flux(1e-3, 0.0, desk)
    assert lam < 0.5 * desk.kappa2
    assert magnetic_force(1e-3, lam, desk) == pytest.approx(-passive_force(1e-3, 0.0, desk), rel=1e-12)


def test_zero_radicand_gives_zero_flux(desk):
    # spring rest position with no acceleration
    assert flat_flux(desk.z_sp, 0.0, desk) == 0.0


def test_negative_radicand_is_infeasible(desk):
    with pytest.raises(InfeasibleTrajectoryError):
        flat_flux(5e-4, 1e4, desk)


def test_rate_is_zero_at_rest(desk):
    assert flat_flux_rate(5e-4, 0.0, 0.0, 0.0, desk) == 0.0


def test_rate_needs_flux_away_from_zero(desk):
    with pytest.raises(InfeasibleTrajectoryError):
        flat_flux_rate(desk.z_sp, 0.0, 0.0, 0.0, desk)
    # positive radicand under the floor: flux is defined, its rate is refused
    z_dd = (passive_force(5e-4, 0.0, desk) - 0.5 * 4e-19 * reluctance_gap_d1(5e-4, desk)) / desk.mass
    assert EPS_RAD > flux_radicand(5e-4, z_dd, desk) > 0.0
    assert flat_flux(5e-4, z_dd, desk) > 0.0
    with pytest.raises(InfeasibleTrajectoryError):
        flat_flux_rate(5e-4, 0.1, z_dd, 0.0, desk)


def test_singularity_guard(desk, monkeypatch):
    import softlanding.flatness as ff

    monkeypatch.setattr(ff, "EPS_RAD", 0.0)
    z_dd = (passive_force(5e-4, 0.0, desk) - 0.5 * 1e-20 * reluctance_gap_d1(5e-4, desk)) / desk.mass
    with pytest.raises(FluxSingularityError):
        ff.flat_flux_rate(5e-4, 0.1, z_dd, 0.0, desk)


def test_inversion_reproduces_acceleration(desk):
    for t in np.linspace(0.05e-3, 3.45e-3, 50):
        z, zd, zdd, _ = ref(t)
        lam = flat_flux(z, zdd, desk)
        acc = (passive_force(z, zd, desk) + magnetic_force(z, lam, desk)) / desk.mass
        assert acc == pytest.approx(zdd, rel=1e-9, abs=1e-9 * 1e3)


def test_flux_rate_matches_time_difference(desk):
    h = 1e-9
    for t in np.linspace(0.05e-3, 3.45e-3, 50):
        z, zd, zdd, zddd = ref(t)
        lp = flat_flux(evaluate(TRAJ, t + h), evaluate(TRAJ, t + h, 2), desk)
        lm = flat_flux(evaluate(TRAJ, t - h), evaluate(TRAJ, t - h, 2), desk)
        rate = flat_flux_rate(z, zd, zdd, zddd, desk)
        assert rate == pytest.approx((lp - lm) / (2 * h), rel=1e-5, abs=1e-5 * 5.0)


def test_flux_rate_formula_independent(desk):
    t = 1.2e-3
    z, zd, zdd, zddd = ref(t)
    lam = math.sqrt(2 * (-desk.k_sp * (z - desk.z_sp) - desk.mass * zdd) / reluctance_gap_d1(z, desk))
    expected = (-desk.k_sp * zd - desk.mass * zddd - 0.5 * reluctance_gap_d2(z, desk) * zd * lam**2) / (
        lam * reluctance_gap_d1(z, desk)
    )
    assert flat_flux_rate(z, zd, zdd, zddd, desk) == pytest.approx(expected, rel=1e-12)
    u = desk.resistance * (reluctance_gap(z, desk) + reluctance_core(lam, desk)) * lam + expected
    assert flat_voltage(z, zd, zdd, zddd, desk) == pytest.approx(u, rel=1e-12)


def test_static_voltage(desk):
    lam = flat_flux(7e-4, 0.0, desk)
    assert flat_voltage(7e-4, 0.0, 0.0, 0.0, desk) == pytest.approx(static_voltage(7e-4, lam, desk), rel=1e-15)


def test_hold_flux_capped(desk):
    assert hold_flux(0.0, desk, 1.2) == pytest.approx(1.2 * flat_flux(0.0, 0.0, desk))
    assert hold_flux(1e-3, desk, 10.0) == pytest.approx(0.95 * desk.lambda_sat)


class TestSignal:
    def test_phase_sample_counts(self, desk):
        sig = synthesize_signal(TRAJ, desk, 1e-6)
        assert sig.phase_marks == (2000, 5500)
        assert len(sig) == 7500
        assert sig.t_start == pytest.approx(-2e-3)
        sig2 = synthesize_signal(TRAJ, desk, 2e-6)
        assert sig2.phase_marks[1] - sig2.phase_marks[0] == 1750

    def test_precharge_starts_near_zero_and_meets_tracking(self, desk):
        dt = 5e-7
        sig = synthesize_signal(TRAJ, desk, dt)
        a, b = sig.phase_marks
        assert abs(sig.samples[0]) < 1e-4
        u_t0 = flat_voltage(*ref(0.5 * dt), desk)
        assert sig.samples[a] == pytest.approx(u_t0, rel=1e-12)
        # pre-charge ends at the static voltage of the starting flux
        assert sig.samples[a - 1] == pytest.approx(static_voltage(1e-3, flat_flux(1e-3, 0.0, desk), desk), rel=1e-6)
        assert sig.samples[a] == pytest.approx(sig.samples[a - 1], rel=2e-2)

    def test_precharge_keeps_armature_on_stop(self, desk):
        sig = synthesize_signal(TRAJ, desk, 5e-7)
        a = sig.phase_marks[0]
        lam0 = flat_flux(1e-3, 0.0, desk)
        s = (np.arange(a) + 0.5) / a
        lam = lam0 * s**3 * (10 - 15 * s + 6 * s**2)
        fmag = np.array([abs(magnetic_force(1e-3, x, desk)) for x in lam])
        assert np.all(fmag <= abs(passive_force(1e-3, 0.0, desk)) * (1 + 1e-12))

    def test_tracking_samples_are_midpoint_voltages(self, desk):
        dt = 1e-6
        sig = synthesize_signal(TRAJ, desk, dt)
        a, b = sig.phase_marks
        for j in (0, 100, 1750, 3499):
            assert sig.samples[a + j] == pytest.approx(flat_voltage(*ref((j + 0.5) * dt), desk), rel=1e-12)

    def test_hold_levels(self, desk):
        sig = synthesize_signal(TRAJ, desk, 1e-6, hold_cfg=HoldConfig(1.2, 1e-3))
        hold = sig.samples[sig.phase_slice("hold")]
        lam = 1.2 * flat_flux(0.0, 0.0, desk)
        assert np.all(hold == pytest.approx(static_voltage(0.0, lam, desk)))
        opening = design_quintic(0.0, 1e-3, 0.0, 3.5e-3)
        sig_o = synthesize_signal(opening, desk, 1e-6)
        assert np.all(sig_o.samples[sig_o.phase_slice("hold")] == 0.0)
        # opening pre-charge starts from the closed-hold flux
        assert sig_o.samples[0] == pytest.approx(static_voltage(0.0, lam, desk), rel=1e-3)

    def test_infeasible_reports_first_time(self, desk):
        fast = design_quintic(0.0, 1e-3, 0.0, 5e-4)
        with pytest.raises(InfeasibleTrajectoryError) as err:
            synthesize_signal(fast, desk, 1e-6)
        t = err.value.time
        assert 0.0 < t < 2.5e-4
        z, zd, zdd = (evaluate(fast, t, k) for k in range(3))
        assert flux_radicand(z, zdd, desk) < EPS_RAD
        z, zd, zdd = (evaluate(fast, t - 1e-6, k) for k in range(3))
        assert flux_radicand(z, zdd, desk) >= EPS_RAD

    def test_saturation_on_table1(self, table1):
        with pytest.raises(SaturationError):
            synthesize_signal(TRAJ, table1, 1e-6)

    def test_csv_roundtrip(self, desk, tmp_path):
        sig = synthesize_signal(TRAJ, desk, 2e-6, PreChargeConfig(1e-4), HoldConfig(1.2, 1e-4))
        path = tmp_path / "sig.csv"
        sig.to_csv(path)
        back = ControlSignal.from_csv(path)
        np.testing.assert_array_equal(back.samples, sig.samples)
        assert back.phase_marks == sig.phase_marks
        assert back.t_start == sig.t_start
        assert back.dt == pytest.approx(sig.dt, rel=1e-9)
        header = path.read_text().splitlines()[0]
        assert header == "time_s,voltage_V,phase"

    def test_csv_errors(self, tmp_path):
        bad = tmp_path / "bad.csv"
        bad.write_text("time_s,voltage_V,phase\n0.0,1.0,hold\n1e-6,1.0,pre\n")
        with pytest.raises(ConfigError):
            ControlSignal.from_csv(bad)
        with pytest.raises(ConfigError):
            ControlSignal.from_csv(tmp_path / "missing.csv")

    def test_signal_validation(self):
        with pytest.raises(ValueError):
            ControlSignal(0.0, 1e-6, [1.0, math.nan], (0, 0))
        with pytest.raises(ValueError):
            ControlSignal(0.0, 1e-6, [1.0], (1, 0))
        sig = constant_signal(30.0, 1e-5, 1e-6)
        assert len(sig) == 10 and np.all(sig.samples == 30.0)
        with pytest.raises(ValueError):
            sig.samples[0] = 1.0


@settings(max_examples=25, deadline=None)
@given(st.floats(2.5e-3, 10e-3), st.floats(0.1, 0.9))
def test_inversion_identity_on_random_references(T, frac):
    from softlanding.model import load_params

    p = load_params("desk_default")
    traj = design_quintic(1e-3, 0.0, 0.0, T)
    t = frac * T
    z, zd, zdd, _ = (evaluate(traj, t, k) for k in range(4))
    lam = flat_flux(z, zdd, p)
    acc = (passive_force(z, zd, p) + magnetic_force(z, lam, p)) / p.mass
    assert acc == pytest.approx(zdd, rel=1e-9, abs=1e-6)
