import csv
import json

import numpy as np
import pytest

from paracalc.droplet import DropletState
from paracalc.sim import (BlowUpError, NonOscillatoryError, SimConfig, Trajectory, center_integral,
                          dispersion_probe, hamiltonian, kinetic_energy, momentum, project_center,
                          project_volume, simulate, step, volume)
from paracalc.sphere import SphereFunction
from paracalc.wigner import DomainError

V0 = 4 * np.pi / 3


def Y(L, l, m, a=1.0):
    return SphereFunction.real_harmonic(L, l, m, a)


def const(L, c):
    return SphereFunction.harmonic(L, 0, 0, c * np.sqrt(4 * np.pi))


# ------------------------------------------------------------------ config

@pytest.mark.parametrize("bad", [{"dt": 0.0}, {"dt": 0.1, "t_end": 0.05}, {"integrator": "euler"},
                                 {"system": "other"}])
def test_config_validation(bad):
    with pytest.raises(ValueError):
        SimConfig(**bad)


def test_config_from_json():
    cfg = SimConfig.from_json({"dt": 0.01, "t_end": 0.1, "L": 6})
    assert (cfg.dt, cfg.L, cfg.system) == (0.01, 6, "full")
    with pytest.raises(ValueError):
        SimConfig.from_json({"dt": 0.01, "unknown": 1})


# ------------------------------------------------------- conserved quantities

def test_volume_examples():
    assert volume(DropletState.rest(4)) == pytest.approx(V0, rel=1e-14)
    c = 0.07
    assert volume(DropletState(const(4, c), SphereFunction.zeros(4))) == pytest.approx(V0 * (1 + c) ** 3, rel=1e-13)


def test_hamiltonian_and_momentum_at_rest():
    st = DropletState.rest(4)
    assert hamiltonian(st) == pytest.approx(4 * np.pi, rel=1e-14)
    assert kinetic_energy(st) == 0
    assert np.abs(momentum(st)).max() == 0
    assert np.abs(center_integral(st)).max() < 1e-14


def test_kinetic_energy_of_pure_mode():
    # (1/2) int phi D phi over the unit sphere: n |c|^2 / 2 for phi = c Y_n
    st = DropletState(SphereFunction.zeros(4), Y(4, 3, 1, 0.2))
    assert kinetic_energy(st) == pytest.approx(0.5 * 3 * 0.04, rel=1e-10)


def test_project_volume_examples():
    st = DropletState.rest(4)
    assert np.abs(project_volume(st).zeta.c).max() == 0
    st = DropletState(const(4, 0.1), Y(4, 2, 0))
    assert project_volume(st).zeta.norm() < 1e-12
    eps = 0.01
    st = DropletState(Y(6, 2, 0, eps), SphereFunction.zeros(6))
    pv = project_volume(st)
    assert volume(pv) == pytest.approx(V0, abs=1e-12)
    shift = abs(pv.zeta.c[0, 6])
    assert 0 < shift < 2 * eps ** 2
    pv2 = project_volume(pv)
    assert np.abs(pv2.zeta.c - pv.zeta.c).max() == 0
    with pytest.raises(DomainError):
        project_volume(DropletState(Y(4, 2, 0, 1.4), SphereFunction.zeros(4)))


def test_project_center():
    z = Y(6, 2, 0, 0.02) + Y(6, 3, 1, 0.02) + Y(6, 1, -1, 0.01)
    out = project_center(DropletState(z, SphereFunction.zeros(6)))
    assert np.linalg.norm(center_integral(out)) < 1e-13
    zonal = project_center(DropletState(Y(6, 2, 0, 0.02) + Y(6, 3, 0, 0.02), SphereFunction.zeros(6)))
    assert np.linalg.norm(center_integral(zonal)) < 1e-13
    assert np.abs(zonal.zeta.c[1, [5, 7]]).max() == 0


# ----------------------------------------------------------------- stepping

def test_static_state_is_fixed():
    cfg = SimConfig(L=8, dt=1e-2, t_end=1e-2, L_solve=12)
    out = step(DropletState.rest(8), cfg)
    assert out.zeta.norm() < 1e-14 and out.phi.norm() < 1e-14


def test_blow_up_is_reported():
    cfg = SimConfig(L=4, dt=1e-2, t_end=1e-2, L_solve=12)
    with pytest.raises(BlowUpError):
        step(DropletState(Y(4, 2, 0, 1.5), SphereFunction.zeros(4)), cfg)
    with pytest.raises(ValueError):
        step(DropletState.rest(4), SimConfig(L=4, system="symmetrized"))


def _run(st, dt, t_end, L=8):
    cfg = SimConfig(L=L, L_solve=12, dt=dt, t_end=t_end, axisymmetric=True, diagnostics=False,
                    volume_project=False)
    return simulate(st, cfg).states[-1]


def test_rk4_order():
    st = DropletState(Y(8, 2, 0, 0.05) + Y(8, 3, 0, 0.03), Y(8, 2, 0, 0.1))
    t_end = 0.16
    ref = _run(st, 0.005, t_end)
    err = [(_run(st, dt, t_end).zeta - ref.zeta).norm() for dt in (0.04, 0.02)]
    assert 10 < err[0] / err[1] < 22


def test_time_reversibility():
    st = DropletState(Y(8, 2, 0, 0.03) + Y(8, 4, 0, 0.01), Y(8, 3, 0, 0.05))
    fwd = _run(st, 0.01, 0.2)
    back = _run(DropletState(fwd.zeta, fwd.phi * -1.0), 0.01, 0.2)
    assert (back.zeta - st.zeta).norm() < 1e-8
    assert (back.phi * -1.0 - st.phi).norm() < 1e-8


def test_linear_period_returns_to_start():
    eps = 1e-4
    T = 2 * np.pi / np.sqrt(30)
    st = project_volume(DropletState(Y(8, 3, 0, eps), SphereFunction.zeros(8)))
    out = _run(st, T / 200, T)
    assert (out.zeta - st.zeta).norm() < 1e-3 * eps


def test_trajectory_recording_and_csv(tmp_path):
    cfg = SimConfig(L=4, L_solve=12, dt=0.01, t_end=0.03)
    traj = simulate(DropletState(Y(4, 2, 0, 0.01), SphereFunction.zeros(4)), cfg)
    assert traj.times == pytest.approx([0, 0.01, 0.02, 0.03])
    assert len(traj.series("volume")) == len(traj.states) == 4
    with pytest.raises(ValueError):
        traj.record(0.01, traj.states[0], None)
    path = tmp_path / "d.csv"
    traj.write_csv(str(path))
    rows = list(csv.reader(open(path)))
    assert rows[0] == ["t", "volume", "hamiltonian", "|momentum|", "|center|", "H^3.5(zeta)", "H^3(phi)",
                       "oracle_residual"]
    assert len(rows) == 5
    traj.write_dir(str(tmp_path / "traj"))
    obj = json.load(open(tmp_path / "traj" / "trajectory.json"))
    assert len(obj["states"]) == 4
    assert Trajectory().times == []


# --------------------------------------------------------------- dispersion

def test_dispersion_probe_small():
    fit = dispersion_probe(2, 1e-3, SimConfig(L=4, L_solve=12, dt=5e-3), periods=3)
    assert fit.rel_error < 0.01
    assert fit.frequency == pytest.approx(np.sqrt(8), rel=0.01)


def test_dispersion_probe_n1_is_not_oscillatory():
    with pytest.raises(NonOscillatoryError):
        dispersion_probe(1, 1e-3, SimConfig(L=4, L_solve=12, dt=1e-2), periods=0.5)


def test_dispersion_probe_range():
    with pytest.raises(DomainError):
        dispersion_probe(3, 1e-3, SimConfig(L=4))
