"""Norm verifiers: principles, bmo/Besov/Hölder functionals, commutator."""

import numpy as np
import pytest

from carnotflow.grids import Grid, ScalarField, lp_norm
from carnotflow.groups import euclidean, gauge, heisenberg
from carnotflow.fractional import frac_half_singular
from carnotflow.regularity import (besov_seminorm, bmo_norm, commutator_check,
                                   group_shift, holder_seminorm,
                                   max_principle_check, NormReport,
                                   plateau_field, positivity_check,
                                   positivity_split_scenario)
from carnotflow.solver import advance, SolverConfig, Trajectory
from carnotflow.velocity import stream_velocity, zero_velocity


@pytest.fixture(scope="module")
def h1_grid():
    return Grid(heisenberg(), (4.0, 4.0, 2.0), (16, 16, 8))


@pytest.fixture(scope="module")
def h1_traj(h1_grid):
    p = h1_grid.points()
    theta0 = ScalarField(h1_grid, np.exp(-2 * (p[..., 0] ** 2 + p[..., 1] ** 2
                                               + 4 * p[..., 2] ** 2)))
    v = stream_velocity(h1_grid, amplitude=0.8)
    return advance(theta0, v, SolverConfig(eps=0.0, T=0.4, window=0.1))


def test_max_principle_pass_and_negative_control(h1_traj):
    rep = max_principle_check(h1_traj)
    assert rep.passed()
    assert all(line.startswith("PASS") for line in rep.verdict_lines())
    # negative control: artificially inflate a later norm row
    rows = [dict(r) for r in h1_traj.norms]
    rows[-1]["L2"] = rows[0]["L2"] * 2
    bad = Trajectory(h1_traj.snapshots, rows, {})
    rep2 = max_principle_check(bad)
    assert not rep2.verdicts["L2"]
    assert any(line.startswith("FAIL") for line in rep2.verdict_lines())


def test_max_principle_is_pure_function_of_rows(h1_traj):
    shuffled = Trajectory(list(reversed(h1_traj.snapshots)), h1_traj.norms, {})
    assert (max_principle_check(shuffled).verdicts
            == max_principle_check(h1_traj).verdicts)


def test_positivity_check(h1_traj, h1_grid):
    rep = positivity_check(h1_traj, M=1.0)
    assert rep.passed()
    with pytest.raises(ValueError):
        bad0 = ScalarField(h1_grid, -np.ones(h1_grid.shape))
        positivity_check(Trajectory([(0.0, bad0)], [], {}), M=1.0)
    # negative control: a snapshot outside [0, M]
    over = ScalarField(h1_grid, np.full(h1_grid.shape, 0.5))
    bad = Trajectory([(0.0, over), (0.1, over.with_values(over.values * 3))],
                     [], {})
    assert not positivity_check(bad, M=1.0).passed()


def test_positivity_split_scenario_rates():
    grid = Grid(euclidean(3), (16.0, 16.0, 16.0), (48, 48, 48))
    rho = gauge(grid.descriptor, grid.points())
    psi0 = ScalarField(grid, np.exp(-0.08 * rho ** 2))
    cfg = SolverConfig(eps=0.0, T=0.2, window=0.05, dt=0.05)
    R_list = (1.0, 1.6, 2.56)
    rates = []
    for R in R_list:
        rep = positivity_split_scenario(psi0, 1.0, R, 0.4, cfg, p=4)
        assert rep.verdicts["reconstruction"]
        assert rep.verdicts["starts_at_zero"]
        rates.append(rep.metadata["rate"])
    slope = np.polyfit(np.log(R_list), np.log(rates), 1)[0]
    assert abs(slope + 1.0) <= 0.3
    with pytest.raises(ValueError):
        positivity_split_scenario(psi0, 1.0, 0.5, 0.4, cfg)  # R <= 2 rho
    with pytest.raises(ValueError):
        positivity_split_scenario(psi0, 1.0, 4.0, 0.4, cfg)  # 3R > box half


def test_bmo_norm(h1_grid):
    zero = ScalarField.zeros(h1_grid)
    assert bmo_norm(zero) == 0.0
    const = ScalarField(h1_grid, np.full(h1_grid.shape, 0.7))
    assert bmo_norm(const) == pytest.approx(0.7, abs=1e-12)
    half = ScalarField(h1_grid, (h1_grid.points()[..., 0] > 0).astype(float))
    a = bmo_norm(half, ball_samples=200, seed=0)
    b = bmo_norm(half, ball_samples=400, seed=0)
    assert 0.0 < a <= 1.0
    assert abs(b - a) <= 0.10 * a


def test_group_shift_matches_direct_evaluation():
    grid = Grid(heisenberg(), (4.0, 4.0, 2.0), (24, 24, 12))
    pts = grid.points()
    from carnotflow.groups import multiply

    def fn(q):
        return (np.sin(2 * np.pi * q[..., 0] / 4)
                * np.cos(2 * np.pi * q[..., 1] / 4)
                * np.cos(2 * np.pi * q[..., 2] / 2))

    f = ScalarField(grid, fn(pts))
    y = np.array([2 * grid.spacing[0], -grid.spacing[1],
                  0.9 * grid.spacing[2]])
    shifted = group_shift(f, y)
    flat = pts.reshape(-1, 3)
    direct = fn(multiply(grid.descriptor, flat,
                         np.broadcast_to(y, flat.shape)).reshape(pts.shape))
    assert np.linalg.norm(shifted - direct) <= 0.05 * np.linalg.norm(direct)


def test_besov_constant_and_homogeneity(h1_grid):
    const = ScalarField(h1_grid, np.ones(h1_grid.shape))
    assert besov_seminorm(const, 0.5, 2.0) == 0.0
    p = h1_grid.points()
    f = ScalarField(h1_grid, np.exp(-2 * (p[..., 0] ** 2 + p[..., 1] ** 2
                                          + 4 * p[..., 2] ** 2)))
    b1 = besov_seminorm(f, 0.5, 2.0)
    b3 = besov_seminorm(f.with_values(3.0 * f.values), 0.5, 2.0)
    assert b3 == pytest.approx(3.0 * b1, rel=1e-12)


def test_besov_dilation_covariance():
    # F(f o delta_2) = 2^{s - N/p} F(f) via the half-size grid
    big = Grid(euclidean(2), (8.0, 8.0), (48, 48))
    small = Grid(euclidean(2), (4.0, 4.0), (48, 48))

    def bump(p):
        return np.exp(-1.5 * (p[..., 0] ** 2 + p[..., 1] ** 2))

    b1 = besov_seminorm(ScalarField(big, bump(big.points())), 0.5, 2.0)
    b2 = besov_seminorm(ScalarField(small, bump(2 * small.points())), 0.5, 2.0)
    assert b2 / b1 == pytest.approx(2 ** (0.5 - 1.0), rel=1e-10)


def test_besov_lemma_lower_bound(h1_grid):
    # <theta, J^{1/2} theta> >= C ||theta||_{B^{1/2,2}}^2 with a uniform C
    p = h1_grid.points()
    ratios = []
    for a, sh in ((1.0, 0.0), (2.0, 0.0), (1.5, 0.3), (2.5, -0.2)):
        f = ScalarField(h1_grid, np.exp(-a * ((p[..., 0] - sh) ** 2
                                              + p[..., 1] ** 2
                                              + 4 * p[..., 2] ** 2)))
        num = (float(np.sum(f.values * frac_half_singular(f).values))
               * h1_grid.cell_volume)
        ratios.append(num / besov_seminorm(f, 0.5, 2.0) ** 2)
    assert min(ratios) > 0.05  # fitted constant stays well above zero


def test_holder_seminorm():
    gamma = 0.4
    vals = {}
    for shape in ((16, 16, 8), (32, 32, 16)):
        grid = Grid(heisenberg(), (4.0, 4.0, 2.0), shape)
        rho = gauge(grid.descriptor, grid.points())
        f = ScalarField(grid, np.minimum(rho, 1.0) ** gamma)
        vals[shape] = holder_seminorm(f, gamma, increment_samples=256)
        const = ScalarField(grid, np.full(grid.shape, 2.0))
        assert holder_seminorm(const, gamma) == 0.0
    for v in vals.values():
        assert v == pytest.approx(1.0, rel=0.2)
    # a jump diverges like h^{-gamma} under refinement
    jumps = {}
    for shape in ((16, 16, 8), (32, 32, 16)):
        grid = Grid(heisenberg(), (4.0, 4.0, 2.0), shape)
        f = ScalarField(grid, (grid.points()[..., 0] > 0).astype(float))
        jumps[shape] = holder_seminorm(f, gamma, increment_samples=256)
    growth = jumps[(32, 32, 16)] / jumps[(16, 16, 8)]
    assert growth == pytest.approx(2 ** gamma, rel=0.2)


def test_holder_homogeneity(h1_grid):
    p = h1_grid.points()
    f = ScalarField(h1_grid, np.exp(-2 * (p[..., 0] ** 2 + p[..., 1] ** 2
                                          + 4 * p[..., 2] ** 2)))
    h1 = holder_seminorm(f, 0.3)
    h2 = holder_seminorm(f.with_values(-2.5 * f.values), 0.3)
    assert h2 == pytest.approx(2.5 * h1, rel=1e-12)


def test_commutator_slope():
    grid = Grid(euclidean(2), (16.0, 16.0), (96, 96))
    rep = commutator_check(grid, p=2, R_list=(0.6, 1.2, 2.4))
    assert rep.verdicts["slope"]
    assert abs(rep.metadata["slope"] + 1.0) <= 0.3


def test_commutator_trivial_cases(h1_grid):
    zero = ScalarField.zeros(h1_grid)
    rep = commutator_check(h1_grid, p=2, R_list=(0.5, 1.0), f=zero)
    assert all(r["norm"] == 0.0 for r in rep.rows)
    # phi == 1: no cutoff, commutator vanishes identically
    p = h1_grid.points()
    f = ScalarField(h1_grid, np.exp(-2 * (p[..., 0] ** 2 + p[..., 1] ** 2
                                          + 4 * p[..., 2] ** 2)))
    phi = np.ones(h1_grid.shape)
    comm = (frac_half_singular(f.with_values(phi * f.values)).values
            - phi * frac_half_singular(f).values)
    assert np.abs(comm).max() < 1e-12


def test_report_csv(tmp_path, h1_traj):
    rep = max_principle_check(h1_traj)
    path = tmp_path / "report.csv"
    rep.write_csv(path)
    lines = path.read_text().strip().splitlines()
    assert len(lines) == len(rep.rows) + 1
