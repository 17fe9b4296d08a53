"""End-to-end acceptance checks, one test per criterion.

Each test prints a single PASS/FAIL line; numbered test names keep the
``pytest -v`` report readable as a checklist.
"""

import json
import subprocess
import sys

import numpy as np
import pytest

from carnotflow import cli
from carnotflow import molecules as mo
from carnotflow.convolution import convolve
from carnotflow.fractional import (frac_half_singular, frac_half_subordination,
                                   spectral_half_apply)
from carnotflow.grids import Grid, ScalarField, integrate, lp_norm
from carnotflow.groups import (dilate, euclidean, gauge, heisenberg, inverse,
                               multiply)
from carnotflow.heat import heat_kernel, heat_kernel_batch
from carnotflow.regularity import (bmo_norm, holder_seminorm,
                                   max_principle_check, positivity_check,
                                   positivity_split_scenario)
from carnotflow.solver import advance, SolverConfig
from carnotflow.velocity import (constant_velocity, stream_velocity,
                                 velocity_recipe, zero_velocity)


def report(num, label, ok, detail=""):
    line = f"{'PASS' if ok else 'FAIL'} criterion {num}: {label}"
    if detail:
        line += f" ({detail})"
    print(line)
    assert ok, line


# ------------------------------------------------------------------ fixtures

@pytest.fixture(scope="module")
def e2_grid():
    return Grid(euclidean(2), (2.0, 2.0), (512, 512))


@pytest.fixture(scope="module")
def e2_stream(e2_grid):
    v = velocity_recipe(e2_grid, "stream", amplitude=0.05)
    mu = max(bmo_norm(ScalarField(e2_grid, c)) for c in v.components)
    return v, mu


def sched_spec(r):
    # gamma = 0.75, omega = 0.9
    return mo.MoleculeSpec(r, (0.0, 0.0), 2.0 / 2.75, 0.9, euclidean(2))


@pytest.fixture(scope="module")
def schedules(e2_grid, e2_stream):
    v, mu = e2_stream
    cfg = mo.ScheduleConfig(C_fit=0.2)
    return {r: mo.evolve_schedule(sched_spec(r), v, mu, 0.5, cfg)
            for r in (0.1, 0.05)}


def _bump01(grid):
    p = grid.points()
    rho2 = sum(p[..., i] ** 2 for i in range(grid.descriptor.n))
    return ScalarField(grid, np.exp(-2.0 * rho2))


@pytest.fixture(scope="module")
def suite_trajs():
    """Six transport scenarios: two groups x three velocity recipes."""
    cfg = SolverConfig(eps=0.0, T=0.25, window=0.125)
    grids = [Grid(heisenberg(), (4.0, 4.0, 2.0), (16, 16, 8)),
             Grid(euclidean(2), (4.0, 4.0), (64, 64))]
    out = []
    for grid in grids:
        theta0 = _bump01(grid)
        for v in (zero_velocity(grid),
                  constant_velocity(grid, (0.5, 0.25)),
                  stream_velocity(grid, amplitude=0.2)):
            out.append(advance(theta0, v, cfg))
    return out


# ------------------------------------------------------------------ criteria

def test_criterion_01_group_axioms():
    g = heisenberg()
    rng = np.random.default_rng(0)
    x, y, z = (rng.uniform(-2.0, 2.0, (1000, 3)) for _ in range(3))
    assoc = np.abs(multiply(g, multiply(g, x, y), z)
                   - multiply(g, x, multiply(g, y, z))).max()
    inv = np.abs(multiply(g, x, inverse(g, x))).max()
    hom = np.abs(dilate(g, 1.7, multiply(g, x, y))
                 - multiply(g, dilate(g, 1.7, x), dilate(g, 1.7, y))).max()
    scale = np.abs(gauge(g, dilate(g, 1.7, x)) - 1.7 * gauge(g, x)).max()
    worst = max(assoc, inv, hom, scale)
    report(1, "group axioms and dilation automorphism",
           worst < 1e-12, f"max residual {worst:.2e}")


def test_criterion_02_heat_kernel():
    grid = Grid(heisenberg(), (4.0, 4.0, 2.0), (32, 32, 16))
    kernels = heat_kernel_batch(grid, (0.3, 0.6))
    k03, k06 = kernels[0.3], kernels[0.6]
    mass_err = max(abs(integrate(k) - 1.0) for k in (k03, k06))
    flipped = np.roll(np.flip(k03.values), 1, axis=(0, 1, 2))
    sym = np.abs(k03.values - flipped).max() / k03.values.max()
    # semigroup h_t * h_s = h_{t+s}, measured through the action on a
    # smooth field (the raw spike is not in the grid's resolved class)
    p = grid.points()
    f = ScalarField(grid, np.exp(-1.5 * (p[..., 0] ** 2 + p[..., 1] ** 2
                                         + 4 * p[..., 2] ** 2)))
    twice = convolve(convolve(f, k03), k03)
    once = convolve(f, k06)
    semi = (lp_norm(once.with_values(once.values - twice.values), 1)
            / lp_norm(once, 1))

    coarse = Grid(heisenberg(), (4.0, 4.0, 2.0), (24, 24, 12))
    dilated = Grid(heisenberg(), (8.0, 8.0, 8.0), (24, 24, 12))
    k1 = heat_kernel(coarse, 0.1)
    k2 = heat_kernel(dilated, 0.4)
    scaling = (np.linalg.norm(k2.values - k1.values / 16.0)
               / np.linalg.norm(k1.values / 16.0))

    ok = (mass_err <= 1e-3 and sym <= 1e-6 and semi < 1e-2
          and scaling <= 1e-2)
    report(2, "heat kernel mass/symmetry/semigroup/scaling", ok,
           f"mass {mass_err:.1e} sym {sym:.1e} semi {semi:.1e} "
           f"scaling {scaling:.1e}")


def test_criterion_03_fractional_operator():
    grid1 = Grid(euclidean(1), (2 * np.pi,), (256,))
    x = grid1.points()[..., 0]
    spec_err = 0.0
    for k in (1, 2, 3):
        f = ScalarField(grid1, np.cos(k * x))
        target = k * np.cos(k * x)
        err = (np.linalg.norm(frac_half_singular(f).values - target)
               / np.linalg.norm(target))
        spec_err = max(spec_err, err)

    g2 = Grid(euclidean(2), (2 * np.pi, 2 * np.pi), (48, 48))
    p = g2.points()
    f2 = ScalarField(g2, np.cos(p[..., 0]) * np.cos(2 * p[..., 1]))
    t2 = spectral_half_apply(f2).values
    spec_err = max(spec_err, np.linalg.norm(frac_half_singular(f2).values - t2)
                   / np.linalg.norm(t2))

    h1 = Grid(heisenberg(), (4.0, 4.0, 2.0), (24, 24, 12))
    q = h1.points()
    bump = ScalarField(h1, np.exp(-1.5 * (q[..., 0] ** 2 + q[..., 1] ** 2
                                          + 4 * q[..., 2] ** 2)))
    sing = frac_half_singular(bump).values
    sub = frac_half_subordination(bump).values
    cross = np.linalg.norm(sing - sub) / np.linalg.norm(sub)

    const = ScalarField(h1, np.ones(h1.shape))
    flat = max(np.abs(frac_half_singular(const).values).max(),
               np.abs(frac_half_subordination(const).values).max())

    ok = spec_err <= 0.05 and cross <= 0.05 and flat < 1e-10
    report(3, "fractional operator oracles", ok,
           f"spectral {spec_err:.3f} cross {cross:.3f} const {flat:.1e}")


def test_criterion_04_solver_decay():
    grid = Grid(euclidean(1), (2 * np.pi,), (256,))
    x = grid.points()[..., 0]
    cfg = SolverConfig(eps=0.0, T=1.0, window=0.25, dt=0.005)
    worst = 0.0
    for k in (1, 2, 3):
        traj = advance(ScalarField(grid, np.cos(k * x)),
                       zero_velocity(grid), cfg)
        t, f = traj.snapshots[-1]
        target = np.exp(-k * t) * np.cos(k * x)
        worst = max(worst, np.linalg.norm(f.values - target)
                    / np.linalg.norm(target))
    report(4, "pure-decay solver oracle", worst <= 0.02,
           f"max relative error {worst:.2e} at t=1")


def test_criterion_05_maximum_principle(suite_trajs):
    reports = [max_principle_check(traj) for traj in suite_trajs]
    ok = all(rep.passed() for rep in reports)
    report(5, "maximum principle over 6-scenario suite", ok,
           f"{sum(rep.passed() for rep in reports)}/6 scenarios")


def test_criterion_06_positivity(suite_trajs):
    reports = [positivity_check(traj, M=1.0) for traj in suite_trajs]

    grid = Grid(euclidean(3), (16.0, 16.0, 16.0), (48, 48, 48))
    rho = gauge(grid.descriptor, grid.points())
    psi0 = ScalarField(grid, np.exp(-0.08 * rho ** 2))
    cfg = SolverConfig(eps=0.0, T=0.2, window=0.05, dt=0.05)
    R_list = (1.0, 1.6, 2.56)
    rates, recon = [], True
    for R in R_list:
        rep = positivity_split_scenario(psi0, 1.0, R, 0.4, cfg, p=4)
        recon = recon and rep.verdicts["reconstruction"]
        rates.append(rep.metadata["rate"])
    slope = np.polyfit(np.log(R_list), np.log(rates), 1)[0]

    ok = (all(rep.passed() for rep in reports) and recon
          and abs(slope + 1.0) <= 0.3)
    report(6, "positivity principle and splitting scenario", ok,
           f"R-slope {slope:.3f}")


def test_criterion_07_transfer_property():
    h1 = Grid(heisenberg(), (4.0, 4.0, 2.0), (16, 16, 8))
    p = h1.points()
    theta0 = ScalarField(h1, np.exp(-2.0 * ((p[..., 0] + 0.3) ** 2
                                            + p[..., 1] ** 2
                                            + p[..., 2] ** 2)))
    psi0 = ScalarField(h1, np.exp(-3.0 * (p[..., 0] ** 2
                                          + (p[..., 1] - 0.4) ** 2
                                          + p[..., 2] ** 2)))
    v = stream_velocity(h1, amplitude=0.2)
    traj = advance(theta0, v, SolverConfig(T=0.2, window=0.05))
    drift_h1 = mo.transfer_check(traj, psi0, v, 0.2)["drift"]

    e2 = Grid(euclidean(2), (2.0, 2.0), (128, 128))
    spec = mo.MoleculeSpec(0.2, (0.0, 0.0), 0.9, 0.8, euclidean(2))
    psi = mo.make_molecule(spec, e2)
    v0 = zero_velocity(e2)
    traj0 = advance(_bump01(e2), v0, SolverConfig(eps=0.0, T=0.2, window=0.1))
    drift_e = mo.transfer_check(traj0, psi, v0, 0.2)["drift"]

    ok = drift_h1 <= 0.02 and drift_e <= 0.01
    report(7, "transfer property bracket drift", ok,
           f"H1 {drift_h1:.4f} Euclidean {drift_e:.2e}")


def test_criterion_08_molecule_conditions(e2_grid):
    ok, worst = True, 1.0
    for r in (0.2, 0.1, 0.05):
        spec = mo.MoleculeSpec(r, (0.0, 0.0), 0.9, 0.8, euclidean(2))
        rep = mo.validate_molecule(mo.make_molecule(spec, e2_grid), spec)
        ok = ok and rep.verdicts["l2"] and rep.verdicts["l4"]
        for row in rep.rows:
            if row["condition"] in ("concentration", "height"):
                margin = 1.0 - row["value"] / row["bound"]
                worst = min(worst, margin)
            elif row["condition"] == "moment":
                ok = ok and row["value"] <= row["bound"]
    ok = ok and worst >= 0.05
    report(8, "molecule conditions with margin", ok,
           f"min margin {100 * worst:.1f}%")


def test_criterion_09_envelope_tracking(schedules):
    ok = True
    masses = {}
    for r, rec in schedules.items():
        ok = ok and rec.passed()
        last = rec.rows[-1]
        ok = ok and last["s_total"] >= 0.5 - 1e-12
        masses[r] = integrate(rec.final_state.field.with_values(
            np.abs(rec.final_state.field.values)))
    ratio = max(masses.values()) / min(masses.values())
    ok = ok and ratio <= 1.25
    report(9, "envelope tracking to T0=0.5", ok,
           f"final L1 ratio {ratio:.3f}, safety 1.1 at every stage")


def test_criterion_10_corona_diagnostics(e2_grid, e2_stream):
    v, _ = e2_stream
    radii = (0.2, 0.1, 0.05)
    i2 = []
    for r in radii:
        spec = mo.MoleculeSpec(r, (0.0, 0.0), 0.9, 0.8, euclidean(2))
        state = mo.molecule_state(mo.make_molecule(spec, e2_grid), spec)
        i2.append(mo.corona_diagnostics(state, v, r)["I2"])
    slope = np.polyfit(np.log(radii), np.log(i2), 1)[0]
    spec = mo.MoleculeSpec(0.1, (0.0, 0.0), 0.9, 0.8, euclidean(2))
    target = spec.omega - 1.0 - spec.gamma
    state = mo.molecule_state(mo.make_molecule(spec, e2_grid), spec)
    i1_zero = mo.corona_diagnostics(state, zero_velocity(e2_grid), 0.1)["I1"]
    ok = abs(slope - target) <= 0.3 and i1_zero == 0.0
    report(10, "corona scaling and vanishing I1", ok,
           f"slope {slope:.3f} vs {target:.3f}, I1(v=0)={i1_zero}")


def test_criterion_11_holder_certification(e2_grid, e2_stream, schedules):
    v, _ = e2_stream
    theta0 = _bump01(e2_grid)
    bounds, brackets_ok = {}, True
    for r, rec in schedules.items():
        d = mo.duality_bracket(theta0, rec.final_state.field, 4)
        brackets_ok = brackets_ok and d["ok"]
        bounds[r] = d["bound"]
    uniform = (max(bounds.values()) <= 5.0 * min(bounds.values()))

    semi = []
    for npts in (96, 144):
        grid = Grid(euclidean(2), (2.0, 2.0), (npts, npts))
        traj = advance(_bump01(grid),
                       velocity_recipe(grid, "stream", amplitude=0.05),
                       SolverConfig(eps=0.0, T=0.5, window=0.125))
        semi.append(holder_seminorm(traj.snapshots[-1][1], 0.75))
    stable = abs(semi[1] - semi[0]) <= 0.2 * max(semi)

    ok = brackets_ok and uniform and stable
    report(11, "Holder certification via duality", ok,
           f"seminorms {semi[0]:.4f}/{semi[1]:.4f}, brackets bounded")


def test_criterion_12_determinism(tmp_path):
    cfgp = tmp_path / "c.toml"
    cfgp.write_text(f"""
scenario = "simulate"
out = "{tmp_path / 'a'}"
[grid]
group = "euclidean"
lengths = [2.0, 2.0]
shape = [64, 64]
[solver]
T = 0.25
window = 0.125
""")
    assert cli.main(["run", str(cfgp)]) == 0
    assert cli.main(["run", str(cfgp), "--out", str(tmp_path / "b")]) == 0
    same = all((tmp_path / "a" / n).read_bytes()
               == (tmp_path / "b" / n).read_bytes()
               for n in ("norms.csv", "verdicts.ndjson"))
    report(12, "byte-identical reruns", same, "norms.csv + verdicts.ndjson")


def test_criterion_13_report_plots(tmp_path):
    reportplots = pytest.importorskip("reportplots")
    proc = subprocess.run(
        [sys.executable, "-m", "reportplots", "--outdir", str(tmp_path)],
        capture_output=True, text=True)
    figures = sorted(f.name for f in tmp_path.glob("*.png"))
    kinds = {"norm_decay.png", "envelopes.png", "corona_slope.png",
             "viscosity_sweep.png"}
    rows, constants = reportplots.load_envelope_table()
    ref = reportplots.envelope_reference(rows, constants)
    err = max(max(abs(ref[col][i] - row["bound_" + col])
                  for col in ("concentration", "height", "mass"))
              for i, row in enumerate(rows))
    ok = proc.returncode == 0 and kinds <= set(figures) and err <= 1e-9
    report(13, "plot regeneration and envelope reference", ok,
           f"exit {proc.returncode}, figures {len(figures)}, "
           f"reference err {err:.1e}")
