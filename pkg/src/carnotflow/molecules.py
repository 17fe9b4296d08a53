"""r-molecules: construction, backward dual evolution, envelope tracking.

A molecule of size r carries three conditions -- concentration
int |psi| rho(x . x0^{-1})^omega <= r^{omega-gamma}, height
||psi||_inf <= r^{-(N+gamma)}, and (for r < 1) zero moment -- with
gamma = N(1/sigma - 1).  The dual field is stepped by the adjoint of the
solver's forward scheme, so the bracket <theta(t-s), psi(s)> is tracked
by the same discrete operators on both sides.  Because the forward
solver transports with d_t theta + div(v theta) + J^{1/2} theta = 0, the
dual transport here uses the flipped velocity -v (upwind stays monotone
and the sup norm cannot increase).

Envelope bounds in EvolutionRecord are pure functions of the recorded
constants and regenerate bit-identically from them.
"""

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ResolutionError, StepSizeError
from .fractional import singular_half_op
from .grids import Grid, ScalarField, VectorField, integrate, lp_norm
from .groups import gauge, inverse, multiply, unit_ball_volume
from .heat import spectral_sq_freq
from .regularity import NormReport
from .solver import advective_cfl_dt, transport_divergence

__all__ = [
    "MoleculeSpec", "MoleculeState", "EvolutionRecord", "ScheduleConfig",
    "make_molecule", "molecule_state", "validate_molecule",
    "backward_evolve_step", "center_ode_step", "evolve_schedule",
    "corona_diagnostics", "transfer_check", "duality_bracket",
]


@dataclass(frozen=True)
class MoleculeSpec:
    r: float
    x0: tuple
    sigma: float
    omega: float
    descriptor: object
    gamma: float = None
    kind: str = None

    def __post_init__(self):
        g = self.descriptor
        N = g.homogeneous_dimension
        if self.r <= 0:
            raise ValueError("molecule size r must be positive")
        if not (N / (N + 1.0) < self.sigma < 1.0):
            raise ValueError(f"need sigma in (N/(N+1), 1) = ({N/(N+1.0):.4f}, 1)")
        gamma = N * (1.0 / self.sigma - 1.0)
        if not (gamma < self.omega < 1.0):
            raise ValueError(f"need gamma < omega < 1 with gamma = {gamma:.4f}")
        object.__setattr__(self, "x0", tuple(float(c) for c in self.x0))
        if len(self.x0) != g.n:
            raise ValueError("x0 has wrong coordinate count")
        object.__setattr__(self, "gamma", gamma)
        object.__setattr__(self, "kind", "small" if self.r < 1.0 else "big")

    @property
    def hom_dim(self):
        return self.descriptor.homogeneous_dimension


@dataclass
class MoleculeState:
    field: ScalarField
    center: np.ndarray
    elapsed: float
    envelopes: dict
    spec: MoleculeSpec


@dataclass
class EvolutionRecord:
    rows: list
    constants: dict
    final_state: MoleculeState = None

    def bounds_at(self, s_total):
        """Theoretical envelopes as pure functions of the constants."""
        c = self.constants
        f_n = c["r"] + c["K"] * s_total
        return {
            "bound_concentration": f_n ** (c["omega"] - c["gamma"]),
            "bound_height": f_n ** -(c["N"] + c["gamma"]),
            "bound_mass": c["v_N"] * f_n ** -c["gamma"],
        }

    def recompute_bounds(self):
        return [self.bounds_at(row["s_total"]) for row in self.rows]

    def passed(self):
        return all(row["ok"] for row in self.rows)

    def failing_stages(self):
        return [row["stage"] for row in self.rows if not row["ok"]]

    def write_csv(self, path):
        cols = list(self.rows[0])
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(cols)
            for row in self.rows:
                w.writerow([repr(row[c]) for c in cols])


# ---------------------------------------------------------------- construction

def _centered_gauge(grid: Grid, center):
    """gauge(center^{-1} . x) on the grid, nearest periodic image."""
    g = grid.descriptor
    pts = grid.points()
    inv = inverse(g, np.asarray(center, dtype=float)[None, :])[0]
    rel = multiply(g, np.broadcast_to(inv, pts.shape), pts)
    lengths = np.asarray(grid.lengths)
    rel = (rel + 0.5 * lengths) % lengths - 0.5 * lengths
    return gauge(g, rel).reshape(grid.shape)


def _bump(rho, radius):
    x = np.clip(rho / radius, 0.0, 1.0)
    return np.cos(0.5 * np.pi * x) ** 2


def make_molecule(spec: MoleculeSpec, grid: Grid) -> ScalarField:
    """Two-bump mean-zero profile at scale r, rescaled to meet the
    molecule conditions with margin; the negative bump sits at gauge
    distance r/2 so the supports (radius r/4 each) stay disjoint."""
    g = grid.descriptor
    if g is not grid.descriptor:
        raise ValueError("spec/grid descriptor mismatch")
    if spec.descriptor.n != g.n or spec.hom_dim != g.homogeneous_dimension:
        raise ValueError("spec built for a different group")
    radius = spec.r / 4.0
    if radius < 2.0 * max(grid.spacing):
        raise ResolutionError(
            f"bump radius {radius:.4g} under 2 cells; refine the grid")
    x0 = np.asarray(spec.x0)
    phi_p = _bump(_centered_gauge(grid, x0), radius)
    mass_p = phi_p.sum() * grid.cell_volume
    if mass_p <= 0:
        raise ResolutionError("positive bump not resolved on the grid")
    raw = phi_p / mass_p
    if spec.kind == "small":
        offset = np.zeros(g.n)
        offset[0] = spec.r / 2.0
        x1 = multiply(g, x0[None, :], offset[None, :])[0]
        phi_m = _bump(_centered_gauge(grid, x1), radius)
        mass_m = phi_m.sum() * grid.cell_volume
        if mass_m <= 0:
            raise ResolutionError("negative bump not resolved on the grid")
        raw = raw - phi_m / mass_m
    n_hom = spec.hom_dim
    v_n = unit_ball_volume(g)
    rho0 = _centered_gauge(grid, x0)
    conc_raw = float(np.sum(np.abs(raw) * rho0 ** spec.omega) * grid.cell_volume)
    height_raw = float(np.abs(raw).max())
    mass_raw = float(np.sum(np.abs(raw)) * grid.cell_volume)
    caps = [
        spec.r ** (spec.omega - spec.gamma) / conc_raw,
        spec.r ** -(n_hom + spec.gamma) / height_raw,
        # keep the L1 mass under the evolution envelope from stage zero
        v_n * spec.r ** -spec.gamma / mass_raw,
    ]
    c = 0.9 * min(caps)
    return ScalarField(grid, c * raw)


def _envelopes(psi: ScalarField, center, omega):
    rho = _centered_gauge(psi.grid, center)
    conc = float(np.sum(np.abs(psi.values) * rho ** omega) * psi.grid.cell_volume)
    return {
        "concentration": conc,
        "height": lp_norm(psi, np.inf),
        "mass": lp_norm(psi, 1),
    }


def molecule_state(psi: ScalarField, spec: MoleculeSpec,
                   center=None, elapsed=0.0) -> MoleculeState:
    center = np.asarray(spec.x0 if center is None else center, dtype=float)
    return MoleculeState(psi, center, elapsed,
                         _envelopes(psi, center, spec.omega), spec)


def validate_molecule(psi: ScalarField, spec: MoleculeSpec,
                      center=None) -> NormReport:
    center = np.asarray(spec.x0 if center is None else center, dtype=float)
    n_hom = spec.hom_dim
    v_n = unit_ball_volume(spec.descriptor)
    env = _envelopes(psi, center, spec.omega)
    rows, verdicts, metrics = [], {}, {}

    def check(name, value, bound):
        rows.append({"condition": name, "value": value, "bound": bound})
        verdicts[name] = bool(value <= bound)
        metrics[name] = f"value={value:.6g} bound={bound:.6g}"

    if spec.kind == "small":
        check("moment", abs(integrate(psi)), 1e-10)
    check("concentration", env["concentration"],
          spec.r ** (spec.omega - spec.gamma))
    check("height", env["height"], spec.r ** -(n_hom + spec.gamma))
    check("l1", env["mass"], (v_n + 1.0) * spec.r ** -spec.gamma)
    for p in (2, 4):
        bound = (v_n + 1.0) ** (1.0 / p) * spec.r ** (n_hom / p - n_hom - spec.gamma)
        check(f"l{p}", lp_norm(psi, p), bound)
    return NormReport("molecule", rows, verdicts, 0.0,
                      {"metrics": metrics, "kind": spec.kind, "r": spec.r})


# ------------------------------------------------------------------- evolution

_HALF_FACTORS = {}


def _half_poisson_factor(grid: Grid, dt: float):
    key = (grid.shape, grid.lengths, dt)
    if key not in _HALF_FACTORS:
        _HALF_FACTORS[key] = np.exp(-dt * np.sqrt(spectral_sq_freq(grid)))
    return _HALF_FACTORS[key]


def _flip(v: VectorField) -> VectorField:
    faces = None if v.faces is None else tuple(-u for u in v.faces)
    return VectorField(v.grid, tuple(-c for c in v.components), faces)


def backward_evolve_step(state: MoleculeState, v: VectorField,
                         t: float, dt: float, radius=None) -> MoleculeState:
    """One step of the dual equation with time-reversed velocity, plus
    the center ODE step averaging over B(center, radius); callers
    tracking the schedule pass radius = f_n = r + K*sum(s)."""
    psi = state.field
    grid = psi.grid
    if v.grid is not grid:
        raise ValueError("velocity lives on a different grid")
    back = _flip(v)
    stable = advective_cfl_dt(back)
    abelian = grid.descriptor.is_abelian
    if not abelian:
        half = singular_half_op(grid, profile="gauge")
        stable = min(stable, half.cfl_dt())
    if dt > stable * (1 + 1e-12):
        raise StepSizeError(f"dt={dt} exceeds the stability bound {stable:.4g}")
    u = psi.values - dt * transport_divergence(psi.values, back)
    if abelian:
        axes = tuple(range(grid.descriptor.n))
        u = np.fft.irfftn(np.fft.rfftn(u, axes=axes)
                          * _half_poisson_factor(grid, dt),
                          s=grid.shape, axes=axes)
    else:
        u = u - dt * half.apply(u)
    sup_old = float(np.abs(psi.values).max())
    sup_new = float(np.abs(u).max())
    if sup_new > 2.0 * sup_old + 1e-30:
        raise StepSizeError(
            f"sup norm grew {sup_new / (sup_old + 1e-300):.2f}x in one step")
    if radius is None:
        radius = max(state.spec.r, 4.0 * max(grid.spacing))
    radius = min(radius, 0.45 * min(grid.lengths))
    center = center_ode_step(state.center, v, radius, dt)
    elapsed = state.elapsed + dt
    out = ScalarField(grid, u, time_tag=elapsed)
    return MoleculeState(out, center, elapsed,
                         _envelopes(out, center, state.spec.omega), state.spec)


def center_ode_step(center, v: VectorField, radius: float, dt: float):
    """Forward Euler with the velocity averaged over B(center, radius)."""
    grid = v.grid
    if radius <= 0 or 2.0 * radius >= min(grid.lengths):
        raise ValueError("averaging ball does not fit inside the box")
    mask = _centered_gauge(grid, center) <= radius
    count = int(mask.sum())
    if count == 0:
        raise ValueError("averaging ball contains no grid cells")
    vbar = np.array([float(c[mask].mean()) for c in v.components])
    out = np.asarray(center, dtype=float).copy()
    out[:len(vbar)] += dt * vbar
    if not grid.descriptor.is_abelian:
        # vertical drift of the transporting field b3 = (x1 v2 - x2 v1)/2
        out[2] += dt * 0.5 * (center[0] * vbar[1] - center[1] * vbar[0])
    lengths = np.asarray(grid.lengths)
    return (out + 0.5 * lengths) % lengths - 0.5 * lengths


@dataclass
class ScheduleConfig:
    eps_step: float = 0.1
    C_fit: float = 1.0
    safety: float = 1.1
    K: float = None
    max_stages: int = 400


def evolve_schedule(spec: MoleculeSpec, v: VectorField, mu: float,
                    T0: float, cfg: ScheduleConfig = None) -> EvolutionRecord:
    """Iterate stages of length <= eps_step * r until the total backward
    time reaches T0 or r + K*sum(s) reaches 1, checking the three
    envelopes against their bounds each stage.  Violations are recorded
    (row ok=False), not raised."""
    if spec.kind != "small":
        raise ValueError("the iterated schedule is for small molecules")
    cfg = cfg or ScheduleConfig()
    k_floor = cfg.C_fit * (mu + 1.0) / (spec.omega - spec.gamma)
    K = k_floor if cfg.K is None else cfg.K
    if K < k_floor * (1 - 1e-12):
        raise ValueError(f"K must be >= C_fit*(mu+1)/(omega-gamma) = {k_floor:.4g}")
    grid = v.grid
    g = grid.descriptor
    state = molecule_state(make_molecule(spec, grid), spec)
    constants = {
        "K": K, "mu": mu, "eps_step": cfg.eps_step,
        "v_N": unit_ball_volume(g), "r": spec.r, "gamma": spec.gamma,
        "omega": spec.omega, "N": spec.hom_dim, "safety": cfg.safety,
        "T0": T0, "C_fit": cfg.C_fit,
    }
    record = EvolutionRecord([], constants)

    def push(stage, s_i):
        env = state.envelopes
        bounds = record.bounds_at(state.elapsed)
        ok = (env["concentration"] <= cfg.safety * bounds["bound_concentration"]
              and env["height"] <= cfg.safety * bounds["bound_height"]
              and env["mass"] <= cfg.safety * bounds["bound_mass"])
        record.rows.append({
            "stage": stage, "s_i": s_i, "s_total": state.elapsed,
            "concentration": env["concentration"], "height": env["height"],
            "mass": env["mass"], **bounds, "ok": ok,
        })

    push(0, 0.0)
    back = _flip(v)
    stable = advective_cfl_dt(back)
    if not g.is_abelian:
        stable = min(stable, singular_half_op(grid, profile="gauge").cfl_dt())
    stage = 0
    while (state.elapsed < T0 - 1e-12
           and spec.r + K * state.elapsed < 1.0 - 1e-12
           and stage < cfg.max_stages):
        stage += 1
        s_i = min(cfg.eps_step * spec.r, T0 - state.elapsed)
        nsub = max(1, int(math.ceil(s_i / stable - 1e-12)))
        dt = s_i / nsub
        for _ in range(nsub):
            f_n = spec.r + K * state.elapsed
            state = backward_evolve_step(state, v, T0, dt, radius=f_n)
        push(stage, s_i)
    record.final_state = state
    return record


# ----------------------------------------------------------------- diagnostics

def corona_diagnostics(state: MoleculeState, v: VectorField, f_n: float):
    """I1 and I2 of the concentration estimate, split over the ball
    B(center, f_n) and the dyadic coronas around it, with the local mean
    velocity subtracted region by region.  The rho^{omega-1} weight
    stands in for |J^{1/2} rho^omega| up to the lemma constant."""
    grid = state.field.grid
    omega = state.spec.omega
    rho = _centered_gauge(grid, state.center)
    rho_eff = np.maximum(rho, 0.5 * min(grid.spacing))
    weight = rho_eff ** (omega - 1.0)
    psi_plus = np.maximum(state.field.values, 0.0)
    cellvol = grid.cell_volume
    r_max = 0.5 * min(grid.lengths)
    edges = [0.0, f_n]
    while edges[-1] < r_max:
        edges.append(min(2.0 * edges[-1], r_max))
    i1_parts, i2_parts, radii = [], [], []
    for lo, hi in zip(edges[:-1], edges[1:]):
        mask = (rho > lo) & (rho <= hi)
        if not mask.any():
            i1_parts.append(0.0)
            i2_parts.append(0.0)
            radii.append(hi)
            continue
        vbar = [float(c[mask].mean()) for c in v.components]
        dev = np.zeros(grid.shape)
        for c, vb in zip(v.components, vbar):
            dev += (c - vb) ** 2
        dev = np.sqrt(dev)
        i1_parts.append(float(np.sum(weight[mask] * dev[mask]
                                     * psi_plus[mask]) * cellvol))
        i2_parts.append(float(np.sum(weight[mask] * psi_plus[mask]) * cellvol))
        radii.append(hi)
    ref = f_n ** (omega - 1.0 - state.spec.gamma)
    return {
        "I1": sum(i1_parts), "I2": sum(i2_parts), "reference": ref,
        "I1_parts": i1_parts, "I2_parts": i2_parts, "radii": radii,
        "f_n": f_n,
    }


def transfer_check(theta_traj, psi0: ScalarField, v: VectorField, t: float):
    """Evolve psi backward on the trajectory's snapshot times and report
    the relative drift of b(s) = int theta(t-s) psi(s)."""
    grid = psi0.grid
    snaps = dict(theta_traj.snapshots)
    for _, f in theta_traj.snapshots:
        if f.grid is not grid:
            raise ValueError("trajectory and psi0 live on different grids")
    times = sorted(tt for tt in snaps if tt <= t + 1e-12)
    if not any(abs(tt - t) < 1e-9 for tt in times):
        raise ValueError("trajectory carries no snapshot at time t")
    back = _flip(v)
    stable = advective_cfl_dt(back)
    if not grid.descriptor.is_abelian:
        stable = min(stable, singular_half_op(grid, profile="gauge").cfl_dt())
    cellvol = grid.cell_volume

    def bracket(theta, psi_vals):
        return float(np.sum(theta.values * psi_vals) * cellvol)

    theta_at = {round(tt, 12): f for tt, f in snaps.items()}

    def lookup(tt):
        key = min(theta_at, key=lambda k: abs(k - tt))
        if abs(key - tt) > 1e-9:
            raise ValueError(f"no snapshot near t-s = {tt}")
        return theta_at[key]

    s_grid = [t - tt for tt in reversed(times)]   # 0 ... t
    psi = psi0.values
    rows = [(0.0, bracket(lookup(t), psi))]
    abelian = grid.descriptor.is_abelian
    if not abelian:
        half = singular_half_op(grid, profile="gauge")
    for s_prev, s_next in zip(s_grid[:-1], s_grid[1:]):
        span = s_next - s_prev
        nsub = max(1, int(math.ceil(span / stable - 1e-12)))
        dt = span / nsub
        for _ in range(nsub):
            psi = psi - dt * transport_divergence(psi, back)
            if abelian:
                axes = tuple(range(grid.descriptor.n))
                psi = np.fft.irfftn(np.fft.rfftn(psi, axes=axes)
                                    * _half_poisson_factor(grid, dt),
                                    s=grid.shape, axes=axes)
            else:
                psi = psi - dt * half.apply(psi)
        rows.append((s_next, bracket(lookup(t - s_next), psi)))
    b0 = rows[0][1]
    scale = max(abs(b0), 1e-300)
    drift = max(abs(b - b0) for _, b in rows) / scale
    return {"rows": rows, "b0": b0, "drift": drift}


def duality_bracket(theta0: ScalarField, psi_final: ScalarField, p: float):
    if theta0.grid is not psi_final.grid:
        raise ValueError("fields live on different grids")
    q = p / (p - 1.0) if np.isfinite(p) and p > 1 else (np.inf if p == 1 else 1)
    bracket = float(np.sum(theta0.values * psi_final.values)
                    * theta0.grid.cell_volume)
    bound = lp_norm(theta0, p) * lp_norm(psi_final, q)
    return {"bracket": bracket, "bound": bound,
            "ok": bracket <= bound + 1e-8}
