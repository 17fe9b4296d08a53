"""Windowed Picard solver for the transport + half-diffusion equation.

d_t theta - div(v theta) + J^{1/2} theta = 0, optionally viscosity-
regularized by eps * J.  Two schemes:

* eps > 0: Picard iteration on the Duhamel form over a window T',
  theta(t) = e^{-eps t J} theta0
             - int_0^t e^{-eps (t-s) J} [div(v theta) + J^{1/2} theta] ds
  with left-endpoint quadrature on the inner dt grid.  Non-contraction
  raises WindowTooLargeError; advance() halves the window up to 6 times.

* eps = 0: direct stepping.  Transport is conservative upwind on the
  divergence-free face fluxes; the half-diffusion is the implicit
  spectral factor e^{-dt |k|} on Euclidean grids and the explicit
  nonnegative-weight gauge-profile jump form on H1, under its CFL bound.
  Every update is then a convex combination, so constants are fixed
  points and the discrete maximum principle is exact.
"""

import csv
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ConvergenceError, StepSizeError, WindowTooLargeError
from .fractional import singular_half_op
from .grids import (Grid, ScalarField, VectorField, boundary_mass_fraction,
                    clamp_velocity, integrate, lp_norm)
from .heat import _mode_eigh, spectral_sq_freq
from .velocity import face_divergence

NORM_PS = (1, 2, 4, np.inf)


@dataclass
class SolverConfig:
    eps: float = 0.0
    T: float = 1.0
    window: float = 0.25
    dt: float = None
    picard_tol: float = 1e-8
    max_iter: int = 60
    clamp_k: float = None
    T0: float = 0.5

    def __post_init__(self):
        if self.eps < 0:
            raise ValueError("eps must be >= 0")
        if not (0 < self.window <= self.T):
            raise ValueError("need 0 < window <= T")
        if self.dt is not None and not (0 < self.dt <= self.window):
            raise ValueError("need 0 < dt <= window")
        if self.picard_tol <= 0:
            raise ValueError("picard_tol must be positive")


@dataclass
class Trajectory:
    snapshots: list                      # [(t, ScalarField)]
    norms: list                          # rows of dicts, one per snapshot
    diagnostics: dict = field(default_factory=dict)

    def times(self):
        return [t for t, _ in self.snapshots]

    def final(self):
        return self.snapshots[-1][1]

    def write_norms_csv(self, path):
        cols = ["t", "L1", "L2", "L4", "Linf", "boundary_mass", "picard_iters"]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(cols)
            for row in self.norms:
                w.writerow([repr(row[c]) for c in cols])


def _norm_row(t, f, iters):
    labels = {1: "L1", 2: "L2", 4: "L4", np.inf: "Linf"}
    row = {"t": float(t), "picard_iters": int(iters),
           "boundary_mass": boundary_mass_fraction(f)}
    for p in NORM_PS:
        row[labels[p]] = lp_norm(f, p)
    return row


def transport_divergence(values, v: VectorField, scheme="upwind"):
    """Conservative discrete div(v theta) from the face fluxes."""
    if v.faces is None:
        raise ValueError("velocity carries no face fluxes")
    grid = v.grid
    out = np.zeros(grid.shape)
    for ax, u in enumerate(v.faces):
        right = np.roll(values, -1, axis=ax)
        if scheme == "upwind":
            flux = np.maximum(u, 0.0) * values + np.minimum(u, 0.0) * right
        elif scheme == "centered":
            flux = u * 0.5 * (values + right)
        else:
            raise ValueError(f"unknown transport scheme {scheme!r}")
        out += (flux - np.roll(flux, 1, axis=ax)) / grid.spacing[ax]
    return out


def advective_cfl_dt(v: VectorField):
    grid = v.grid
    if v.faces is None:
        return grid.spacing[0] / (2.0 * v.max_speed() + 1.0)
    rate = np.zeros(grid.shape)
    for ax, u in enumerate(v.faces):
        rate += (np.maximum(u, 0.0) - np.roll(np.minimum(u, 0.0), 1, axis=ax)) \
            / grid.spacing[ax]
    peak = float(rate.max())
    return 0.9 / peak if peak > 0 else np.inf


class _HeatStep:
    """Apply e^{-tau J} repeatedly for one fixed tau."""

    def __init__(self, grid: Grid, tau: float):
        self.grid = grid
        self.tau = tau
        if grid.descriptor.is_abelian:
            self._mult = np.exp(-tau * spectral_sq_freq(grid))
        else:
            mats = []
            for w, vmat in _mode_eigh(grid, 4):
                mats.append((vmat * np.exp(-tau * w)) @ vmat.conj().T)
            self._mats = mats

    def __call__(self, values):
        grid = self.grid
        if grid.descriptor.is_abelian:
            axes = tuple(range(grid.descriptor.n))
            return np.fft.irfftn(np.fft.rfftn(values, axes=axes) * self._mult,
                                 s=grid.shape, axes=axes)
        m1, m2, m3 = grid.shape
        modes = np.fft.rfft(values, axis=2)
        nmode = modes.shape[2]
        out = np.empty_like(modes)
        for k in range(nmode):
            vec = self._mats[k] @ modes[:, :, k].reshape(-1)
            if m3 % 2 == 0 and k == nmode - 1:
                vec = vec.real + 0.0j
            out[:, :, k] = vec.reshape(m1, m2)
        return np.fft.irfft(out, n=m3, axis=2)


def _check_velocity(v: VectorField, clamp_k):
    if clamp_k is not None:
        v = clamp_velocity(v, clamp_k)
    if v.faces is not None:
        div = np.abs(face_divergence(v).values).max()
        scale = v.max_speed() / min(v.grid.spacing) + 1e-30
        if div > 1e-3 * scale:
            warnings.warn(f"velocity is not divergence-free (residual {div:.2e})")
    return v


def picard_solve_window(theta_init: ScalarField, v: VectorField,
                        cfg: SolverConfig) -> ScalarField:
    """One contraction window of the Duhamel fixed point; returns theta(T')."""
    if cfg.eps <= 0:
        raise ValueError("the Picard window needs eps > 0")
    grid = theta_init.grid
    v = _check_velocity(v, cfg.clamp_k)
    dt = cfg.dt if cfg.dt is not None else min(advective_cfl_dt(v),
                                               cfg.window / 8.0)
    nsteps = max(1, int(round(cfg.window / dt)))
    dt = cfg.window / nsteps
    prop = _HeatStep(grid, cfg.eps * dt)
    half = singular_half_op(grid)
    # free term P^n theta0, n = 0..nsteps
    free = [theta_init.values]
    for _ in range(nsteps):
        free.append(prop(free[-1]))
    iters = [theta_init.values.copy() for _ in range(nsteps + 1)]
    scale = np.sqrt(grid.cell_volume)
    prev_dist = None
    distances = []
    for it in range(cfg.max_iter):
        source = [transport_divergence(u, v) + half.apply(u) for u in iters[:-1]]
        new = [theta_init.values]
        acc = np.zeros(grid.shape)
        for n in range(1, nsteps + 1):
            acc = prop(acc + dt * source[n - 1])
            new.append(free[n] - acc)
        dist = max(np.linalg.norm(a - b) * scale
                   for a, b in zip(new, iters))
        distances.append(dist)
        iters = new
        if dist < cfg.picard_tol:
            _LAST_ITERS["count"] = it + 1
            _LAST_ITERS["distances"] = distances
            return ScalarField(grid, iters[-1], time_tag=cfg.window)
        if prev_dist is not None and dist > 0.95 * prev_dist:
            raise WindowTooLargeError(
                f"Picard distance ratio {dist / prev_dist:.3f} > 0.95; "
                f"reduce the window T' (currently {cfg.window})")
        prev_dist = dist
    raise ConvergenceError(f"Picard did not reach {cfg.picard_tol} "
                           f"in {cfg.max_iter} iterations")


_LAST_ITERS = {"count": 0, "distances": []}


def _explicit_dt(grid, v, cfg):
    stable = advective_cfl_dt(v)
    if not grid.descriptor.is_abelian:
        stable = min(stable, singular_half_op(grid, profile="gauge").cfl_dt())
    dt = cfg.dt if cfg.dt is not None else min(stable, cfg.window / 4.0)
    if dt > stable * (1 + 1e-12):
        raise StepSizeError(f"dt={dt} exceeds the stability bound {stable:.4g}")
    return dt


def _advance_explicit(theta0: ScalarField, v: VectorField, cfg: SolverConfig):
    """eps = 0 scheme: upwind transport + monotone half-diffusion."""
    grid = theta0.grid
    v = _check_velocity(v, cfg.clamp_k)
    dt = _explicit_dt(grid, v, cfg)
    abelian = grid.descriptor.is_abelian
    if abelian:
        mult = np.exp(-dt * np.sqrt(spectral_sq_freq(grid)))
        axes = tuple(range(grid.descriptor.n))
    else:
        half = singular_half_op(grid, profile="gauge")
    snaps = [(0.0, theta0)]
    rows = [_norm_row(0.0, theta0, 0)]
    u = theta0.values
    t = 0.0
    next_snap = cfg.window
    nsteps_total = int(np.ceil(cfg.T / dt - 1e-12))
    for k in range(nsteps_total):
        step = min(dt, cfg.T - t)
        u = u - step * transport_divergence(u, v)
        if abelian:
            # exact spectral Poisson factor (positive kernel)
            u = np.fft.irfftn(np.fft.rfftn(u, axes=axes)
                              * mult ** (step / dt), s=grid.shape, axes=axes)
        else:
            u = u - step * half.apply(u)
        t += step
        if t >= next_snap - 1e-12 or k == nsteps_total - 1:
            f = ScalarField(grid, u, time_tag=t)
            snaps.append((t, f))
            rows.append(_norm_row(t, f, 0))
            next_snap += cfg.window
    return Trajectory(snaps, rows, {"scheme": "explicit", "dt": dt})


def advance(theta0: ScalarField, v: VectorField, cfg: SolverConfig) -> Trajectory:
    """Chain windows to the horizon T, recording norms at each snapshot."""
    if cfg.eps == 0:
        return _advance_explicit(theta0, v, cfg)
    snaps = [(0.0, theta0)]
    rows = [_norm_row(0.0, theta0, 0)]
    t = 0.0
    theta = theta0
    window = cfg.window
    halvings = 0
    while t < cfg.T - 1e-12:
        w = min(window, cfg.T - t)
        wcfg = SolverConfig(eps=cfg.eps, T=max(w, 1e-12), window=w, dt=cfg.dt,
                            picard_tol=cfg.picard_tol, max_iter=cfg.max_iter,
                            clamp_k=cfg.clamp_k, T0=cfg.T0)
        if wcfg.dt is not None and wcfg.dt > w:
            wcfg = SolverConfig(eps=cfg.eps, T=wcfg.T, window=w, dt=w,
                                picard_tol=cfg.picard_tol,
                                max_iter=cfg.max_iter,
                                clamp_k=cfg.clamp_k, T0=cfg.T0)
        try:
            theta = picard_solve_window(theta, v, wcfg)
        except WindowTooLargeError:
            halvings += 1
            if halvings > 6:
                raise
            window /= 2.0
            continue
        t += w
        theta = ScalarField(theta.grid, theta.values, time_tag=t)
        snaps.append((t, theta))
        rows.append(_norm_row(t, theta, _LAST_ITERS["count"]))
    return Trajectory(snaps, rows, {"scheme": "picard", "window": window,
                                    "halvings": halvings})


def viscosity_sweep(theta0, v, cfg, eps_list):
    """advance() per eps plus the pairwise L2 distance table at matched times."""
    if any(e <= 0 for e in eps_list):
        raise ValueError("eps_list must be positive")
    trajs = []
    for eps in eps_list:
        c = SolverConfig(eps=eps, T=cfg.T, window=cfg.window, dt=cfg.dt,
                         picard_tol=cfg.picard_tol, max_iter=cfg.max_iter,
                         clamp_k=cfg.clamp_k, T0=cfg.T0)
        trajs.append(advance(theta0, v, c))
    dists = {}
    for i in range(len(trajs)):
        for j in range(i + 1, len(trajs)):
            ti = dict(trajs[i].snapshots)
            tj = dict(trajs[j].snapshots)
            common = sorted(set(ti) & set(tj))
            dists[(eps_list[i], eps_list[j])] = [
                (t, lp_norm(ti[t].with_values(ti[t].values - tj[t].values), 2))
                for t in common]
    return trajs, dists


def solve_linfty(theta0: ScalarField, R_list, v, cfg) -> Trajectory:
    """advance() on gauge-ball truncations of theta0; sup-norm table per R."""
    from .groups import gauge
    grid = theta0.grid
    rho = gauge(grid.descriptor, grid.points())
    table = []
    traj = None
    for R in sorted(R_list):
        mask = (rho < R).astype(float)
        traj = advance(theta0.with_values(theta0.values * mask), v, cfg)
        table.append((float(R), max(row["Linf"] for row in traj.norms)))
    traj.diagnostics["sup_table"] = table
    traj.diagnostics["sup_bound"] = lp_norm(theta0, np.inf)
    return traj
