"""Reproducible quantitative experiments: bounds, drifts, scans and fits.

Each bound-type operation returns both the measured value and the model
bound so that the test suite (and CI) can assert measured <= bound on the
catalog maps.  Scans are seed-deterministic and vectorized over seeds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .hamiltonian import (
    Box,
    EmbeddingReport,
    embedding_error,
    interpolating_field,
    optimal_order,
    reconstruct_hamiltonian,
)
from .maps import MapModel, PhasePoint, _picard_batch, orbit_arrays
from .resonance import BlockMap, ResonanceSite, resonant_action, scaled_block


# ---------------------------------------------------------------------------
# a-priori orbit bounds
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AprioriMargins:
    """Measured n-step deviations against the sup-norm bounds."""

    action_dev: float
    action_bound: float
    angle_dev: float
    angle_bound: float

    @property
    def ok(self) -> bool:
        return (self.action_dev <= self.action_bound + 1e-12
                and self.angle_dev <= self.angle_bound + 1e-12)


def apriori_check(model: MapModel, x0: PhasePoint, n: int) -> AprioriMargins:
    """Check |I_n - I_0| <= C1 n eps and |phi_n - phi_0 - n omega(I_0)| <= C2 n^2 eps."""
    Is, ps = orbit_arrays(model, x0.I, x0.phi, n)
    dom = model.domain
    action_dev = float(np.max(np.abs(Is[-1] - Is[0])))
    angle_dev = float(np.max(np.abs(ps[-1] - ps[0] - n * model.omega(Is[0]))))
    return AprioriMargins(
        action_dev=action_dev,
        action_bound=dom.C1 * n * model.eps,
        angle_dev=angle_dev,
        angle_bound=dom.C2 * n * n * model.eps,
    )


# ---------------------------------------------------------------------------
# generating-function split S_n = h_n + w_n for a scaled block
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class WnReport:
    """Sup of the angle-dependent part of the block generating function."""

    sup_w: float
    bound: float
    grid: np.ndarray = field(repr=False)
    values: np.ndarray = field(repr=False)

    @property
    def ok(self) -> bool:
        return self.sup_w <= self.bound + 1e-12


@dataclass
class SnDecomposition:
    """Evaluators for S_n = h_n + w_n of a rescaled block map.

    h_n is the closed-form integrable part; w_n comes from path integration
    of the cross-form fields (u, v) and is what competes against the
    convexity sandwich of h_n.
    """

    block: BlockMap
    quad_tol: float = 1e-11

    def h_n(self, Jbar: np.ndarray) -> np.ndarray:
        b = self.block
        model, site, rho = b.model, b.site, b.rho
        Jbar = np.asarray(Jbar, dtype=float)
        I = site.I_star + rho * Jbar
        lin = (model.omega(site.I_star) * Jbar).sum(axis=-1)
        return b.n / rho * (model.h0(I) - model.h0(site.I_star) - rho * lin)

    def h_n_grad(self, Jbar: np.ndarray) -> np.ndarray:
        b = self.block
        I = b.site.I_star + b.rho * np.asarray(Jbar, dtype=float)
        return b.n * (b.model.omega(I) - b.model.omega(b.site.I_star))

    def _solve_orbit(self, Jbar: np.ndarray, phi: np.ndarray):
        """Find the block preimage action J of (Jbar, phi) by contraction."""
        b = self.block
        Jbar = np.atleast_1d(np.asarray(Jbar, dtype=float))
        phi = np.atleast_1d(np.asarray(phi, dtype=float))

        def g(y):
            out = b.apply(np.concatenate([y, phi], axis=-1))
            return y - out[..., : b.d]

        J = _picard_batch(g, Jbar)
        out = b.apply(np.concatenate([J, phi], axis=-1))
        return J, out[..., b.d:]

    def u(self, Jbar: np.ndarray, phi: np.ndarray) -> np.ndarray:
        """Action increment u(Jbar, phi) = Jbar - J of the block."""
        J, _ = self._solve_orbit(Jbar, phi)
        return np.atleast_1d(np.asarray(Jbar, dtype=float)) - J

    def v(self, Jbar: np.ndarray, phi: np.ndarray) -> np.ndarray:
        """Angle increment minus the integrable part: dS_n/dJbar - h_n'."""
        _, phibar = self._solve_orbit(Jbar, phi)
        return (phibar - np.atleast_1d(np.asarray(phi, dtype=float))
                - self.h_n_grad(Jbar))

    def w_n(self, Jbar: np.ndarray, phi: np.ndarray) -> float:
        """Path integral of v . dJbar - u . dphi along the staircase from 0."""
        from .hamiltonian import _quad_segment

        d = self.block.d
        target = np.concatenate([np.atleast_1d(np.asarray(Jbar, dtype=float)),
                                 np.atleast_1d(np.asarray(phi, dtype=float))])
        cur = np.zeros(2 * d)
        total = 0.0
        for axis in range(2 * d):
            t1 = target[axis]
            if t1 == cur[axis]:
                continue
            a0 = cur[axis]
            basept = cur.copy()
            if axis < d:
                def integrand(t, axis=axis, a0=a0, t1=t1, basept=basept):
                    p = basept.copy()
                    p[axis] = a0 + t * (t1 - a0)
                    return self.v(p[:d], p[d:])[axis] * (t1 - a0)
            else:
                def integrand(t, axis=axis, a0=a0, t1=t1, basept=basept):
                    p = basept.copy()
                    p[axis] = a0 + t * (t1 - a0)
                    return -self.u(p[:d], p[d:])[axis - d] * (t1 - a0)
            total += _quad_segment(integrand, self.quad_tol)
            cur[axis] = t1
        return total

    def S_n(self, Jbar: np.ndarray, phi: np.ndarray) -> float:
        return float(self.h_n(np.atleast_1d(Jbar))) + self.w_n(Jbar, phi)

    def w_report(self, grid_n: int = 5) -> WnReport:
        """Sup |w_n| on a (J, phi) grid against d C2 n^2 eps + d C1 n eps / rho."""
        b = self.block
        dom = b.model.domain
        box = Box(lo=np.concatenate([-np.ones(b.d), np.zeros(b.d)]),
                  hi=np.concatenate([np.ones(b.d), np.ones(b.d)]), d=b.d)
        pts = box.grid(grid_n)
        vals = np.array([self.w_n(p[: b.d], p[b.d:]) for p in pts])
        eps = b.model.eps
        bound = (b.d * dom.C2 * b.n**2 * eps + b.d * dom.C1 * b.n * eps / b.rho)
        return WnReport(sup_w=float(np.max(np.abs(vals))), bound=bound,
                        grid=pts, values=vals)


def sn_decomposition(model: MapModel, site: ResonanceSite,
                     scaling: str = "lochak", quad_tol: float = 1e-11,
                     grid_n: int = 5) -> tuple[SnDecomposition, WnReport]:
    """Split the block generating function and report the sup of its angle part."""
    dec = SnDecomposition(block=scaled_block(model, site, scaling), quad_tol=quad_tol)
    return dec, dec.w_report(grid_n=grid_n)


# ---------------------------------------------------------------------------
# slow-energy drift along block orbits
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DriftReport:
    """Per-block increments of the reconstructed slow observable."""

    m: int
    increments: np.ndarray
    max_increment: float
    total: float
    identity_residual: float  # |sum(increments) - (H_end - H_start)|, relative

    @property
    def blocks(self) -> int:
        return len(self.increments)


def energy_drift(model: MapModel, site: ResonanceSite, m: int, blocks: int,
                 x0: np.ndarray, scaling: str = "nucleus",
                 quad_tol: float = 1e-12) -> DriftReport:
    """Evaluate the order-m interpolating Hamiltonian along a block orbit.

    The Hamiltonian is reconstructed from X_m by path integration with the
    periodicity correction; increments are H_m differences between
    consecutive block boundaries.
    """
    block = scaled_block(model, site, scaling)
    X = interpolating_field(block, m)
    H = reconstruct_hamiltonian(X, np.zeros(block.dim), [], quad_tol=quad_tol)
    orbit = block.orbit(np.asarray(x0, dtype=float), blocks)
    vals = np.array([H.evaluate(x) for x in orbit])
    inc = np.diff(vals)
    total = float(np.sum(inc))
    direct = float(vals[-1] - vals[0])
    scale = max(abs(direct), abs(total), 1e-300)
    return DriftReport(m=m, increments=inc, max_increment=float(np.max(np.abs(inc))),
                       total=total, identity_residual=abs(total - direct) / scale)


# ---------------------------------------------------------------------------
# long-horizon confinement scans
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class StabilityRecord:
    """Per-seed outcome of a confinement scan."""

    seed_index: int
    I0: np.ndarray
    phi0: np.ndarray
    excursion: float           # max_k |I_k - I_0|_inf over the horizon
    horizon: int
    exit_index: Optional[int]  # first k with excursion > confinement radius
    max_step_drift: float      # max per-step |I_{k+1} - I_k|_inf
    status: str = "ok"


#: steps buffered per window before bookkeeping is applied (amortizes the
#: excursion / exit / domain checks to a handful of array ops per window)
SCAN_WINDOW = 2048


def stability_scan(model: MapModel, I0: np.ndarray, phi0: np.ndarray,
                   horizon: int, confinement_radius: Optional[float] = None,
                   window: int = SCAN_WINDOW) -> list[StabilityRecord]:
    """Vectorized long-horizon scan of action excursions for many seeds.

    Seeds run in a single batch; trajectories are buffered in windows and all
    per-seed statistics (running excursion, first confinement exit, first
    escape from the extended action domain) are reduced per window, which
    keeps the per-step cost at a few vector operations.  A seed that leaves
    the extended domain is frozen at its escape state and marked, without
    aborting the others; results are per-seed deterministic and independent
    of batch composition for catalog maps (element-wise stepping only).
    """
    I = np.atleast_2d(np.asarray(I0, dtype=float)).copy()
    phi = np.atleast_2d(np.asarray(phi0, dtype=float)).copy()
    nseeds, d = I.shape
    Iinit = I.copy()
    exc = np.zeros(nseeds)
    step_drift = np.zeros(nseeds)
    exit_idx = np.full(nseeds, -1, dtype=np.int64)
    escape_idx = np.full(nseeds, -1, dtype=np.int64)
    frozen_I = I.copy()
    frozen_phi = phi.copy()
    dom = model.domain
    sigma = dom.sigma

    done = 0
    while done < horizon:
        W = min(window, horizon - done)
        traj = np.empty((W + 1, nseeds, d))
        traj[0] = I
        for k in range(W):
            I, phi = _scan_step(model, I, phi)
            traj[k + 1] = I
        # statistics over the window (step indices done+1 .. done+W)
        dev = np.max(np.abs(traj[1:] - Iinit[None]), axis=-1)      # (W, nseeds)
        dstep = np.max(np.abs(np.diff(traj, axis=0)), axis=-1)     # (W, nseeds)
        live = escape_idx < 0
        # domain escape: first step whose action leaves the extended ball
        bad = ~(dom.dist_to_ball(traj[1:]) <= sigma)               # catches NaN too
        hit = bad.any(axis=0) & live
        if np.any(hit):
            first = np.argmax(bad[:, hit], axis=0)                 # 0-based in window
            escape_idx[hit] = done + 1 + first
            # statistics stop at the escape step (the frozen state)
            cols = np.where(hit)[0]
            for c, f in zip(cols, first):
                dev[f + 1:, c] = -np.inf
                dstep[f + 1:, c] = -np.inf
            frozen_I[cols] = traj[first + 1, cols]  # state at the escape step
            frozen_phi[cols] = phi[cols]            # angle freeze is cosmetic
        dev_max = dev.max(axis=0)
        np.maximum(exc, np.where(live, dev_max, exc), out=exc)
        np.maximum(step_drift, np.where(live, dstep.max(axis=0), step_drift),
                   out=step_drift)
        if confinement_radius is not None and np.any(exit_idx < 0):
            crossed = dev > confinement_radius
            newly = crossed.any(axis=0) & (exit_idx < 0) & live
            if np.any(newly):
                exit_idx[newly] = done + 1 + np.argmax(crossed[:, newly], axis=0)
        # frozen seeds keep their escape-time state
        if not np.all(live):
            mask = (escape_idx >= 0)[:, None]
            I = np.where(mask, frozen_I, I)
            phi = np.where(mask, frozen_phi, phi)
        done += W

    phi_init = np.atleast_2d(np.asarray(phi0, dtype=float))
    out = []
    for i in range(nseeds):
        status = "ok" if escape_idx[i] < 0 else f"domain_escape@{escape_idx[i]}"
        out.append(StabilityRecord(
            seed_index=i, I0=Iinit[i], phi0=phi_init[i],
            excursion=float(exc[i]), horizon=horizon,
            exit_index=None if exit_idx[i] < 0 else int(exit_idx[i]),
            max_step_drift=float(step_drift[i]), status=status))
    return out


def _scan_step(model: MapModel, I, phi):
    """One unguarded vectorized step (domain checks handled by the scan)."""
    ph = phi - np.floor(phi)
    if model.eps == 0.0:
        return I.copy(), phi + model.omega(I)
    if model.form == "explicit":
        return (I + model.eps * model.a(I, ph),
                phi + model.omega(I) + model.eps * model.b(I, ph))
    if model.s_action_independent:
        In = I - model.eps * model.s_phi(I, ph)
    else:
        In = _picard_batch(lambda y: -model.eps * model.s_phi(y, ph), I)
    return In, phi + model.omega(In) + model.eps * model.s_I(In, ph)


#: safety factor applied to the pilot excursion estimate; the pilot probes
#: the widest (period-1) resonance island, whose sweep dominates ensemble
#: excursions, and the factor absorbs seeds in the island's chaotic layer
PILOT_SAFETY = 1.5


@dataclass(frozen=True)
class PilotCalibration:
    c1: float
    pilot_excursion: float
    exponent: float

    def radius(self, eps: float) -> float:
        return self.c1 * eps**self.exponent


def pilot_confinement(model: MapModel, n_pilot: int = 10,
                      horizon: int = 20000) -> PilotCalibration:
    """Calibrate the confinement constant c1 from a designed pilot run.

    Pilot seeds straddle the dominant fully resonant torus (period 1 nearest
    to the domain center), whose island halfwidth ~ sqrt(eps |s|) sets the
    largest excursion scale; random seeds elsewhere sit on invariant curves
    with far smaller excursions.  Returns c1 with
    excursion <= c1 * eps^{1/2(d+1)} expected for the whole ensemble.
    """
    d = model.d
    expo = 1.0 / (2.0 * (d + 1))
    eps = model.eps
    if eps == 0.0 or model.domain.norm_s == 0.0:
        return PilotCalibration(c1=0.0, pilot_excursion=0.0, exponent=expo)
    omega_c = model.omega(model.domain.center)
    I_star = resonant_action(model, np.round(omega_c), model.domain.center)
    halfwidth = 1.25 * math.sqrt(2.0 * model.domain.norm_s * eps / model.domain.nu2)
    offs = np.linspace(0.0, halfwidth, n_pilot)
    I0 = np.tile(I_star, (n_pilot, 1))
    for j in range(n_pilot):
        I0[j, j % d] += offs[j]
    phi0 = np.stack([np.linspace(0.05, 0.95, n_pilot)] * d, axis=-1)
    recs = stability_scan(model, I0, phi0, horizon)
    pilot_exc = max(r.excursion for r in recs)
    return PilotCalibration(c1=PILOT_SAFETY * pilot_exc / eps**expo,
                            pilot_excursion=pilot_exc, exponent=expo)


# ---------------------------------------------------------------------------
# scaling-law fits
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FitReport:
    """OLS fit in log space with numerical-floor bookkeeping."""

    mode: str
    slope: float
    intercept: float
    r_squared: float
    x: np.ndarray
    y_log: np.ndarray
    used: np.ndarray
    n_excluded: int
    degenerate: bool
    reports: tuple = ()

    @property
    def ratios(self) -> np.ndarray:
        vals = np.exp(self.y_log)
        return vals[1:] / vals[:-1]


def _ols(x: np.ndarray, y: np.ndarray) -> tuple[float, float, float]:
    A = np.vstack([x, np.ones_like(x)]).T
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    yhat = A @ coef
    ss_res = float(np.sum((y - yhat) ** 2))
    ss_tot = float(np.sum((y - np.mean(y)) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return float(coef[0]), float(coef[1]), r2


def fit_log_law(x: np.ndarray, values: np.ndarray, mode: str,
                floor: float = 1e-15, reports: tuple = ()) -> FitReport:
    """Fit log(values) against x, excluding floor-contaminated points.

    Points with values <= floor are excluded from the fit and counted in the
    report; with fewer than two usable points the fit is degenerate (reported,
    not raised).
    """
    x = np.asarray(x, dtype=float)
    values = np.asarray(values, dtype=float)
    used = values > floor
    n_excluded = int(np.sum(~used))
    if int(np.sum(used)) < 2:
        return FitReport(mode=mode, slope=float("nan"), intercept=float("nan"),
                         r_squared=float("nan"), x=x, y_log=np.log(np.maximum(values, 1e-300)),
                         used=used, n_excluded=n_excluded, degenerate=True, reports=reports)
    slope, intercept, r2 = _ols(x[used], np.log(values[used]))
    return FitReport(mode=mode, slope=slope, intercept=intercept, r_squared=r2,
                     x=x, y_log=np.log(np.maximum(values, 1e-300)), used=used,
                     n_excluded=n_excluded, degenerate=False, reports=reports)


def error_law_fit(blocks, box: Box, mode: str, m_list: Optional[Sequence[int]] = None,
                  grid_n: int = 4, tol: float = 1e-12, delta: float = 0.5,
                  floor: Optional[float] = None) -> FitReport:
    """Embedding-error scaling laws.

    mode "vs_m": ``blocks`` is a single map; sweep the orders in m_list and
    fit log(error) against m (the per-step ratios live in the report).

    mode "vs_eps": ``blocks`` is a sequence of maps with decreasing distance
    to identity; each is measured at its optimal order and log(error) is
    fitted against 1/eps_hat (negative slope = exponential law).
    """
    if floor is None:
        floor = max(1e-15, 10.0 * tol)
    if mode == "vs_m":
        if m_list is None:
            raise ValueError("vs_m mode needs m_list")
        reports = tuple(embedding_error(blocks, m, box, grid_n, tol, delta)
                        for m in m_list)
        errs = np.array([r.max_error for r in reports])
        return fit_log_law(np.asarray(list(m_list), dtype=float), errs, "vs_m",
                           floor=floor, reports=reports)
    if mode == "vs_eps":
        reports = []
        for blk in blocks:
            from .hamiltonian import distance_to_identity

            eh = distance_to_identity(blk, box, grid_n)
            m_opt = optimal_order(delta, eh, box.d)
            reports.append(embedding_error(blk, m_opt.m, box, grid_n, tol, delta))
        errs = np.array([r.max_error for r in reports])
        inv_eh = np.array([1.0 / r.eps_hat for r in reports])
        return fit_log_law(inv_eh, errs, "vs_eps", floor=floor, reports=tuple(reports))
    raise ValueError(f"unknown fit mode {mode!r}")
