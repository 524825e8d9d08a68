"""Eigenstructure, geometric-optics coefficients, and the decoupled solves.

Around a strictly hyperbolic equilibrium point the two-component system
splits into two scalar conservation laws riding at the sound speeds
lambda and mu.  This module computes the eigenframe and the quadratic
coupling coefficients, integrates the two Cauchy problems with a
first-order Godunov scheme (the prediction lives in the smooth, pre-shock
regime), and reconstructs the predicted density profiles including the
next-order corrections built from antiderivatives of the mean-zero waves.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import brentq

from .errors import HyperbolicityError, ShockTimeError
from .model import ModelSpec
from . import thermo

EIGEN_GAP_TOL = 1e-8
DEFAULT_GRID = 1024
DEFAULT_CFL = 0.5
SHOCK_SAFETY = 0.9
COUPLING_SNAP_TOL = 1e-9


# ---------------------------------------------------------------------------
# eigenstructure and coordinates
# ---------------------------------------------------------------------------


@dataclass
class EigenStructure:
    """Eigenvalues and biorthogonal eigenvectors of the flux Jacobian.

    Right vectors r, s are unit length with the first nonzero component
    positive; left rows l, m satisfy l.r = m.s = 1 and l.s = m.r = 0.
    The eigenpair whose right vector leans most along the first density
    axis is labeled (lambda, r).
    """

    lam: float
    mu: float
    r: np.ndarray
    s: np.ndarray
    l: np.ndarray
    m: np.ndarray

    def reconstruct(self) -> np.ndarray:
        """lambda r l + mu s m, which must reproduce the Jacobian."""
        return self.lam * np.outer(self.r, self.l) + self.mu * np.outer(self.s, self.m)

    @property
    def gap(self) -> float:
        return float(self.lam - self.mu)


def _positive_first(vec: np.ndarray) -> np.ndarray:
    for comp in vec:
        if abs(comp) > 1e-14:
            return vec if comp > 0 else -vec
    return vec


def eigen_structure(d: np.ndarray, *, gap_tol: float = EIGEN_GAP_TOL) -> EigenStructure:
    """Normalized eigen-system of a 2x2 flux Jacobian.

    Raises HyperbolicityError on complex eigenvalues (the model would
    violate weak hyperbolicity) or when |lambda - mu| <= gap_tol (strict
    hyperbolicity, lambda != mu, is required).
    """
    d = np.asarray(d, dtype=float)
    vals, vecs = np.linalg.eig(d)
    scale = 1.0 + float(np.abs(vals.real).max())
    if np.abs(vals.imag).max() > 1e-10 * scale:
        raise HyperbolicityError(
            f"complex eigenvalues {vals}: flux Jacobian is not real-diagonalizable "
            "(weak hyperbolicity violated; model is inconsistent)"
        )
    vals = vals.real
    vecs = vecs.real
    if abs(vals[0] - vals[1]) <= gap_tol:
        raise HyperbolicityError(
            f"strict hyperbolicity fails: |lambda - mu| = {abs(vals[0] - vals[1]):.3e} "
            f"<= {gap_tol:.1e} (the two sound speeds must differ)"
        )
    first = 0 if abs(vecs[0, 0]) >= abs(vecs[0, 1]) else 1
    second = 1 - first
    r = _positive_first(vecs[:, first] / np.linalg.norm(vecs[:, first]))
    s = _positive_first(vecs[:, second] / np.linalg.norm(vecs[:, second]))
    left = np.linalg.inv(np.column_stack([r, s]))
    return EigenStructure(
        lam=float(vals[first]), mu=float(vals[second]), r=r, s=s, l=left[0], m=left[1]
    )


@dataclass
class NormalizedFrame:
    """Affine observable change making the Jacobian diagonal at the point.

    Densities map as (u, v) -> (l.((u,v)-(u0,v0)), m.((u,v)-(u0,v0))); the
    transformed fluxes vanish at the origin and their Jacobian there is
    diag(lambda, mu).  The transform acts on observables only, never on
    the rates.
    """

    spec: ModelSpec
    u0: float
    v0: float
    eigen: EigenStructure
    constants: tuple[float, float]

    def to_normalized(self, u, v):
        du = np.asarray(u) - self.u0
        dv = np.asarray(v) - self.v0
        e = self.eigen
        return e.l[0] * du + e.l[1] * dv, e.m[0] * du + e.m[1] * dv

    def from_normalized(self, p, q):
        e = self.eigen
        p = np.asarray(p)
        q = np.asarray(q)
        return self.u0 + p * e.r[0] + q * e.s[0], self.v0 + p * e.r[1] + q * e.s[1]

    def transform_observables(
        self, zeta: np.ndarray, eta: np.ndarray
    ) -> tuple[np.ndarray, np.ndarray]:
        return self.to_normalized(np.asarray(zeta, float), np.asarray(eta, float))

    def flux(self, p: float, q: float) -> tuple[float, float]:
        """Transformed fluxes; both vanish at (p, q) = (0, 0)."""
        u, v = self.from_normalized(p, q)
        raw = thermo.macro_flux(self.spec, float(u), float(v))
        base = thermo.macro_flux(self.spec, self.u0, self.v0)
        e = self.eigen
        f = np.array(raw) - np.array(base)
        return float(e.l @ f), float(e.m @ f)

    def jacobian(self, p: float, q: float) -> np.ndarray:
        u, v = self.from_normalized(p, q)
        d = thermo.flux_jacobian(self.spec, float(u), float(v))
        e = self.eigen
        t = np.vstack([e.l, e.m])
        return t @ d @ np.column_stack([e.r, e.s])


def normalize_coordinates(spec: ModelSpec, u0: float, v0: float) -> NormalizedFrame:
    """Build the normalizing frame at a strictly hyperbolic interior point."""
    d = thermo.flux_jacobian(spec, u0, v0)
    eigen = eigen_structure(d)
    constants = thermo.flux_constants(spec, u0, v0)
    return NormalizedFrame(spec=spec, u0=u0, v0=v0, eigen=eigen, constants=constants)


# ---------------------------------------------------------------------------
# geometric-optics coefficients
# ---------------------------------------------------------------------------


@dataclass
class GeoCoeffs:
    """Quadratic coefficients of the two decoupled scalar equations.

    a1, a2, b1, b2 are the frame-contracted values; a1n..b3 are the
    Hessian entries of the transformed fluxes in the normalized frame
    (the two routes agree to 1e-6 and both are kept).  c_sigma, c_delta
    are the conserved means of the initial waves, filled in by the
    experiment driver.
    """

    a1: float
    a2: float
    b1: float
    b2: float
    a1n: float
    a2n: float
    a3: float
    b1n: float
    b2n: float
    b3: float
    c_sigma: float = 0.0
    c_delta: float = 0.0

    @property
    def genuinely_nonlinear(self) -> bool:
        return self.a1 != 0.0 and self.b1 != 0.0

    def with_means(self, c_sigma: float, c_delta: float) -> "GeoCoeffs":
        return replace(self, c_sigma=c_sigma, c_delta=c_delta)


def _snap(x: float, tol: float) -> float:
    return 0.0 if abs(x) <= tol else float(x)


def geo_coefficients(
    spec: ModelSpec,
    u0: float,
    v0: float,
    *,
    h: float = 1e-4,
    coupling_tol: float = COUPLING_SNAP_TOL,
) -> GeoCoeffs:
    """Coefficients at (u0, v0), computed along two independent routes.

    Route one contracts the density-frame Hessians with the eigenframe;
    route two differences the transformed Jacobian in the normalized
    frame.  The routes must agree within 1e-6.  Values below
    ``coupling_tol`` are snapped to exact zeros so that decoupled models
    stay exactly decoupled downstream.
    """
    frame = normalize_coordinates(spec, u0, v0)
    e = frame.eigen
    h_phi, h_psi = thermo.flux_hessians(spec, u0, v0)

    def contract(left, x, y):
        return float(left @ np.array([x @ h_phi @ y, x @ h_psi @ y]))

    a1 = contract(e.l, e.r, e.r)
    a2 = contract(e.l, e.r, e.s)
    a3g = contract(e.l, e.s, e.s)
    b1 = contract(e.m, e.s, e.s)
    b2 = contract(e.m, e.r, e.s)
    b3g = contract(e.m, e.r, e.r)

    def djac(dp, dq):
        return frame.jacobian(dp, dq)

    dp = (djac(h, 0.0) - djac(-h, 0.0)) / (2.0 * h)
    dq = (djac(0.0, h) - djac(0.0, -h)) / (2.0 * h)
    a1n = dp[0, 0]
    a2n = 0.5 * (dq[0, 0] + dp[0, 1])
    a3n = dq[0, 1]
    b3n = dp[1, 0]
    b2n = 0.5 * (dq[1, 0] + dp[1, 1])
    b1n = dq[1, 1]

    pairs = [(a1, a1n), (a2, a2n), (a3g, a3n), (b1, b1n), (b2, b2n), (b3g, b3n)]
    worst = max(abs(x - y) for x, y in pairs)
    if worst > 1e-6:
        raise HyperbolicityError(
            f"coefficient cross-check failed: contracted vs normalized-frame "
            f"values differ by {worst:.3e} (> 1e-6)"
        )

    return GeoCoeffs(
        a1=_snap(a1, coupling_tol),
        a2=_snap(a2, coupling_tol),
        b1=_snap(b1, coupling_tol),
        b2=_snap(b2, coupling_tol),
        a1n=_snap(a1n, coupling_tol),
        a2n=_snap(a2n, coupling_tol),
        a3=_snap(a3n, coupling_tol),
        b1n=_snap(b1n, coupling_tol),
        b2n=_snap(b2n, coupling_tol),
        b3=_snap(b3n, coupling_tol),
    )


# ---------------------------------------------------------------------------
# grids, initial waves
# ---------------------------------------------------------------------------


def cell_centers(m: int) -> np.ndarray:
    """Sample points k/m; each is the midpoint of its cell [k/m - h, k/m + h).

    Putting the cell centers on the lattice points makes the t = 0
    reconstruction exact at sites j/n whenever n divides m.
    """
    return np.arange(m) / m


def periodic_interp(xq, x_nodes: np.ndarray, values: np.ndarray):
    """Linear interpolation of a periodic grid function on the unit torus."""
    xq = np.asarray(xq, dtype=float)
    x0 = x_nodes[0]
    q = np.mod(xq - x0, 1.0) + x0
    xp = np.concatenate([x_nodes, [x_nodes[0] + 1.0]])
    fp = np.concatenate([values, [values[0]]])
    return np.interp(q, xp, fp)


@dataclass
class InitialWaves:
    """Initial wave profiles sigma0, delta0 and their conserved means."""

    x: np.ndarray
    sigma0: np.ndarray
    delta0: np.ndarray
    c_sigma: float
    c_delta: float


def initial_waves(
    u_star: Callable[[np.ndarray], np.ndarray],
    v_star: Callable[[np.ndarray], np.ndarray],
    eigen: EigenStructure,
    m: int = DEFAULT_GRID,
) -> InitialWaves:
    """Project the perturbation profiles onto the eigenframe.

    sigma0 = l.(u*, v*), delta0 = m.(u*, v*) sampled as midpoint cell
    averages; the means are the periodic trapezoid integrals (the mean of
    the samples on a uniform periodic grid).
    """
    if m < 64:
        raise ValueError(f"grid size {m} below the minimum of 64")
    x = cell_centers(m)
    us = np.broadcast_to(np.asarray(u_star(x), dtype=float), x.shape)
    vs = np.broadcast_to(np.asarray(v_star(x), dtype=float), x.shape)
    sigma0 = eigen.l[0] * us + eigen.l[1] * vs
    delta0 = eigen.m[0] * us + eigen.m[1] * vs
    return InitialWaves(
        x=x,
        sigma0=sigma0,
        delta0=delta0,
        c_sigma=float(sigma0.mean()),
        c_delta=float(delta0.mean()),
    )


# ---------------------------------------------------------------------------
# scalar conservation law: Godunov scheme and characteristics oracle
# ---------------------------------------------------------------------------


def shock_time_estimate(w0: np.ndarray, quad: float) -> float:
    """First characteristic crossing time of f(w) = quad w^2/2 + lin w.

    Equals -1/min d/dx(f'(w0)) when a compressive slope exists, else inf;
    the linear part does not steepen and drops out.
    """
    m = len(w0)
    slope = quad * (np.roll(w0, -1) - np.roll(w0, 1)) * (m / 2.0)
    worst = float(slope.min())
    if worst >= -1e-300:
        return np.inf
    return -1.0 / worst


def _godunov_flux(wl: np.ndarray, wr: np.ndarray, quad: float, lin: float):
    """Exact Riemann (Godunov) flux for the quadratic flux function."""

    def f(w):
        return 0.5 * quad * w * w + lin * w

    if quad == 0.0:
        return f(wl) if lin >= 0 else f(wr)
    vertex = -lin / quad
    lo = np.minimum(wl, wr)
    hi = np.maximum(wl, wr)
    if quad > 0.0:
        # convex: min over [wl, wr] if wl<=wr else max of endpoints
        interior = f(np.clip(vertex, lo, hi))
        endpoint = np.maximum(f(wl), f(wr))
        return np.where(wl <= wr, interior, endpoint)
    # concave: max over [wr, wl] if wl>wr else min of endpoints
    interior = f(np.clip(vertex, lo, hi))
    endpoint = np.minimum(f(wl), f(wr))
    return np.where(wl > wr, interior, endpoint)


def solve_scalar_conservation(
    w0: np.ndarray,
    quad: float,
    lin: float,
    times: Sequence[float],
    *,
    cfl: float = DEFAULT_CFL,
) -> tuple[np.ndarray, float]:
    """First-order conservative Godunov solve on the periodic unit torus.

    Returns the cell averages at each requested time (shape (len(times), M))
    and the largest per-step drift of the total mass.  Refuses to integrate
    beyond the estimated shock time: the prediction is only meaningful for
    smooth solutions.
    """
    w = np.array(w0, dtype=float)
    m = len(w)
    dx = 1.0 / m
    times = [float(t) for t in times]
    if any(t < 0 for t in times) or list(times) != sorted(times):
        raise ValueError("times must be nonnegative and ascending")
    t_shock = shock_time_estimate(w, quad)
    if times and times[-1] > t_shock:
        raise ShockTimeError(
            f"requested time {times[-1]:.6g} exceeds the estimated shock time "
            f"{t_shock:.6g}; the smooth-regime guard refuses to continue"
        )
    snaps = np.empty((len(times), m))
    t = 0.0
    max_drift = 0.0
    for k, target in enumerate(times):
        while t < target - 1e-14:
            speed = float(np.abs(quad * w + lin).max())
            dt = (target - t) if speed == 0.0 else min(cfl * dx / speed, target - t)
            mass_before = w.sum()
            flux_right = _godunov_flux(w, np.roll(w, -1), quad, lin)
            w = w - (dt / dx) * (flux_right - np.roll(flux_right, 1))
            t += dt
            max_drift = max(max_drift, abs(w.sum() - mass_before) * dx)
        snaps[k] = w
    return snaps, max_drift


def characteristics_oracle(
    w0: Callable[[float], float],
    quad: float,
    lin: float,
    t: float,
    x,
    *,
    tol: float = 1e-12,
) -> np.ndarray | float:
    """Pre-shock solution via the implicit equation w = w0(x - (quad w + lin) t).

    Solved per point by safeguarded bisection (Brent) between the range
    bounds of w0; the residual of the implicit equation is driven below
    ``tol``.  Raises ShockTimeError when no bracketing exists.
    """
    sample = np.asarray(w0(cell_centers(4096)), dtype=float)
    # pad past the sampling error of the range bounds; pre-shock the root
    # is unique so enlarging the bracket is harmless
    pad = 1e-3 * (1.0 + float(sample.max() - sample.min()))
    lo = float(sample.min()) - pad
    hi = float(sample.max()) + pad

    def solve_one(xx: float) -> float:
        def implicit(w):
            return w - float(w0(np.mod(xx - (quad * w + lin) * t, 1.0)))

        f_lo, f_hi = implicit(lo), implicit(hi)
        if f_lo == 0.0:
            return lo
        if f_hi == 0.0:
            return hi
        if f_lo * f_hi > 0:
            raise ShockTimeError(
                f"characteristic equation has no bracketed root at x={xx}, t={t} "
                "(past the shock time?)"
            )
        root = brentq(implicit, lo, hi, xtol=1e-14, rtol=8.9e-16)
        if abs(implicit(root)) > tol:
            raise ShockTimeError(
                f"characteristic root residual {implicit(root):.3e} exceeds {tol}"
            )
        return float(root)

    if np.ndim(x) == 0:
        return solve_one(float(x))
    return np.array([solve_one(float(xx)) for xx in np.asarray(x, float)])


# ---------------------------------------------------------------------------
# wave fields, reconstruction, corrections
# ---------------------------------------------------------------------------


@dataclass
class WaveField:
    """Both scalar waves on the solver grid at one macroscopic time."""

    time: float
    x: np.ndarray
    sigma: np.ndarray
    delta: np.ndarray
    c_sigma: float
    c_delta: float

    @property
    def m(self) -> int:
        return len(self.x)

    def sigma_at(self, xq):
        return periodic_interp(xq, self.x, self.sigma)

    def delta_at(self, xq):
        return periodic_interp(xq, self.x, self.delta)

    def _derivative(self, values: np.ndarray) -> np.ndarray:
        return (np.roll(values, -1) - np.roll(values, 1)) * (self.m / 2.0)

    def sigma_x_at(self, xq):
        return periodic_interp(xq, self.x, self._derivative(self.sigma))

    def delta_x_at(self, xq):
        return periodic_interp(xq, self.x, self._derivative(self.delta))

    def antiderivative(self, which: str) -> Callable:
        """x -> integral_0^x of (wave - mean).

        Integrating the cell-averaged wave is exact between cell
        boundaries (k - 1/2)/M and piecewise linear inside cells; the
        result is periodic up to the conserved-mass drift because the
        integrand is mean-zero over the circle.
        """
        values, c = (
            (self.sigma, self.c_sigma) if which == "sigma" else (self.delta, self.c_delta)
        )
        m = self.m
        dx = 1.0 / m
        half = 0.5 * dx
        boundaries = (np.arange(m + 1) - 0.5) * dx
        g_nodes = np.concatenate([[0.0], np.cumsum(values - c) * dx])
        g_zero = half * (values[0] - c)  # G(0) relative to G(-h)
        full_turn = g_nodes[-1]

        def evaluate(xq):
            xq = np.asarray(xq, dtype=float)
            z = xq + half
            k = np.floor(z)
            y = (z - k) - half  # wrapped into [-h, 1 - h)
            return np.interp(y, boundaries, g_nodes) + k * full_turn - g_zero

        return evaluate


def solve_wave_pair(
    init: InitialWaves, coeffs: GeoCoeffs, times: Sequence[float], *, cfl: float = DEFAULT_CFL
) -> tuple[list[WaveField], float]:
    """Integrate the two decoupled Cauchy problems to the requested times.

    sigma rides with flux a1 w^2/2 + (c_delta a2) w, delta with
    b1 w^2/2 + (c_sigma b2) w.  Returns one WaveField per time plus the
    worst per-step mass drift across both solves.
    """
    sig_snaps, drift_s = solve_scalar_conservation(
        init.sigma0, coeffs.a1, coeffs.c_delta * coeffs.a2, times, cfl=cfl
    )
    del_snaps, drift_d = solve_scalar_conservation(
        init.delta0, coeffs.b1, coeffs.c_sigma * coeffs.b2, times, cfl=cfl
    )
    fields = [
        WaveField(
            time=float(t),
            x=init.x,
            sigma=sig_snaps[k],
            delta=del_snaps[k],
            c_sigma=init.c_sigma,
            c_delta=init.c_delta,
        )
        for k, t in enumerate(times)
    ]
    return fields, max(drift_s, drift_d)


def wave_shock_time(init: InitialWaves, coeffs: GeoCoeffs) -> float:
    """Earlier of the two single-wave shock-time estimates."""
    return min(
        shock_time_estimate(init.sigma0, coeffs.a1),
        shock_time_estimate(init.delta0, coeffs.b1),
    )


def reconstruct_profiles(
    field: WaveField,
    eigen: EigenStructure,
    n: int,
    beta: float,
    x: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Predicted perturbation profiles at the lattice sites.

    (u, v)(t, x) = sigma(t, x - lambda n^beta t) r + delta(t, x - mu n^beta t) s,
    evaluated at x = j/n (or the given points) by periodic interpolation.
    """
    if x is None:
        x = np.arange(n) / n
    stretch = float(n) ** beta * field.time
    sig = field.sigma_at(x - eigen.lam * stretch)
    del_ = field.delta_at(x - eigen.mu * stretch)
    return sig * eigen.r[0] + del_ * eigen.s[0], sig * eigen.r[1] + del_ * eigen.s[1]


def correction_functions(
    field: WaveField, coeffs: GeoCoeffs, eigen: EigenStructure
) -> tuple[Callable, Callable]:
    """The two-argument correction surfaces built from the solved waves.

    sigma_bar(x1, x2) = [a2n sigma(x1) delta(x2)
                         + a2n sigma_x(x1) * Int_0^{x2}(delta - c_delta)
                         + (a3/2) delta(x2)^2] / (lambda - mu)
    and the mirror image for delta_bar with b2n, b3 and 1/(mu - lambda).
    Both are periodic in each argument because only mean-zero waves are
    integrated.
    """
    gap = eigen.gap
    if abs(gap) <= EIGEN_GAP_TOL:
        raise HyperbolicityError(
            f"eigenvalue gap {gap:.3e} too small for the corrections"
        )
    int_delta = field.antiderivative("delta")
    int_sigma = field.antiderivative("sigma")

    def sigma_bar(x1, x2):
        if coeffs.a2n == 0.0 and coeffs.a3 == 0.0:
            return np.zeros(np.broadcast(np.asarray(x1), np.asarray(x2)).shape)
        sig = field.sigma_at(x1)
        dlt = field.delta_at(x2)
        term = (
            coeffs.a2n * sig * dlt
            + coeffs.a2n * field.sigma_x_at(x1) * int_delta(x2)
            + 0.5 * coeffs.a3 * dlt * dlt
        )
        return term / gap

    def delta_bar(x1, x2):
        if coeffs.b2n == 0.0 and coeffs.b3 == 0.0:
            return np.zeros(np.broadcast(np.asarray(x1), np.asarray(x2)).shape)
        sig = field.sigma_at(x1)
        dlt = field.delta_at(x2)
        term = (
            coeffs.b2n * sig * dlt
            + coeffs.b2n * field.delta_x_at(x2) * int_sigma(x1)
            + 0.5 * coeffs.b3 * sig * sig
        )
        return -term / gap

    return sigma_bar, delta_bar


@dataclass
class CorrectedProfiles:
    """Normalized-frame profiles with and without the n^-beta correction."""

    x: np.ndarray
    u_plain: np.ndarray  # sigma(t, x - lambda n^beta t)
    v_plain: np.ndarray  # delta(t, x - mu n^beta t)
    u_tilde: np.ndarray
    v_tilde: np.ndarray
    sigma_bar: np.ndarray  # correction surface along the observation diagonal
    delta_bar: np.ndarray


def corrected_profiles(
    field: WaveField,
    coeffs: GeoCoeffs,
    eigen: EigenStructure,
    n: int,
    beta: float,
    x: np.ndarray | None = None,
) -> CorrectedProfiles:
    """Profiles in the normalized frame including the n^-beta corrections.

    u_tilde = sigma(t, x1) + n^-beta sigma_bar(t, x1, x2) with
    x1 = x - lambda n^beta t and x2 = x - mu n^beta t; v_tilde
    analogously.  Exact zeros of the coupling coefficients make the
    corrections exact zeros, so decoupled models reproduce the plain
    profiles bitwise.
    """
    if x is None:
        x = np.arange(n) / n
    stretch = float(n) ** beta * field.time
    x1 = x - eigen.lam * stretch
    x2 = x - eigen.mu * stretch
    sigma_bar, delta_bar = correction_functions(field, coeffs, eigen)
    sb = sigma_bar(x1, x2)
    db = delta_bar(x1, x2)
    amp = float(n) ** (-beta)
    u_plain = field.sigma_at(x1)
    v_plain = field.delta_at(x2)
    return CorrectedProfiles(
        x=np.asarray(x, float),
        u_plain=u_plain,
        v_plain=v_plain,
        u_tilde=u_plain + amp * sb,
        v_tilde=v_plain + amp * db,
        sigma_bar=sb,
        delta_bar=db,
    )


# ---------------------------------------------------------------------------
# experiment composition root
# ---------------------------------------------------------------------------


@dataclass
class WaveProblem:
    """Everything the predictions need at one equilibrium point.

    Bundles the flux constants, eigenframe, geometric-optics coefficients
    (with the conserved means filled in), initial waves and the shock-time
    guard for a given model, base point and perturbation profiles.
    """

    spec: ModelSpec
    u0: float
    v0: float
    frame: NormalizedFrame
    coeffs: GeoCoeffs
    init: InitialWaves
    shock_time: float

    @classmethod
    def build(
        cls,
        spec: ModelSpec,
        u0: float,
        v0: float,
        u_star: Callable,
        v_star: Callable,
        m: int = DEFAULT_GRID,
    ) -> "WaveProblem":
        frame = normalize_coordinates(spec, u0, v0)
        coeffs = geo_coefficients(spec, u0, v0)
        init = initial_waves(u_star, v_star, frame.eigen, m)
        coeffs = coeffs.with_means(init.c_sigma, init.c_delta)
        return cls(
            spec=spec,
            u0=u0,
            v0=v0,
            frame=frame,
            coeffs=coeffs,
            init=init,
            shock_time=wave_shock_time(init, coeffs),
        )

    @property
    def eigen(self) -> EigenStructure:
        return self.frame.eigen

    def guard_times(self, times: Sequence[float], factor: float = SHOCK_SAFETY) -> None:
        latest = max(times, default=0.0)
        if latest > factor * self.shock_time:
            raise ShockTimeError(
                f"observation time {latest:.6g} exceeds {factor} x estimated "
                f"shock time {self.shock_time:.6g}"
            )

    def fields_at(self, times: Sequence[float]) -> list[WaveField]:
        fields, _ = solve_wave_pair(self.init, self.coeffs, times)
        return fields

    def density_profiles(
        self, field: WaveField, n: int, beta: float, *, corrected: bool = False
    ) -> tuple[np.ndarray, np.ndarray]:
        """Per-site density pairs under the (corrected) local-equilibrium
        prediction, in the original density frame."""
        amp = float(n) ** (-beta)
        if not corrected:
            du, dv = reconstruct_profiles(field, self.eigen, n, beta)
            return self.u0 + amp * du, self.v0 + amp * dv
        prof = corrected_profiles(field, self.coeffs, self.eigen, n, beta)
        e = self.eigen
        du = prof.u_tilde * e.r[0] + prof.v_tilde * e.s[0]
        dv = prof.u_tilde * e.r[1] + prof.v_tilde * e.s[1]
        return self.u0 + amp * du, self.v0 + amp * dv
