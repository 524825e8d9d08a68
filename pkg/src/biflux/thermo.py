"""Equilibrium thermodynamics of a validated model.

Everything here is an exact finite sum over the local state space: the
log moment generating function G of the tilted single-site measures, the
density map (theta, tau) -> (u, v) = grad G and its Newton inverse, the
entropy S as the convex conjugate of G, the physical domain (the convex
hull of the per-state conserved-quantity pairs), and the macroscopic
fluxes with their first derivatives.

First derivatives of the fluxes are computed analytically: in dual
coordinates d(Phi)/d(theta) is the covariance of the microscopic flux
with zeta_1 + zeta_2 under the two-site product measure, and the chain
rule through the inverse susceptibility gives the (u, v) Jacobian.
Finite differences are kept only as test oracles and for the second
derivatives (differences of the analytic Jacobian with step halving).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import (
    ConvergenceError,
    DegenerateDomainError,
    DomainError,
)
from .model import ModelSpec

NEWTON_TOL = 1e-12
NEWTON_MAX_ITER = 200
HESSIAN_STEP = 1e-4


@dataclass
class CanonicalPoint:
    """Dual coordinates, densities, and the susceptibility at one tilt."""

    theta: float
    tau: float
    u: float
    v: float
    susceptibility: np.ndarray  # 2x2 covariance matrix of (zeta, eta)


@dataclass
class PhysicalDomain:
    """Convex polygon of admissible density pairs, vertices in CCW order."""

    vertices: np.ndarray  # (m, 2)

    def _signed_distances(self, u: float, v: float) -> np.ndarray:
        p = self.vertices
        q = np.roll(p, -1, axis=0)
        edge = q - p
        length = np.hypot(edge[:, 0], edge[:, 1])
        cross = edge[:, 0] * (v - p[:, 1]) - edge[:, 1] * (u - p[:, 0])
        return cross / length  # positive strictly inside (CCW orientation)

    def contains(self, u: float, v: float, margin: float = 0.0) -> bool:
        return bool(np.all(self._signed_distances(u, v) > margin))

    def boundary_distance(self, u: float, v: float) -> float:
        """Distance to the boundary; negative outside the polygon."""
        return float(self._signed_distances(u, v).min())

    @property
    def diameter(self) -> float:
        p = self.vertices
        d = p[:, None, :] - p[None, :, :]
        return float(np.sqrt((d**2).sum(axis=2)).max())


@dataclass
class FluxPoint:
    """Fluxes and their first/second derivatives at a density pair."""

    u: float
    v: float
    Phi: float
    Psi: float
    jacobian: np.ndarray  # 2x2, rows = gradients of (Phi, Psi)
    hess_Phi: np.ndarray  # 2x2 symmetric
    hess_Psi: np.ndarray
    constants: tuple[float, float]  # (C1, C2) added to the raw fluxes


def _arrays(spec: ModelSpec):
    return (
        spec.zeta_values().astype(float),
        spec.eta_values().astype(float),
        spec.pi_values(),
    )


def log_mgf(spec: ModelSpec, theta: float, tau: float) -> float:
    """G(theta, tau) = log sum_w exp(theta*zeta + tau*eta) pi(w), max-shifted."""
    z, e, pi = _arrays(spec)
    expo = theta * z + tau * e
    shift = expo.max()
    return float(shift + np.log(np.sum(np.exp(expo - shift) * pi)))


def canonical_measure(spec: ModelSpec, theta: float, tau: float) -> np.ndarray:
    """The tilted single-site measure pi_{theta,tau}, as probabilities."""
    z, e, pi = _arrays(spec)
    expo = theta * z + tau * e + np.log(pi)
    expo -= expo.max()
    w = np.exp(expo)
    return w / w.sum()


def mean_densities(spec: ModelSpec, theta: float, tau: float) -> CanonicalPoint:
    """Densities (u, v) and the covariance matrix of (zeta, eta) at a tilt."""
    z, e, _ = _arrays(spec)
    p = canonical_measure(spec, theta, tau)
    u = float(p @ z)
    v = float(p @ e)
    czz = float(p @ (z * z)) - u * u
    cze = float(p @ (z * e)) - u * v
    cee = float(p @ (e * e)) - v * v
    g2 = np.array([[czz, cze], [cze, cee]])
    return CanonicalPoint(theta=theta, tau=tau, u=u, v=v, susceptibility=g2)


def physical_domain(spec: ModelSpec) -> PhysicalDomain:
    """Convex hull of the per-state (zeta, eta) points."""
    pts = sorted({(int(zi), int(ei)) for zi, ei in zip(spec.zeta_values(), spec.eta_values())})
    hull = _convex_hull(pts)
    if len(hull) < 3:
        raise DegenerateDomainError(
            "all (zeta, eta) values are collinear; conserved quantities are "
            "degenerate (should have been rejected at load)"
        )
    return PhysicalDomain(vertices=np.array(hull, dtype=float))


def _convex_hull(pts: list[tuple[int, int]]) -> list[tuple[int, int]]:
    """Monotone chain, strict turns only, counterclockwise output."""
    if len(pts) <= 2:
        return list(pts)

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    def build(seq):
        out: list[tuple[int, int]] = []
        for p in seq:
            while len(out) >= 2 and cross(out[-2], out[-1], p) <= 0:
                out.pop()
            out.append(p)
        return out

    lower = build(pts)
    upper = build(reversed(pts))
    return lower[:-1] + upper[:-1]


def _require_interior(spec: ModelSpec, u: float, v: float, margin_scale: float = 1e-9):
    dom = physical_domain(spec)
    margin = margin_scale * dom.diameter
    if not dom.contains(u, v, margin):
        raise DomainError(
            f"density pair ({u}, {v}) is outside or on the boundary of the "
            f"physical domain (vertices {dom.vertices.tolist()})"
        )
    return dom


def invert_densities(
    spec: ModelSpec,
    u: float,
    v: float,
    *,
    tol: float = NEWTON_TOL,
    max_iter: int = NEWTON_MAX_ITER,
) -> CanonicalPoint:
    """Solve grad G(theta, tau) = (u, v) by damped Newton from (0, 0).

    The susceptibility is the exact Jacobian of the map.  Steps are damped
    on the strictly convex merit function G - u*theta - v*tau, which makes
    the iteration globally convergent for interior targets.
    """
    _require_interior(spec, u, v)
    target = np.array([u, v])
    x = np.zeros(2)

    def merit(xx):
        return log_mgf(spec, xx[0], xx[1]) - target @ xx

    point = mean_densities(spec, x[0], x[1])
    for _ in range(max_iter):
        grad = np.array([point.u, point.v]) - target
        resid = float(np.abs(grad).max())
        if resid <= tol:
            return point
        j = point.susceptibility
        cond = np.linalg.cond(j)
        if cond > 1e8:
            warnings.warn(
                f"susceptibility condition number {cond:.3e} at "
                f"(theta, tau) = ({x[0]:.6g}, {x[1]:.6g})",
                RuntimeWarning,
                stacklevel=2,
            )
        step = np.linalg.solve(j, -grad)
        if resid < 1e-6:
            # quadratic convergence zone: merit changes fall below floating
            # resolution, so take the undamped Newton step
            x = x + step
        else:
            base = merit(x)
            scale = 1.0
            while scale >= 2.0**-20:
                trial = x + scale * step
                if merit(trial) < base:
                    break
                scale *= 0.5
            x = x + scale * step
        point = mean_densities(spec, x[0], x[1])
    grad = np.array([point.u, point.v]) - target
    raise ConvergenceError(
        f"Newton inversion did not reach {tol} in {max_iter} iterations; "
        f"last residual {np.abs(grad).max():.3e}"
    )


def measure_at_density(spec: ModelSpec, u: float, v: float) -> np.ndarray:
    """Canonical single-site measure parametrized by its densities."""
    point = invert_densities(spec, u, v)
    return canonical_measure(spec, point.theta, point.tau)


def entropy_S(spec: ModelSpec, u: float, v: float) -> float:
    """Legendre transform S(u,v) = u*theta + v*tau - G at the maximizer."""
    point = invert_densities(spec, u, v)
    return float(
        u * point.theta + v * point.tau - log_mgf(spec, point.theta, point.tau)
    )


# ---------------------------------------------------------------------------
# microscopic and macroscopic fluxes
# ---------------------------------------------------------------------------


def micro_flux(
    spec: ModelSpec, c1: float = 0.0, c2: float = 0.0
) -> tuple[np.ndarray, np.ndarray]:
    """Per-pair flux tables phi, psi of the two conserved quantities.

    phi(w1, w2) = sum_r r(w1,w2; w1',w2') (zeta(w2') - zeta(w2)) + C1 and
    the eta analogue; shape (K, K).
    """
    K = spec.n_states
    z = spec.zeta_values().astype(float)
    e = spec.eta_values().astype(float)
    phi = np.full((K, K), c1)
    psi = np.full((K, K), c2)
    for i1, i2, j1, j2, r in spec.rate_entries():
        phi[i1, i2] += r * (z[j2] - z[i2])
        psi[i1, i2] += r * (e[j2] - e[i2])
    return phi, psi


def _dual_flux_stats(spec: ModelSpec, theta: float, tau: float) -> dict:
    """Fluxes and their dual-coordinate derivatives at a tilt.

    d(Phi)/d(theta) = Cov(phi, zeta_1 + zeta_2) under the two-site product
    measure, and analogously for the other three derivatives.
    """
    z, e, _ = _arrays(spec)
    p = canonical_measure(spec, theta, tau)
    phi, psi = micro_flux(spec)
    u = float(p @ z)
    v = float(p @ e)
    zsum = z[:, None] + z[None, :]
    esum = e[:, None] + e[None, :]
    big_phi = float(p @ phi @ p)
    big_psi = float(p @ psi @ p)
    d_phi_theta = float(p @ (phi * zsum) @ p) - big_phi * 2.0 * u
    d_phi_tau = float(p @ (phi * esum) @ p) - big_phi * 2.0 * v
    d_psi_theta = float(p @ (psi * zsum) @ p) - big_psi * 2.0 * u
    d_psi_tau = float(p @ (psi * esum) @ p) - big_psi * 2.0 * v
    point = mean_densities(spec, theta, tau)
    return {
        "u": u,
        "v": v,
        "Phi": big_phi,
        "Psi": big_psi,
        "dual_jacobian": np.array(
            [[d_phi_theta, d_phi_tau], [d_psi_theta, d_psi_tau]]
        ),
        "susceptibility": point.susceptibility,
    }


def macro_flux(
    spec: ModelSpec,
    u: float,
    v: float,
    constants: tuple[float, float] = (0.0, 0.0),
) -> tuple[float, float]:
    """Equilibrium expectations (Phi, Psi) of the pair fluxes at (u, v)."""
    p = measure_at_density(spec, u, v)
    phi, psi = micro_flux(spec)
    return float(p @ phi @ p + constants[0]), float(p @ psi @ p + constants[1])


def flux_constants(spec: ModelSpec, u0: float, v0: float) -> tuple[float, float]:
    """Constants (C1, C2) making Phi and Psi vanish at the base point."""
    raw = macro_flux(spec, u0, v0)
    return (-raw[0], -raw[1])


def flux_jacobian(spec: ModelSpec, u: float, v: float) -> np.ndarray:
    """D(u, v): rows are the density gradients of Phi and Psi.

    Computed analytically as (dual-coordinate flux derivatives) times the
    inverse susceptibility; additive constants drop out.
    """
    point = invert_densities(spec, u, v)
    stats = _dual_flux_stats(spec, point.theta, point.tau)
    return stats["dual_jacobian"] @ np.linalg.inv(stats["susceptibility"])


def onsager_residual(spec: ModelSpec, theta: float, tau: float) -> float:
    """|d_theta Psi - d_tau Phi| at a tilt; zero for valid models."""
    stats = _dual_flux_stats(spec, theta, tau)
    dual = stats["dual_jacobian"]
    return float(abs(dual[1, 0] - dual[0, 1]))


def flux_hessians(
    spec: ModelSpec, u: float, v: float, h: float = HESSIAN_STEP
) -> tuple[np.ndarray, np.ndarray]:
    """Second derivative matrices of (Phi, Psi) at an interior point.

    Central differences of the analytic Jacobian with step h, symmetrized;
    the h and h/2 estimates must agree to 1e-5 (step-halving check), and
    the h/2 estimate is returned.
    """
    dom = physical_domain(spec)
    if dom.boundary_distance(u, v) < 2.0 * h:
        raise DomainError(
            f"({u}, {v}) is within 2h = {2 * h} of the domain boundary; "
            "cannot difference the Jacobian"
        )

    def estimate(step: float) -> tuple[np.ndarray, np.ndarray]:
        du = (flux_jacobian(spec, u + step, v) - flux_jacobian(spec, u - step, v)) / (
            2.0 * step
        )
        dv = (flux_jacobian(spec, u, v + step) - flux_jacobian(spec, u, v - step)) / (
            2.0 * step
        )
        h_phi = np.array(
            [
                [du[0, 0], 0.5 * (dv[0, 0] + du[0, 1])],
                [0.5 * (dv[0, 0] + du[0, 1]), dv[0, 1]],
            ]
        )
        h_psi = np.array(
            [
                [du[1, 0], 0.5 * (dv[1, 0] + du[1, 1])],
                [0.5 * (dv[1, 0] + du[1, 1]), dv[1, 1]],
            ]
        )
        return h_phi, h_psi

    coarse = estimate(h)
    fine = estimate(h / 2.0)
    gap = max(
        float(np.abs(coarse[0] - fine[0]).max()), float(np.abs(coarse[1] - fine[1]).max())
    )
    if gap > 1e-5:
        raise ConvergenceError(
            f"Hessian step-halving check failed: h vs h/2 differ by {gap:.3e}"
        )
    return fine


def flux_point(
    spec: ModelSpec,
    u: float,
    v: float,
    constants: tuple[float, float] = (0.0, 0.0),
) -> FluxPoint:
    """Assemble fluxes, Jacobian and Hessians at one density pair."""
    phi, psi = macro_flux(spec, u, v, constants)
    jac = flux_jacobian(spec, u, v)
    h_phi, h_psi = flux_hessians(spec, u, v)
    return FluxPoint(
        u=u,
        v=v,
        Phi=phi,
        Psi=psi,
        jacobian=jac,
        hess_Phi=h_phi,
        hess_Psi=h_psi,
        constants=constants,
    )


# ---------------------------------------------------------------------------
# sampling helpers and the thermo table
# ---------------------------------------------------------------------------


def random_interior_points(
    spec: ModelSpec, count: int, rng: np.random.Generator, margin: float = 0.02
) -> np.ndarray:
    """Uniform samples strictly inside the domain, margin in diameters."""
    dom = physical_domain(spec)
    lo = dom.vertices.min(axis=0)
    hi = dom.vertices.max(axis=0)
    abs_margin = margin * dom.diameter
    out = np.empty((count, 2))
    k = 0
    while k < count:
        cand = lo + (hi - lo) * rng.random((4 * (count - k), 2))
        for u, v in cand:
            if dom.contains(u, v, abs_margin):
                out[k] = (u, v)
                k += 1
                if k == count:
                    break
    return out


THERMO_TABLE_COLUMNS = [
    "u", "v", "theta", "tau", "S", "Phi", "Psi",
    "D_uu", "D_uv", "D_vu", "D_vv", "lambda", "mu", "onsager_residual",
]


def thermo_table_rows(
    spec: ModelSpec, grid: int = 20, margin: float = 0.05
) -> list[list[float]]:
    """Thermodynamic quantities over a uniform (u, v) grid of interior points.

    Fluxes are reported with C1 = C2 = 0.
    """
    dom = physical_domain(spec)
    lo = dom.vertices.min(axis=0)
    hi = dom.vertices.max(axis=0)
    abs_margin = margin * dom.diameter
    us = np.linspace(lo[0], hi[0], grid + 2)[1:-1]
    vs = np.linspace(lo[1], hi[1], grid + 2)[1:-1]
    rows = []
    for u in us:
        for v in vs:
            if not dom.contains(u, v, abs_margin):
                continue
            point = invert_densities(spec, u, v)
            s_val = entropy_S(spec, u, v)
            stats = _dual_flux_stats(spec, point.theta, point.tau)
            jac = stats["dual_jacobian"] @ np.linalg.inv(stats["susceptibility"])
            eig = np.linalg.eigvals(jac)
            eig = np.sort(eig.real)[::-1]
            rows.append(
                [
                    u, v, point.theta, point.tau, s_val,
                    stats["Phi"], stats["Psi"],
                    jac[0, 0], jac[0, 1], jac[1, 0], jac[1, 1],
                    float(eig[0]), float(eig[1]),
                    onsager_residual(spec, point.theta, point.tau),
                ]
            )
    return rows
