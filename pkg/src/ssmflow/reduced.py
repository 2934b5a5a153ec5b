"""Reduced polynomial dynamics ``theta' = R(theta)`` on the SSM.

For a conjugate pair ``theta = (z, conj z)`` with ``z = rho e^{i phi}`` the
phase-equivariant monomials ``z^{k+1} conj(z)^k`` give the polar form

    rho' = a1 rho + a3 rho^3 + ...,    phi' = w0 + w2 rho^2 + ...
"""

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from .errors import FiniteTimeEscapeError, UnsupportedDimensionError
from .ssm import evaluate_K

log = logging.getLogger(__name__)


@dataclass
class ReducedVectorField:
    r: int
    coeffs: dict
    order: int

    @classmethod
    def from_table(cls, table):
        return cls(table.r, dict(table.r_coeffs), table.order)

    def linear_part(self):
        lin = np.zeros((self.r, self.r), dtype=complex)
        for a, c in self.coeffs.items():
            if sum(a) == 1:
                lin[:, int(np.argmax(a))] = c
        return lin


@dataclass
class PolarForm:
    radial: np.ndarray  # a1, a3, a5, ...
    angular: np.ndarray  # w0, w2, w4, ...
    equivariance_defect: float = 0.0

    def rdot(self, rho):
        rho = np.asarray(rho, dtype=float)
        return sum(c * rho ** (2 * k + 1) for k, c in enumerate(self.radial))

    def phidot(self, rho):
        rho = np.asarray(rho, dtype=float)
        return sum(c * rho ** (2 * k) for k, c in enumerate(self.angular))

    def scaled(self, s):
        """Polar form in the coordinate ``rho / s`` (eigenvectors scaled by ``s``)."""
        k = np.arange(len(self.radial))
        return PolarForm(self.radial * s ** (2 * k), self.angular * s ** (2 * k), self.equivariance_defect)


@dataclass
class InvariantRadius:
    radius: float
    stable: bool
    slope: float
    trusted: bool = True


def eval_R(field, theta):
    """Evaluate ``R(theta)`` from tabulated powers of each coordinate."""
    theta = np.asarray(theta, dtype=complex)
    if theta.shape != (field.r,):
        raise UnsupportedDimensionError(f"theta must have shape ({field.r},), got {theta.shape}")
    top = max((max(a) for a in field.coeffs), default=0)
    powers = np.ones((field.r, top + 1), dtype=complex)
    for p in range(1, top + 1):
        powers[:, p] = powers[:, p - 1] * theta
    out = np.zeros(field.r, dtype=complex)
    idx = np.arange(field.r)
    for a, c in field.coeffs.items():
        out += c * np.prod(powers[idx, list(a)])
    return out


def to_polar(field, q=0):
    """Polar form of a two-dimensional field with ``theta_2 = conj(theta_1)``."""
    if field.r != 2:
        raise UnsupportedDimensionError(f"polar form needs r = 2, got r = {field.r}")
    p = 1 - q
    kmax = (field.order - 1) // 2
    radial = np.zeros(kmax + 1)
    angular = np.zeros(kmax + 1)
    defect = 0.0
    for a, c in field.coeffs.items():
        gamma = c[q]
        if a[q] == a[p] + 1:
            k = a[p]
            if k <= kmax:
                radial[k] = gamma.real
                angular[k] = gamma.imag
            continue
        defect += abs(gamma) ** 2
    return PolarForm(radial, angular, float(np.sqrt(defect)))


def invariant_radii(polar, r_max=np.inf):
    """Positive roots of ``a1 + a3 r^2 + a5 r^4 + ...`` in ``(0, r_max]``."""
    coef = np.trim_zeros(np.asarray(polar.radial, dtype=float), "b")
    if coef.size < 2:
        return []
    roots = np.roots(coef[::-1])
    g = lambda rho: sum(c * rho ** (2 * k) for k, c in enumerate(coef))
    found = []
    for s in roots:
        if abs(s.imag) > 1e-9 * max(1.0, abs(s)) or s.real <= 0:
            continue
        rho = float(np.sqrt(s.real))
        lo, hi = rho * (1 - 1e-6), rho * (1 + 1e-6)
        if g(lo) * g(hi) < 0:
            rho = brentq(g, lo, hi, xtol=1e-14, rtol=1e-15)
        if rho > r_max:
            log.info("invariant radius %.6g outside r_max=%.6g", rho, r_max)
        dg = sum(2 * k * c * rho ** (2 * k - 1) for k, c in enumerate(coef) if k > 0)
        slope = rho * dg  # d(rho')/d rho at a root of g
        found.append(InvariantRadius(rho, slope < 0, slope, rho <= r_max))
    found.sort(key=lambda x: x.radius)
    return found


def cycle_frequency(polar, radius):
    """Angular frequency ``w0 + w2 r^2 + ...`` on an invariant circle."""
    return float(polar.phidot(radius))


@dataclass
class Trajectory:
    t: np.ndarray
    theta: np.ndarray  # (len(t), r)
    observables: Optional[list] = None
    states: Optional[list] = None


def integrate(field, theta0, t_span, rtol=1e-9, atol=1e-12, t_eval=None, escape_radius=1e6, method="DOP853"):
    """Integrate the reduced field with an embedded explicit Runge-Kutta pair.

    Raises
    ------
    FiniteTimeEscapeError
        The solution left ``|theta| <= escape_radius`` or the step size
        collapsed; the partial trajectory is attached.
    """
    theta0 = np.asarray(theta0, dtype=complex)

    def rhs(t, y):
        return eval_R(field, y)

    def escape(t, y):
        return escape_radius - np.max(np.abs(y))

    escape.terminal = True
    sol = solve_ivp(
        rhs, t_span, theta0, method=method, rtol=rtol, atol=atol, t_eval=t_eval, events=escape, dense_output=False
    )
    traj = Trajectory(sol.t, sol.y.T)
    if sol.status == 1 or sol.status == -1:
        raise FiniteTimeEscapeError(
            f"trajectory escaped or stalled near t={sol.t[-1]:.6g}: {sol.message}", t=sol.t, y=sol.y.T
        )
    return traj


def polar_trajectory(polar, rho0, t_span, rtol=1e-10, atol=1e-13, t_eval=None):
    """Integrate the radial equation alone."""
    sol = solve_ivp(
        lambda t, y: polar.rdot(y), t_span, [rho0], method="DOP853", rtol=rtol, atol=atol, t_eval=t_eval
    )
    if sol.status != 0:
        raise FiniteTimeEscapeError(f"radial trajectory failed: {sol.message}", t=sol.t, y=sol.y.T)
    return sol.t, sol.y[0]


def lift_orbit(table, trajectory, to_state=None, observe=None, conjugate=None):
    """Evaluate ``K`` along a reduced trajectory.

    Parameters
    ----------
    to_state : callable, optional
        Converts a full vector into the object passed to ``observe``.
    observe : callable, optional
        Returns a dict of observables for a lifted state.
    """
    states, obs = [], []
    for th in trajectory.theta:
        v = evaluate_K(table, th, conjugate=conjugate)
        st = to_state(v) if to_state is not None else v
        states.append(st)
        if observe is not None:
            obs.append(observe(st))
    trajectory.states = states
    trajectory.observables = obs if observe is not None else None
    return trajectory


def circle_trajectory(table, radius, frequency, times):
    """Reduced trajectory on an invariant circle, ``z = radius e^{i w t}``."""
    z = radius * np.exp(1j * frequency * np.asarray(times))
    theta = np.zeros((len(times), table.r), dtype=complex)
    theta[:, 0] = z
    if table.r > 1 and table.partner and table.partner[0] >= 0:
        theta[:, table.partner[0]] = np.conj(z)
    return Trajectory(np.asarray(times, dtype=float), theta)
