"""Newton iteration and pseudo-arclength continuation.

The solvers are generic: a problem supplies ``residual(x, p)`` and
``jacobian(x, p)`` on real vectors, optionally ``dparam(x, p)`` and
``to_state(x)``.  :class:`SteadyProblem` adapts the channel-flow models by
working with real and imaginary parts of the half-range coefficients, so
conjugate symmetry of the full-range system holds by construction.
"""

import logging
from dataclasses import dataclass, field
from typing import Any, Optional

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.optimize import brentq

from .errors import BranchStallError, FactorizationError, NoConvergenceError
from .models import ChannelModel, StateVector

log = logging.getLogger(__name__)


@dataclass
class NewtonResult:
    x: np.ndarray
    iterations: int
    residual: float


@dataclass
class BranchPoint:
    x: np.ndarray
    param: float
    tangent: np.ndarray
    iterations: int = 0
    state: Any = None
    stability: Optional[int] = None
    observables: Optional[dict] = None


@dataclass
class Fold:
    param: float
    x: np.ndarray
    index: int  # fold lies between points[index] and points[index + 1]


@dataclass
class Branch:
    points: list = field(default_factory=list)
    steps: list = field(default_factory=list)
    folds: list = field(default_factory=list)

    @property
    def params(self):
        return np.array([p.param for p in self.points])


class _Factor:
    """LU factorization of a dense or sparse square matrix."""

    def __init__(self, mat):
        if sp.issparse(mat):
            try:
                self._lu = spla.splu(sp.csc_matrix(mat))
            except RuntimeError as exc:
                raise FactorizationError(f"sparse LU failed: {exc}") from exc
            self._solve = self._lu.solve
        else:
            mat = np.asarray(mat)
            lu, piv = sla.lu_factor(mat, check_finite=True)
            diag = np.abs(np.diag(lu))
            if diag.min() <= 1e-14 * max(diag.max(), 1e-300):
                raise FactorizationError("Jacobian is numerically singular")
            self._solve = lambda b: sla.lu_solve((lu, piv), b)

    def solve(self, b):
        return self._solve(b)


def _as_matrix(j):
    if sp.issparse(j):
        return j
    return np.atleast_2d(np.asarray(j, dtype=float))


def newton_solve(problem, guess, tol=1e-10, max_iter=25, param=None):
    """Newton-Raphson on ``problem.residual(x, param) = 0``.

    Converges when the infinity norm of the residual drops below ``tol``.
    Returns a :class:`NewtonResult`; ``iterations`` counts residual checks.
    """
    x = np.array(guess, dtype=float, ndmin=1)
    res = np.nan
    for it in range(1, max_iter + 1):
        r = np.atleast_1d(problem.residual(x, param))
        res = float(np.max(np.abs(r)))
        log.debug("newton %d: |F| = %.3e", it, res)
        if not np.isfinite(res):
            break
        if res < tol:
            return NewtonResult(x, it, res)
        dx = _Factor(_as_matrix(problem.jacobian(x, param))).solve(-r)
        x = x + dx
    raise NoConvergenceError(
        f"Newton did not converge in {max_iter} iterations (|F| = {res:.3e})",
        last=x,
        residual=res,
        iterations=max_iter,
    )


def _dparam(problem, x, p):
    if hasattr(problem, "dparam"):
        return np.asarray(problem.dparam(x, p), dtype=float)
    h = 1e-6 * max(1.0, abs(p))
    return (np.asarray(problem.residual(x, p + h)) - np.asarray(problem.residual(x, p - h))) / (2 * h)


def _bordered(jac, fp, t, wp):
    """Matrix ``[[J, F_p], [t_x^T, wp t_p]]``."""
    tx, tp = t[:-1], t[-1]
    if sp.issparse(jac):
        return sp.bmat(
            [[jac, sp.csr_matrix(fp[:, None])], [sp.csr_matrix(tx[None, :]), np.array([[wp * tp]])]],
            format="csc",
        )
    n = jac.shape[0]
    out = np.empty((n + 1, n + 1))
    out[:n, :n] = jac
    out[:n, n] = fp
    out[n, :n] = tx
    out[n, n] = wp * tp
    return out


def _wnorm(t, wp):
    return np.sqrt(np.dot(t[:-1], t[:-1]) + wp * t[-1] ** 2)


def tangent(problem, x, p, previous=None, direction=1.0, wp=1.0):
    """Unit tangent of the solution curve at ``(x, p)``.

    Oriented along ``previous`` if given, otherwise so that its parameter
    component has the sign of ``direction``.
    """
    jac = _as_matrix(problem.jacobian(x, p))
    fp = _dparam(problem, x, p)
    if previous is None:
        z = _Factor(jac).solve(-fp)
        t = np.append(z, 1.0)
    else:
        rhs = np.zeros(x.size + 1)
        rhs[-1] = 1.0
        border = previous.copy()
        border[-1] = previous[-1]
        t = _Factor(_bordered(jac, fp, border, wp)).solve(rhs)
    t = t / _wnorm(t, wp)
    if previous is None:
        t *= np.sign(direction) * (1 if t[-1] >= 0 else -1)
    elif np.dot(t[:-1], previous[:-1]) + wp * t[-1] * previous[-1] < 0:
        t = -t
    return t


def _correct(problem, x0, p0, t, ds, tol, max_iter, wp):
    """Newton corrector on the pseudo-arclength system; returns (x, p, iters)."""
    y = np.append(x0, p0) + ds * t
    base = np.append(x0, p0)
    for it in range(1, max_iter + 1):
        x, p = y[:-1], y[-1]
        r = np.atleast_1d(problem.residual(x, p))
        arc = np.dot(t[:-1], x - base[:-1]) + wp * t[-1] * (p - base[-1]) - ds
        res = max(float(np.max(np.abs(r))), abs(arc))
        if not np.isfinite(res):
            return None
        if float(np.max(np.abs(r))) < tol and abs(arc) < max(tol, 1e-12 * abs(ds)):
            return x, p, it
        jac = _as_matrix(problem.jacobian(x, p))
        fp = _dparam(problem, x, p)
        try:
            dy = _Factor(_bordered(jac, fp, t, wp)).solve(-np.append(r, arc))
        except FactorizationError:
            return None
        y = y + dy
    return None


def continue_branch(
    problem,
    start,
    direction=1.0,
    step0=10.0,
    param_range=(-np.inf, np.inf),
    tol=1e-10,
    max_iter=10,
    step_min=None,
    step_max=None,
    max_points=500,
    wp=1.0,
    fold_tol=1e-3,
    start_param=None,
):
    """Trace a solution branch by pseudo-arclength continuation.

    Parameters
    ----------
    start : BranchPoint or (x, param)
        Converged starting point.
    direction : float
        Sign of the initial parameter change.
    max_iter : int
        Corrector iterations per step; a failed step is halved, so a small
        budget keeps rejections cheap.
    wp : float
        Weight of the parameter in the arclength metric.
    fold_tol : float
        Folds are localized until the parameter is known to this relative
        accuracy (0.1% by default).

    Raises
    ------
    BranchStallError
        The step fell below ``step_min``; the partial branch is attached.
    """
    if not isinstance(start, BranchPoint):
        x, p = start
        start = BranchPoint(np.asarray(x, dtype=float), float(p), None)
    step_min = 1e-4 * step0 if step_min is None else step_min
    step_max = 50 * step0 if step_max is None else step_max
    lo, hi = param_range
    t0 = tangent(problem, start.x, start.param, direction=direction, wp=wp)
    start.tangent = t0
    _attach_state(problem, start)
    branch = Branch([start])
    ds = step0
    while len(branch.points) < max_points:
        cur = branch.points[-1]
        out = _correct(problem, cur.x, cur.param, cur.tangent, ds, tol, max_iter, wp)
        if out is None:
            ds *= 0.5
            log.info("continuation: step rejected, ds -> %.3g", ds)
            if ds < step_min:
                raise BranchStallError(f"step fell below {step_min:.3g} at param {cur.param:.6g}", branch)
            continue
        x, p, iters = out
        check = float(np.max(np.abs(problem.residual(x, p))))
        if check >= tol:
            ds *= 0.5
            if ds < step_min:
                raise BranchStallError(f"step fell below {step_min:.3g} at param {cur.param:.6g}", branch)
            continue
        if not lo <= p <= hi:
            break
        t = tangent(problem, x, p, previous=cur.tangent, wp=wp)
        pt = BranchPoint(x, p, t, iters)
        _attach_state(problem, pt)
        branch.points.append(pt)
        branch.steps.append(ds)
        log.info("continuation: param %.6g (%d its, ds %.3g)", p, iters, ds)
        if cur.tangent[-1] * t[-1] < 0:
            fold = locate_fold(problem, cur, ds, tol, max_iter, wp, fold_tol)
            fold.index = len(branch.points) - 2
            branch.folds.append(fold)
            log.info("continuation: fold near param %.6g", fold.param)
        if iters <= 3:
            ds = min(ds * 1.3, step_max)
    return branch


def _attach_state(problem, pt):
    conv = getattr(problem, "to_state", None)
    pt.state = conv(pt.x, pt.param) if conv is not None else pt.x


def locate_fold(problem, point, ds, tol=1e-10, max_iter=10, wp=1.0, fold_tol=1e-3):
    """Find the arclength in ``(0, ds)`` where the tangent's parameter part vanishes."""
    cache = {}

    def tp(s):
        if s == 0:
            return point.tangent[-1]
        out = _correct(problem, point.x, point.param, point.tangent, s, tol, max_iter, wp)
        if out is None:
            raise NoConvergenceError("corrector failed during fold localization")
        x, p, _ = out
        t = tangent(problem, x, p, previous=point.tangent, wp=wp)
        cache[s] = (x, p)
        return t[-1]

    # the parameter is quadratic in s near a fold, so a loose s tolerance
    # already pins the parameter to high relative accuracy
    xtol = max(1e-14, np.sqrt(fold_tol) * 1e-3 * abs(ds))
    s = brentq(tp, 0.0, ds, xtol=xtol)
    if s not in cache:
        tp(s)
    x, p = cache[s]
    return Fold(p, x, -1)


class SteadyProblem:
    """Steady (travelling-wave or laminar) channel problem in real coordinates.

    Real unknowns are ``[Re coeffs (n = 0..N1), Im coeffs (n = 1..N1), f, c]``;
    equations are the real parts of the n = 0 rows, real and imaginary parts
    of the n >= 1 rows, and the flux and phase rows.

    Parameters
    ----------
    model : ChannelModel
    param : str
        Model parameter varied by continuation ('re' or 'wi').
    phase : bool
        Use the phase condition (travelling waves) or pin ``c = c_fixed``.
    dense_above : float
        Jacobians with a larger fill fraction are returned dense.
    """

    def __init__(self, model, param="re", phase=True, c_fixed=0.0, dense_above=0.05):
        self.model = model
        self.grid = model.grid
        self.param = param
        self.phase = phase
        self.c_fixed = c_fixed
        self.dense_above = dense_above
        self._models = {}
        self._build_maps()

    def _build_maps(self):
        g = self.grid
        nb, n1 = g.block, g.n1
        nhalf = (n1 + 1) * nb
        nreal = nhalf + n1 * nb + 2
        assert nreal == g.full_size
        rows, cols, vals = [], [], []
        for n in range(n1 + 1):
            for j in range(nb):
                re_idx = n * nb + j
                rows.append((n + n1) * nb + j), cols.append(re_idx), vals.append(1.0)
                if n > 0:
                    im_idx = nhalf + (n - 1) * nb + j
                    rows.append((n + n1) * nb + j), cols.append(im_idx), vals.append(1j)
                    rows.append((n1 - n) * nb + j), cols.append(re_idx), vals.append(1.0)
                    rows.append((n1 - n) * nb + j), cols.append(im_idx), vals.append(-1j)
        rows += [g.f_index, g.c_index]
        cols += [nreal - 2, nreal - 1]
        vals += [1.0, 1.0]
        self._embed = sp.csr_matrix((vals, (rows, cols)), shape=(g.full_size, nreal), dtype=complex)
        # real-part rows: n = 0..N1 and the two border rows; imaginary-part rows: n = 1..N1
        self._re_rows = np.concatenate([np.arange(n1 * nb, (2 * n1 + 1) * nb), [g.f_index, g.c_index]])
        self._im_rows = np.arange((n1 + 1) * nb, (2 * n1 + 1) * nb)

    def model_at(self, p):
        if p is None:
            return self.model
        key = float(p)
        if key not in self._models:
            if len(self._models) > 4:
                self._models.clear()
            self._models[key] = self.model.with_params(**{self.param: key})
        return self._models[key]

    def embed(self, x):
        return self._embed @ np.asarray(x, dtype=float)

    def restrict(self, full):
        """Real coordinates of a conjugate-symmetric full-range vector."""
        g = self.grid
        nb, n1 = g.block, g.n1
        body = np.asarray(full)[:-2].reshape(g.nmodes, nb)
        return np.concatenate(
            [body[n1:].real.reshape(-1), body[n1 + 1 :].imag.reshape(-1), np.asarray(full)[-2:].real]
        )

    def _project_rows(self, vec):
        return np.concatenate([vec[self._re_rows].real, vec[self._im_rows].imag])

    def residual(self, x, p=None):
        m = self.model_at(p)
        return self._project_rows(m.residual(self.embed(x), self.phase, self.c_fixed))

    def jacobian(self, x, p=None):
        m = self.model_at(p)
        jac = m.jacobian(self.embed(x), self.phase).tosparse() @ self._embed
        jac = sp.vstack([jac[self._re_rows].real, jac[self._im_rows].imag], format="csr")
        if jac.nnz > self.dense_above * jac.shape[0] ** 2:
            return jac.toarray()
        return jac

    def to_state(self, x, p=None):
        return StateVector.from_full(self.grid, self.embed(x))

    def from_state(self, state):
        return self.restrict(state.to_full(self.grid))
