"""Order-by-order solution of the invariance equation ``M DK R = A K - B(K, K)``.

Monomial coefficients ``K_alpha`` (embedding) and ``R_alpha`` (reduced
dynamics) are found for all multi-indices ``|alpha| = j`` in turn.  With a
diagonal linear part each coefficient obeys

    (A - s_alpha M) K_alpha - M K_1 R_alpha = eta_alpha,  s_alpha = <alpha, lambda>,

which is solved as a bordered system whose extra rows fix the components
of ``K_alpha`` along the Sigma_1 directions that are treated in graph style.
"""

import itertools
import logging
from dataclasses import dataclass, field
from math import comb
from typing import Optional

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import (
    CrossResonanceError,
    DimensionError,
    IllConditionedError,
    MissingOrderError,
    ResonanceError,
)

log = logging.getLogger(__name__)

STYLES = ("graph", "normal-form", "mixed")


def enumerate_multiindices(r, j):
    """All ``alpha`` with ``|alpha| = j`` in reverse-lexicographic order."""
    if r < 1 or j < 0:
        raise DimensionError(f"need r >= 1 and j >= 0, got r={r}, j={j}")
    out = []
    for bars in itertools.combinations(range(j + r - 1), r - 1):
        prev = -1
        alpha = []
        for b in bars:
            alpha.append(b - prev - 1)
            prev = b
        alpha.append(j + r - 2 - prev)
        out.append(tuple(alpha))
    out.sort(reverse=True)
    assert len(out) == comb(j + r - 1, r - 1)
    return out


@dataclass(frozen=True)
class SsmConfig:
    order: int = 3
    style: str = "mixed"
    res_tol: float = 1e-2
    cross_tol: float = 1e-6
    err_tol: float = 1.5e-2
    cond_max: float = 1e12
    check_tol: float = 1e-9

    def __post_init__(self):
        if self.order < 1:
            raise DimensionError(f"order must be >= 1, got {self.order}")
        if self.style not in STYLES:
            raise DimensionError(f"style must be one of {STYLES}, got {self.style!r}")
        if self.res_tol <= 0 or self.err_tol <= 0 or self.cross_tol <= 0:
            raise DimensionError("res_tol, cross_tol and err_tol must be > 0")


@dataclass
class Resonance:
    kind: str  # 'none', 'internal', 'cross', 'near-cross'
    q: tuple = ()
    matched: Optional[complex] = None
    distance: float = np.inf


@dataclass
class ExpansionTable:
    """Coefficients of ``K(theta) = sum K_alpha theta^alpha`` and ``R(theta)``."""

    r: int
    order: int
    values: np.ndarray
    k_coeffs: dict = field(default_factory=dict)
    r_coeffs: dict = field(default_factory=dict)
    style: dict = field(default_factory=dict)
    resonance_log: list = field(default_factory=list)
    partner: list = field(default_factory=list)
    r1: Optional[np.ndarray] = None
    residuals: dict = field(default_factory=dict)

    def orders(self):
        return sorted({sum(a) for a in self.k_coeffs})

    def k_order(self, j):
        return {a: v for a, v in self.k_coeffs.items() if sum(a) == j}

    def r_order(self, j):
        return {a: v for a, v in self.r_coeffs.items() if sum(a) == j}

    def swap(self, alpha):
        """Multi-index with conjugate-paired coordinates exchanged."""
        out = list(alpha)
        for i, j in enumerate(self.partner):
            if j >= 0:
                out[j] = alpha[i]
        return tuple(out)

    @property
    def linear_part(self):
        if self.r1 is not None:
            return self.r1
        return np.diag(self.values)


# ----------------------------------------------------------------------
# resonance


def classify_resonance(alpha, split, res_tol=1e-2, cross_tol=None):
    """Classify ``s = <alpha, lambda>`` against Sigma_1 and Sigma_2.

    ``cross_tol`` (default ``res_tol``) bounds the relative distance to
    Sigma_2 that counts as a cross resonance; hits between ``cross_tol``
    and ``res_tol`` are reported as 'near-cross'.
    """
    lam1 = np.asarray(split.values)
    s = complex(np.dot(alpha, lam1))
    d1 = np.abs(s - lam1) / np.maximum(np.abs(lam1), 1e-300)
    hits = tuple(int(q) for q in np.flatnonzero(d1 < res_tol))
    if hits:
        q0 = min(hits, key=lambda q: d1[q])
        return Resonance("internal", hits, complex(lam1[q0]), float(d1[q0]))
    lam2 = np.asarray(split.sigma2_values)
    if lam2.size:
        d2 = np.abs(s - lam2) / np.maximum(np.abs(lam2), 1.0)
        i = int(np.argmin(d2))
        ctol = res_tol if cross_tol is None else cross_tol
        if d2[i] < ctol:
            return Resonance("cross", (), complex(lam2[i]), float(d2[i]))
        if d2[i] < res_tol:
            return Resonance("near-cross", (), complex(lam2[i]), float(d2[i]))
    return Resonance("none")


# ----------------------------------------------------------------------
# right-hand sides


def _dk_r(table, alpha, i, k):
    """Coefficient of theta^alpha in ``DK_i(theta) R_k(theta)``."""
    out = None
    r = table.r
    for q in range(r):
        for gamma, rg in table.r_order(k).items():
            if rg[q] == 0:
                continue
            beta = tuple(alpha[p] - gamma[p] + (1 if p == q else 0) for p in range(r))
            if min(beta) < 0:
                continue
            kb = table.k_coeffs.get(beta)
            if kb is None:
                continue
            term = beta[q] * rg[q] * kb
            out = term if out is None else out + term
    return out


def compute_eta(table, j, ops, bilinear):
    """Right-hand sides ``eta_alpha`` for every ``|alpha| = j``.

    Sums ``B(K_beta, K_delta)`` over ordered pairs with ``beta + delta = alpha``
    and ``M [DK_{j-k+1} R_k]_alpha`` for ``k = 2..j-1``.
    """
    have = set(table.orders())
    missing = [i for i in range(1, j) if i not in have]
    if missing:
        raise MissingOrderError(f"orders {missing} are missing; cannot form order {j}")
    r = table.r
    n = ops.n
    alphas = enumerate_multiindices(r, j)
    eta = {a: np.zeros(n, dtype=complex) for a in alphas}
    # bilinear part: unordered pairs, both orders of B
    for i in range(1, j // 2 + 1):
        lo = table.k_order(i)
        hi = table.k_order(j - i)
        for beta, kb in lo.items():
            for delta, kd in hi.items():
                if i == j - i and delta < beta:
                    continue
                alpha = tuple(b + d for b, d in zip(beta, delta))
                val = bilinear(kb, kd)
                if not (i == j - i and beta == delta):
                    val = val + bilinear(kd, kb)
                eta[alpha] += val
    # chain-rule part
    for alpha in alphas:
        acc = None
        for k in range(2, j):
            t = _dk_r(table, alpha, j - k + 1, k)
            if t is not None:
                acc = t if acc is None else acc + t
        if acc is not None:
            eta[alpha] += ops.m @ acc
    return eta


# ----------------------------------------------------------------------
# linear solves


class _Bordered:
    """Factorized bordered system ``[[A - sM, -M K_Q], [Z_Q^H M, 0]]``."""

    def __init__(self, ops, s, mk1, zm, cols, rows):
        n = ops.n
        a, m = ops.a_u, ops.m
        shifted = a - s * m
        nq_c, nq_r = len(cols), len(rows)
        self.n = n
        self.nc = nq_c
        if sp.issparse(shifted):
            top = sp.hstack([shifted, sp.csr_matrix(-mk1[:, cols])]) if nq_c else shifted
            if nq_r:
                bottom = sp.hstack([sp.csr_matrix(zm[rows]), sp.csr_matrix((nq_r, nq_c))])
                mat = sp.vstack([top, bottom])
            else:
                mat = top
            mat = sp.csc_matrix(mat, dtype=complex)
            self.mat = mat
            try:
                lu = spla.splu(mat)
            except RuntimeError as exc:
                raise IllConditionedError(f"bordered system is singular at s={s}") from exc
            self._solve = lu.solve
            self._solve_h = lambda b: lu.solve(b, trans="H")
        else:
            mat = np.zeros((n + nq_r, n + nq_c), dtype=complex)
            mat[:n, :n] = shifted
            if nq_c:
                mat[:n, n:] = -mk1[:, cols]
            if nq_r:
                mat[n:, :n] = zm[rows]
            self.mat = mat
            lu = sla.lu_factor(mat)
            self._solve = lambda b: sla.lu_solve(lu, b)
            self._solve_h = lambda b: sla.lu_solve(lu, b, trans=2)

    def solve(self, rhs):
        x = self._solve(rhs)
        # one step of iterative refinement
        return x + self._solve(rhs - self.mat @ x)

    def condition(self):
        """1-norm condition estimate of the row-equilibrated system."""
        size = self.mat.shape[0]
        if sp.issparse(self.mat):
            rowmax = np.asarray(abs(self.mat).max(axis=1).todense()).ravel()
        else:
            rowmax = np.abs(self.mat).max(axis=1)
        d = 1.0 / np.where(rowmax > 0, rowmax, 1.0)
        scaled = sp.diags(d) @ self.mat if sp.issparse(self.mat) else d[:, None] * self.mat
        # (D X)^{-1} = X^{-1} D^{-1}
        inv = spla.LinearOperator(
            (size, size),
            matvec=lambda b: self._solve(np.ravel(b) / d),
            rmatvec=lambda b: np.conj(1.0 / d) * self._solve_h(np.ravel(b)),
            dtype=complex,
        )
        if size > 8:
            inv_norm = spla.onenormest(inv)
        else:
            inv_norm = np.linalg.norm(np.linalg.inv(_dense(scaled)), 1)
        mat_norm = spla.norm(scaled, 1) if sp.issparse(scaled) else np.linalg.norm(scaled, 1)
        return float(inv_norm * mat_norm)


def _dense(mat):
    return mat.toarray() if sp.issparse(mat) else np.asarray(mat)


def _monomial_style(config, res):
    if config.style == "mixed":
        return "graph" if res.kind == "internal" else "normal-form"
    return config.style


def solve_order(j, eta, split, ops, config, table):
    """Fill ``table`` with the order-j coefficients (diagonal linear part)."""
    r = table.r
    lam = np.asarray(table.values)
    k1 = np.column_stack([table.k_coeffs[_unit(r, q)] for q in range(r)])
    mk1 = np.asarray(ops.m @ k1)
    zm = np.asarray((ops.m.conj().T @ split.left).conj().T)  # rows zeta_q^H M
    for alpha in enumerate_multiindices(r, j):
        res = classify_resonance(alpha, split, config.res_tol, config.cross_tol)
        table.resonance_log.append(
            {"alpha": alpha, "kind": res.kind, "q": list(res.q), "matched": res.matched, "distance": res.distance}
        )
        if res.kind == "cross":
            raise CrossResonanceError(
                f"cross resonance at alpha={alpha}: <alpha, lambda> = {np.dot(alpha, lam):.6g} "
                f"matches Sigma_2 eigenvalue {res.matched:.6g}",
                alpha=alpha,
                matched=res.matched,
            )
        style = _monomial_style(config, res)
        if style == "graph":
            qs = list(range(r))
        elif res.kind == "internal":
            qs = list(res.q)
        else:
            qs = []
        s = complex(np.dot(alpha, lam))
        system = _Bordered(ops, s, mk1, zm, qs, qs)
        rhs = np.concatenate([eta[alpha], np.zeros(len(qs), dtype=complex)])
        sol = system.solve(rhs)
        k = sol[: ops.n]
        rv = np.zeros(r, dtype=complex)
        rv[qs] = sol[ops.n :]
        resid = ops.a_u @ k - s * (ops.m @ k) - mk1 @ rv - eta[alpha]
        scale = max(np.linalg.norm(eta[alpha]), 1e-300)
        rel = float(np.linalg.norm(resid) / scale) if np.any(eta[alpha]) else float(np.linalg.norm(resid))
        if rel > config.check_tol and np.any(eta[alpha]):
            cond = system.condition()
            raise IllConditionedError(
                f"order {j} solve at alpha={alpha} left relative residual {rel:.2e} "
                f"(condition ~ {cond:.2e}); increase res_tol to treat this monomial as resonant"
            )
        if qs and res.kind != "none":
            cond = system.condition()
            if cond > config.cond_max:
                raise IllConditionedError(
                    f"bordered system at alpha={alpha} has condition {cond:.2e}; increase res_tol"
                )
        table.k_coeffs[alpha] = k
        table.r_coeffs[alpha] = rv
        table.style[alpha] = style
        table.residuals[alpha] = rel
    table.order = max(table.order, j)


def _unit(r, q):
    return tuple(1 if i == q else 0 for i in range(r))


def solve_order_coupled(j, eta, ops, table, left, style="normal-form"):
    """Order-j solve for a non-diagonal linear part ``R_1``.

    All monomials of order j are coupled through ``DK_j R_1``; the system is
    assembled densely (intended for small problems).  ``style='graph'``
    imposes ``W^H M K_alpha = 0`` with free ``R_alpha``; 'normal-form' sets
    ``R_alpha = 0``.
    """
    r = table.r
    r1 = np.asarray(table.r1)
    alphas = enumerate_multiindices(r, j)
    pos = {a: i for i, a in enumerate(alphas)}
    n = ops.n
    P = len(alphas)
    a = _dense(ops.a_u)
    m = _dense(ops.m)
    k1 = np.column_stack([table.k_coeffs[_unit(r, q)] for q in range(r)])
    graph = style == "graph"
    nunk = P * n + (P * r if graph else 0)
    mat = np.zeros((nunk, nunk), dtype=complex)
    rhs = np.zeros(nunk, dtype=complex)
    for i, alpha in enumerate(alphas):
        rows = slice(i * n, (i + 1) * n)
        mat[rows, rows] += a
        rhs[rows] = eta[alpha]
        # - M [DK_j R_1]_alpha: sum_{q,p} R1[q,p] beta_q K_beta, beta = alpha + e_q - e_p
        for q in range(r):
            for p in range(r):
                if r1[q, p] == 0:
                    continue
                beta = list(alpha)
                beta[q] += 1
                beta[p] -= 1
                if min(beta) < 0:
                    continue
                b = tuple(beta)
                cols = slice(pos[b] * n, (pos[b] + 1) * n)
                mat[rows, cols] -= r1[q, p] * beta[q] * m
        if graph:
            rc = slice(P * n + i * r, P * n + (i + 1) * r)
            mat[rows, rc] = -m @ k1
            mat[rc, rows] = left.conj().T @ m
    sol = np.linalg.solve(mat, rhs)
    for i, alpha in enumerate(alphas):
        table.k_coeffs[alpha] = sol[i * n : (i + 1) * n]
        table.r_coeffs[alpha] = sol[P * n + i * r : P * n + (i + 1) * r] if graph else np.zeros(r, dtype=complex)
        table.style[alpha] = style
        table.resonance_log.append({"alpha": alpha, "kind": "coupled", "q": [], "matched": None, "distance": np.inf})
    resid = mat @ sol - rhs
    table.residuals.update({a: float(np.linalg.norm(resid) / max(np.linalg.norm(rhs), 1e-300)) for a in alphas})
    table.order = max(table.order, j)


def seed_table(split=None, k1=None, r1=None, partner=None):
    """Order-one table from a spectral split or explicit ``(K_1, R_1)``."""
    if split is not None:
        k1 = split.right
        values = np.asarray(split.values)
        r1 = None
        partner = list(split.partner)
    else:
        k1 = np.asarray(k1, dtype=complex)
        r1 = np.asarray(r1, dtype=complex)
        values = np.diag(r1).copy()
        if np.allclose(r1, np.diag(values)):
            r1 = None
        partner = partner or [-1] * k1.shape[1]
    r = k1.shape[1]
    table = ExpansionTable(r=r, order=1, values=values, partner=partner, r1=r1)
    lin = np.diag(values) if r1 is None else r1
    for q in range(r):
        e = _unit(r, q)
        table.k_coeffs[e] = k1[:, q].copy()
        table.r_coeffs[e] = lin[:, q].astype(complex).copy()
        table.style[e] = "linear"
    return table


def compute_expansion(split, ops, bilinear, config, seed=None, left=None):
    """Expansion tables up to ``config.order``.

    Parameters
    ----------
    split : SpectralSplit
        Sigma_1 eigenpairs and left vectors (ignored when ``seed`` is given).
    bilinear : callable
        ``bilinear(x, y)`` returning the quadratic nonlinearity ``B(x, y)``.
    seed : ExpansionTable, optional
        Order-one table with a non-diagonal linear part; ``left`` must then
        hold vectors with ``left^H M K_1 = I``.
    """
    table = seed if seed is not None else seed_table(split)
    for j in range(2, config.order + 1):
        eta = compute_eta(table, j, ops, bilinear)
        if table.r1 is not None:
            style = "graph" if config.style != "normal-form" else "normal-form"
            solve_order_coupled(j, eta, ops, table, left, style)
        else:
            solve_order(j, eta, split, ops, config, table)
        log.info("order %d done (%d monomials)", j, len(eta))
    return table


# ----------------------------------------------------------------------
# evaluation


def _monomials(alphas, theta):
    theta = np.asarray(theta, dtype=complex)
    return np.array([np.prod(theta ** np.asarray(a)) for a in alphas])


def evaluate_K(table, theta, conjugate=None, max_order=None):
    """``K(theta)``; symmetrized with ``conjugate`` when given."""
    alphas = [a for a in table.k_coeffs if max_order is None or sum(a) <= max_order]
    mono = _monomials(alphas, theta)
    vecs = np.array([table.k_coeffs[a] for a in alphas])
    out = mono @ vecs
    if conjugate is not None:
        out = 0.5 * (out + conjugate(out))
    return out


def evaluate_DK_R(table, theta):
    """``DK(theta) R(theta)``, the tangent of the parameterized flow."""
    theta = np.asarray(theta, dtype=complex)
    r = table.r
    rv = np.zeros(r, dtype=complex)
    for a, c in table.r_coeffs.items():
        rv += c * np.prod(theta ** np.asarray(a))
    out = None
    for a, kv in table.k_coeffs.items():
        for q in range(r):
            if a[q] == 0:
                continue
            d = list(a)
            d[q] -= 1
            term = a[q] * np.prod(theta ** np.asarray(d)) * rv[q] * kv
            out = term if out is None else out + term
    return out


def invariance_defect(table, theta, ops, bilinear):
    """``A K - B(K, K) - M DK R`` at ``theta``."""
    k = evaluate_K(table, theta)
    return ops.a_u @ k - bilinear(k, k) - ops.m @ evaluate_DK_R(table, theta)


def error_norm(table, theta, ops, bilinear):
    """Invariance defect of the truncated expansion at ``theta``."""
    if not np.any(np.asarray(theta)):
        return 0.0
    return float(ops.residual_norm(invariance_defect(table, theta, ops, bilinear)))


def paired_theta(table, rho, phi=0.0):
    """Reduced coordinates with conjugate-paired entries ``rho e^{+-i phi}``."""
    theta = np.zeros(table.r, dtype=complex)
    done = set()
    for i, j in enumerate(table.partner):
        if i in done:
            continue
        theta[i] = rho * np.exp(1j * phi)
        done.add(i)
        if j >= 0 and j != i:
            theta[j] = np.conj(theta[i])
            done.add(j)
    return theta


def fundamental_radius(table, ops, bilinear, err_tol=1.5e-2, rho_max=1.0, angles=4, samples=40):
    """Largest radius ``rho`` with ``err <= err_tol`` at all sampled angles.

    Scans ``rho`` on a geometric grid up to ``rho_max`` and bisects the
    first crossing.
    """

    def worst(rho):
        return max(
            error_norm(table, paired_theta(table, rho, phi), ops, bilinear)
            for phi in np.linspace(0, np.pi, angles, endpoint=False)
        )

    grid = np.geomspace(rho_max * 1e-4, rho_max, samples)
    prev = 0.0
    for rho in grid:
        if worst(rho) > err_tol:
            lo, hi = prev, rho
            for _ in range(50):
                mid = 0.5 * (lo + hi)
                if worst(mid) > err_tol:
                    hi = mid
                else:
                    lo = mid
                if hi - lo < 1e-10 * hi:
                    break
            return lo
        prev = rho
    return rho_max


def conjugation_defect(table, conjugate):
    """Max over alpha of ``|K_swap(alpha) - C K_alpha|`` relative to ``|K_alpha|``."""
    worst = 0.0
    for a, kv in table.k_coeffs.items():
        other = table.k_coeffs.get(table.swap(a))
        if other is None:
            continue
        scale = max(np.linalg.norm(kv), 1e-300)
        worst = max(worst, float(np.linalg.norm(other - conjugate(kv)) / scale))
    return worst
