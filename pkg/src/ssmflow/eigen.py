"""Generalized eigenproblems ``A k = lambda M k`` with a singular mass matrix.

Three paths are available: dense QZ per decoupled block (when the operator
pair advertises a block structure), dense QZ on the whole pencil, and
shift-invert Arnoldi on ``(A - sigma M)^{-1} M``.
"""

import logging
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import EigenError, ShiftError, SplitError

log = logging.getLogger(__name__)

DENSE_THRESHOLD = 1500


@dataclass
class EigenPair:
    value: complex
    vector: np.ndarray
    residual: float = 0.0


@dataclass
class SpectralSplit:
    """Spectrum split at ``beta_split`` with biorthonormal Sigma_1 vectors.

    ``right[:, i]`` and ``left[:, i]`` satisfy ``left[:, i]^H M right[:, j] = delta_ij``.
    ``partner[i]`` is the index of the conjugate eigenvalue within Sigma_1
    (``i`` itself for real eigenvalues, -1 when absent).
    """

    beta_split: float
    values: np.ndarray
    right: np.ndarray
    left: np.ndarray
    sigma2_values: np.ndarray
    partner: list = field(default_factory=list)

    @property
    def r(self):
        return len(self.values)

    def scaled(self, s):
        """Same split with right vectors scaled by ``s`` and left vectors by ``1 / s``."""
        return SpectralSplit(
            self.beta_split,
            self.values.copy(),
            self.right * s,
            self.left / np.conj(s),
            self.sigma2_values.copy(),
            list(self.partner),
        )


def _dense(mat):
    return mat.toarray() if sp.issparse(mat) else np.asarray(mat)


def _finite_pairs(alpha, beta, vecs, inf_tol):
    """Keep eigenpairs whose homogeneous coordinates are finite."""
    out = []
    scale = np.maximum(np.abs(alpha), np.abs(beta))
    for i in range(len(alpha)):
        if scale[i] == 0 or abs(beta[i]) <= inf_tol * scale[i]:
            continue
        out.append((alpha[i] / beta[i], vecs[:, i] if vecs is not None else None))
    return out


def _residual(a, m, lam, vec):
    r = a @ vec - lam * (m @ vec)
    return float(np.linalg.norm(r) / max(np.linalg.norm(vec), 1e-300))


def _backward_error(a_norm, m_norm, res, lam):
    return res / (a_norm + abs(lam) * m_norm)


def _norm1(mat):
    if sp.issparse(mat):
        return float(abs(mat).sum(axis=0).max()) if mat.nnz else 0.0
    return float(np.abs(mat).sum(axis=0).max()) if mat.size else 0.0


def solve_generalized_eig(
    ops,
    shift=None,
    count=None,
    dense_threshold=DENSE_THRESHOLD,
    method="auto",
    inf_tol=1e-10,
    max_abs=1e8,
    res_tol=1e-8,
    vectors=True,
):
    """Finite eigenpairs of ``(ops.a_u, ops.m)``.

    Parameters
    ----------
    shift : complex, optional
        Shift for the Arnoldi path (default ``0.05``).  Also used to order
        the result when ``count`` truncates a dense spectrum.
    count : int, optional
        Number of eigenpairs wanted from the Arnoldi path.  Dense paths
        return everything unless ``count`` is given, in which case the
        ``count`` eigenvalues of largest real part are kept.
    method : {'auto', 'blocks', 'dense', 'arnoldi'}

    Returns
    -------
    list of EigenPair sorted by decreasing real part.
    """
    a, m = ops.a_u, ops.m
    n = a.shape[0]
    if method == "auto":
        if getattr(ops, "blocks", None) is not None:
            method = "blocks"
        elif n <= dense_threshold:
            method = "dense"
        else:
            method = "arnoldi"
    if method == "arnoldi":
        pairs = _arnoldi(a, m, 0.05 if shift is None else shift, count or 10)
    else:
        pairs = []
        blocks = ops.blocks if method == "blocks" else [np.arange(n)]
        a_csr = sp.csr_matrix(a) if sp.issparse(a) else None
        for idx in blocks:
            if a_csr is not None:
                ab = a_csr[idx][:, idx].toarray()
                mb = sp.csr_matrix(m)[idx][:, idx].toarray()
            else:
                ab = np.asarray(a)[np.ix_(idx, idx)]
                mb = np.asarray(m)[np.ix_(idx, idx)]
            if vectors:
                (al, be), vr = sla.eig(ab, mb, right=True, homogeneous_eigvals=True)
            else:
                al, be = sla.eig(ab, mb, right=False, homogeneous_eigvals=True)
                vr = None
            for lam, vb in _finite_pairs(al, be, vr, inf_tol):
                if abs(lam) > max_abs:
                    continue
                if vb is not None:
                    vec = np.zeros(n, dtype=complex)
                    vec[idx] = vb
                    vb = vec
                pairs.append(EigenPair(lam, vb))
        if count is not None:
            pairs.sort(key=lambda p: -p.value.real)
            pairs = pairs[:count]
    if vectors:
        a_norm, m_norm = _norm1(a), _norm1(m)
        kept = []
        for p in pairs:
            p.vector = p.vector / np.linalg.norm(p.vector)
            p.residual = _residual(a, m, p.value, p.vector)
            if _backward_error(a_norm, m_norm, p.residual, p.value) > res_tol:
                log.warning("eigenpair %s has backward error above %g", p.value, res_tol)
            kept.append(p)
        pairs = kept
    pairs.sort(key=lambda p: (-p.value.real, -p.value.imag))
    return pairs


class ShiftedSolver:
    """Factorization of ``A - sigma M`` (dense or sparse)."""

    def __init__(self, a, m, sigma):
        self.sigma = sigma
        mat = a - sigma * m
        if sp.issparse(mat):
            mat = sp.csc_matrix(mat, dtype=complex)
            density = mat.nnz / float(mat.shape[0] ** 2)
            if density > 0.1:
                mat = mat.toarray()
        if sp.issparse(mat):
            try:
                lu = spla.splu(mat)
            except RuntimeError as exc:
                raise ShiftError(f"factorization failed at shift {sigma}; retry with a perturbed shift") from exc
            self._solve = lu.solve
            self._solve_h = lambda b: lu.solve(b, trans="H")
        else:
            with warnings.catch_warnings():
                # an exactly singular shift is reported as ShiftError below
                warnings.simplefilter("ignore", sla.LinAlgWarning)
                lu = sla.lu_factor(np.asarray(mat, dtype=complex))
            d = np.abs(np.diag(lu[0]))
            if d.min() <= 1e-15 * d.max():
                raise ShiftError(f"A - sigma M singular at shift {sigma}; retry with a perturbed shift")
            self._solve = lambda b: sla.lu_solve(lu, b)
            self._solve_h = lambda b: sla.lu_solve(lu, b, trans=2)

    def solve(self, b):
        return self._solve(b)

    def solve_h(self, b):
        return self._solve_h(b)


def _arnoldi(a, m, sigma, count):
    n = a.shape[0]
    solver = ShiftedSolver(a, m, sigma)
    op = spla.LinearOperator((n, n), matvec=lambda x: solver.solve(m @ x), dtype=complex)
    k = min(count, n - 2)
    ncv = min(n - 1, 2 * k + 20)
    rng = np.random.default_rng(0)
    v0 = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    try:
        mu, vecs = spla.eigs(op, k=k, which="LM", ncv=ncv, v0=v0, tol=1e-13, maxiter=max(1000, 20 * n))
    except spla.ArpackNoConvergence as exc:
        raise EigenError(f"Arnoldi did not converge at shift {sigma}") from exc
    big = np.max(np.abs(mu)) if mu.size else 0.0
    out = []
    for i in range(len(mu)):
        if abs(mu[i]) < 1e-10 * big:
            continue
        out.append(EigenPair(sigma + 1.0 / mu[i], vecs[:, i]))
    return out


def _fix_phase(vec):
    i = int(np.argmax(np.abs(vec)))
    return vec * (abs(vec[i]) / vec[i])


def _conjugate_match(values, i, tol):
    target = np.conj(values[i])
    d = np.abs(values - target)
    j = int(np.argmin(d))
    return j if d[j] <= tol * max(1.0, abs(values[i])) else -1


def left_vector(ops, lam, right, solver=None):
    """Left eigenvector by inverse iteration on ``(A - lam M)^H``."""
    if solver is None:
        delta = 1e-10 * max(1.0, abs(lam))
        solver = ShiftedSolver(ops.a_u, ops.m, lam + delta * (1 + 1j))
    z = solver.solve_h(right)
    for _ in range(2):
        z = z / np.linalg.norm(z)
        z = solver.solve_h(z)
    return z / np.linalg.norm(z)


def split_spectrum(eigs, ops, beta_split, gap_tol=1e-8, pair_tol=1e-7):
    """Partition eigenpairs at ``beta_split`` and build biorthonormal left vectors.

    Right vectors are scaled to ``ops.energy(k) = 1/2`` and rotated so their
    largest component is real and positive; members of conjugate pairs are
    taken as exact conjugates of each other.
    """
    values = np.array([p.value for p in eigs])
    near = np.abs(values.real - beta_split) < gap_tol
    if np.any(near):
        raise SplitError(
            f"eigenvalue {values[near][0]} lies within {gap_tol} of beta_split={beta_split}; move the split"
        )
    sel = [p for p in eigs if p.value.real > beta_split]
    if not sel:
        raise SplitError(f"no eigenvalue has real part above beta_split={beta_split}")
    sel.sort(key=lambda p: (-round(p.value.real, 12), -p.value.imag))
    lam = np.array([p.value for p in sel])
    n = ops.n
    r = len(sel)
    right = np.zeros((n, r), dtype=complex)
    partner = [-1] * r
    done = set()
    for i, p in enumerate(sel):
        if i in done:
            continue
        vec = p.vector
        e = ops.energy(vec)
        if e > 0:
            vec = vec * np.sqrt(0.5 / e)
        vec = _fix_phase(vec)
        right[:, i] = vec
        done.add(i)
        if abs(lam[i].imag) <= pair_tol * max(1.0, abs(lam[i])):
            partner[i] = i
            continue
        j = _conjugate_match(lam, i, pair_tol)
        if j >= 0 and j not in done:
            lam[j] = np.conj(lam[i])
            right[:, j] = ops.conjugate(vec)
            partner[i], partner[j] = j, i
            done.add(j)
    left = np.zeros_like(right)
    done = set()
    for i in range(r):
        if i in done:
            continue
        left[:, i] = left_vector(ops, lam[i], right[:, i])
        done.add(i)
        j = partner[i]
        if j >= 0 and j != i:
            left[:, j] = ops.conjugate(left[:, i])
            done.add(j)
    # biorthonormalize: Z <- Z G^{-H} with G = Z^H M K
    gram = left.conj().T @ (ops.m @ right)
    left = left @ np.linalg.inv(gram).conj().T
    sigma2 = np.array([p.value for p in eigs if p.value.real < beta_split])
    return SpectralSplit(beta_split, lam, right, left, sigma2, partner)


def leading_eigenvalue(ops, **kw):
    pairs = solve_generalized_eig(ops, vectors=False, **kw)
    if not pairs:
        raise EigenError("no finite eigenvalues found")
    return max((p.value for p in pairs), key=lambda z: (z.real, z.imag))
