"""Discretized channel-flow systems (Newtonian and Oldroyd-B).

The steady travelling-wave problem is written ``F(v) = A v - B(v, v) - rhs``
on full-range coefficient vectors (``n = -N1..N1``, then ``f`` and ``c``).
Rows are collocation equations at the Gauss-Lobatto points, grouped per
Fourier mode, followed by the flux row and the phase row.  Wall rows of
the velocity equations are replaced by Dirichlet conditions.

The perturbation dynamics about a steady state ``U`` read
``M du/dt = A_U u - B(u, u)`` with ``A_U = A - B(U, .) - B(., U)``.
"""

from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp

from .errors import DimensionError, SolverError
from .spectral import (
    ModeGrid,
    cheb_matrices,
    chebyshev_integrals,
    chebyshev_tables,
    clenshaw_curtis_weights,
    conjugate_full,
    full_from_half,
    half_from_full,
)

U1, U2, P, T11, T12, T22 = range(6)


@dataclass(frozen=True)
class ModelParams:
    """Physical parameters.

    ``wi``, ``beta_visc`` and ``eps`` are only used by the Oldroyd-B model.
    ``xhat2`` is the probe height of the ``svf`` observable; ``None`` picks
    the model default (centerline for Newtonian, 10th Gauss-Lobatto point
    for Oldroyd-B).
    """

    re: float
    wi: Optional[float] = None
    beta_visc: Optional[float] = None
    eps: float = 0.0
    xhat2: Optional[float] = None

    def __post_init__(self):
        if not np.isfinite(self.re) or self.re < 0:
            raise DimensionError(f"re must be >= 0, got {self.re}")
        if self.beta_visc is not None and not 0 <= self.beta_visc <= 1:
            raise DimensionError(f"beta_visc must lie in [0, 1], got {self.beta_visc}")
        if self.eps < 0:
            raise DimensionError(f"eps must be >= 0, got {self.eps}")
        if self.xhat2 is not None and not -1 < self.xhat2 < 1:
            raise DimensionError(f"xhat2 must lie in (-1, 1), got {self.xhat2}")


@dataclass
class StateVector:
    """Half-range coefficients ``v[n, field, m]`` for n = 0..N1, plus f and c."""

    coeffs: np.ndarray
    f: float = 0.0
    c: float = 0.0

    def to_full(self, grid):
        full = full_from_half(grid, self.coeffs)
        return np.concatenate([full.reshape(-1), [self.f, self.c]]).astype(complex)

    @classmethod
    def from_full(cls, grid, vec):
        vec = np.asarray(vec)
        if vec.size != grid.full_size:
            raise DimensionError(f"expected full vector of length {grid.full_size}, got {vec.size}")
        return cls(half_from_full(grid, vec[:-2]), float(vec[-2].real), float(vec[-1].real))

    @classmethod
    def zeros(cls, grid):
        return cls(np.zeros(grid.size - 2, dtype=complex))

    def check(self, grid):
        if self.coeffs.size != grid.size - 2:
            raise DimensionError(
                f"state has {self.coeffs.size} coefficients, grid expects {grid.size - 2}"
            )

    def array(self, grid):
        """Coefficients as an ``(n1 + 1, nfields, npts)`` array."""
        return self.coeffs.reshape(grid.n1 + 1, grid.nfields, grid.npts)

    def __add__(self, other):
        return StateVector(self.coeffs + other.coeffs, self.f + other.f, self.c + other.c)

    def __sub__(self, other):
        return StateVector(self.coeffs - other.coeffs, self.f - other.f, self.c - other.c)

    def __mul__(self, s):
        return StateVector(self.coeffs * s, self.f * s, self.c * s)

    __rmul__ = __mul__


def _euclid_energy(v):
    return 0.5 * float(np.vdot(v, v).real)


@dataclass
class OperatorPair:
    """Linearized operator ``a_u`` and singular mass operator ``m``.

    The callables describe the vector space the pencil acts on: the
    conjugation map whose fixed points are real states, the discrete
    energy used to normalize eigenvectors, and the norm applied to
    residual-space vectors.
    """

    a_u: object
    m: object
    conjugate: Callable = np.conj
    energy: Callable = _euclid_energy
    residual_norm: Callable = np.linalg.norm
    blocks: Optional[list] = None

    @property
    def n(self):
        return self.a_u.shape[0]


@dataclass(frozen=True)
class SpectrumBoundConstants:
    a: float
    b: float
    c_const: float


@dataclass
class BlockOperator:
    """Matrix made of Fourier blocks plus two bordered rows and columns.

    ``diags[d][i]`` is the block coupling output mode ``i - n1`` to input
    mode ``i - n1 - d``.
    """

    grid: ModeGrid
    diags: dict
    cols: np.ndarray  # (N - 2, 2) columns for f and c
    rows: np.ndarray  # (2, N) flux and phase rows

    def copy(self):
        return BlockOperator(
            self.grid, {d: b.copy() for d, b in self.diags.items()}, self.cols.copy(), self.rows.copy()
        )

    def add_block(self, d, blocks):
        if d in self.diags:
            self.diags[d] = self.diags[d] + blocks
        else:
            self.diags[d] = np.asarray(blocks, dtype=complex)

    def tosparse(self):
        g = self.grid
        nb, nm = g.block, g.nmodes
        rows_idx, cols_idx, vals = [], [], []
        ii, jj = np.meshgrid(np.arange(nb), np.arange(nb), indexing="ij")
        for d, blocks in self.diags.items():
            for i in range(nm):
                j = i - d
                if not 0 <= j < nm:
                    continue
                blk = blocks[i]
                nz = blk != 0
                rows_idx.append(ii[nz] + i * nb)
                cols_idx.append(jj[nz] + j * nb)
                vals.append(blk[nz])
        body = sp.coo_matrix(
            (np.concatenate(vals), (np.concatenate(rows_idx), np.concatenate(cols_idx))),
            shape=(nm * nb, nm * nb),
        )
        return sp.bmat(
            [[body, sp.csr_matrix(self.cols)], [sp.csr_matrix(self.rows[:, :-2]), self.rows[:, -2:]]],
            format="csr",
        )

    def todense(self):
        return self.tosparse().toarray()


class ChannelModel:
    """Discretized channel flow for one grid and parameter set."""

    def __init__(self, grid, params, kind=None):
        if kind is None:
            kind = "newtonian" if grid.nfields == 3 else "oldroydb"
        if kind not in ("newtonian", "oldroydb"):
            raise DimensionError(f"unknown model kind {kind!r}")
        if (kind == "newtonian") != (grid.nfields == 3):
            raise DimensionError(f"{kind} model needs nfields={'3' if kind == 'newtonian' else '6'}")
        if kind == "newtonian" and params.re <= 0:
            raise DimensionError("Newtonian model needs re > 0")
        if kind == "oldroydb":
            if params.wi is None or params.wi <= 0:
                raise DimensionError("Oldroyd-B model needs wi > 0")
            if params.beta_visc is None:
                raise DimensionError("Oldroyd-B model needs beta_visc")
        self.grid = grid
        self.params = params
        self.kind = kind
        self.cheb = cheb_matrices(grid.n2)

    def with_params(self, **changes):
        return ChannelModel(self.grid, replace(self.params, **changes), self.kind)

    # ------------------------------------------------------------------
    # static tables

    @cached_property
    def interior(self):
        mask = np.ones(self.grid.npts, dtype=bool)
        mask[[0, -1]] = False
        return mask

    @cached_property
    def velocity_fields(self):
        return (U1, U2)

    @cached_property
    def stress_fields(self):
        return (T11, T12, T22) if self.kind == "oldroydb" else ()

    @cached_property
    def dynamic_rows(self):
        """Boolean mask ``(nfields, npts)`` of rows carrying a time derivative."""
        g = self.grid
        mask = np.zeros((g.nfields, g.npts), dtype=bool)
        for f in self.velocity_fields:
            mask[f] = self.interior
        for f in self.stress_fields:
            mask[f] = True
        return mask

    @cached_property
    def mass_weights(self):
        """Per-field factor multiplying the time derivative."""
        w = np.zeros(self.grid.nfields)
        w[[U1, U2]] = 1.0 if self.kind == "newtonian" else self.params.re
        for f in self.stress_fields:
            w[f] = 1.0
        return w

    @cached_property
    def cheb_integrals(self):
        return chebyshev_integrals(self.grid.n2)

    @cached_property
    def cc_weights(self):
        return clenshaw_curtis_weights(self.grid.n2)

    @cached_property
    def gram(self):
        """``int T_m T_l dx2`` by Gauss-Legendre quadrature (exact)."""
        xg, wg = np.polynomial.legendre.leggauss(self.grid.n2 + 2)
        t, _, _ = chebyshev_tables(xg, self.grid.n2)
        return (t * wg[:, None]).T @ t

    @cached_property
    def gram_grad(self):
        xg, wg = np.polynomial.legendre.leggauss(self.grid.n2 + 2)
        _, dt, _ = chebyshev_tables(xg, self.grid.n2)
        return (dt * wg[:, None]).T @ dt

    # ------------------------------------------------------------------
    # linear operator

    def _linear_block(self, n):
        g, cb, prm = self.grid, self.cheb, self.params
        S = g.npts
        kn = n * g.k
        E, D1, D2 = cb.eval, cb.d1, cb.d2
        lap = D2 - kn**2 * E
        L = np.zeros((g.nfields, S, g.nfields, S), dtype=complex)
        inner = self.interior
        if self.kind == "newtonian":
            visc = 1.0 / prm.re
            L[U1, :, U1] = visc * lap
            L[U1, :, P] = -1j * kn * E
            L[U2, :, U2] = visc * lap
            L[U2, :, P] = -D1
        else:
            beta, wi, eps = prm.beta_visc, prm.wi, prm.eps
            L[U1, :, U1] = beta * lap
            L[U1, :, P] = -1j * kn * E
            L[U1, :, T11] = 1j * kn * E
            L[U1, :, T12] = D1
            L[U2, :, U2] = beta * lap
            L[U2, :, P] = -D1
            L[U2, :, T12] = 1j * kn * E
            L[U2, :, T22] = D1
            el = (1.0 - beta) / wi
            diff = np.where(inner[:, None], eps * lap, 0.0)
            for f in (T11, T12, T22):
                L[f, :, f] = -E / wi + diff
            L[T11, :, U1] = 2 * el * 1j * kn * E
            L[T12, :, U1] = el * D1
            L[T12, :, U2] = el * 1j * kn * E
            L[T22, :, U2] = 2 * el * D1
        # wall rows of the momentum equations become Dirichlet conditions
        for f in (U1, U2):
            L[f, ~inner] = 0.0
            L[f, 0, f] = E[0]
            L[f, -1, f] = E[-1]
        L[P, :, U1] = 1j * kn * E
        L[P, :, U2] = D1
        if n == 0:
            # pressure gauge: the n = 0 pressure is fixed up to a constant and
            # the spurious mode T_N2; one continuity row and the (redundant)
            # lower u2 wall row are traded for coefficient conditions on p
            L[P, 0] = 0.0
            L[P, 0, P, 0] = 1.0
            L[U2, -1] = 0.0
            L[U2, -1, P, -1] = 1.0
        return L.reshape(g.block, g.block)

    @cached_property
    def mass_block(self):
        g = self.grid
        blk = np.zeros((g.nfields, g.npts, g.nfields, g.npts))
        for f in range(g.nfields):
            rows = self.dynamic_rows[f]
            blk[f, rows, f] = self.mass_weights[f] * self.cheb.eval[rows]
        return blk.reshape(g.block, g.block)

    def flux_row(self):
        g = self.grid
        row = np.zeros(g.full_size, dtype=complex)
        start = g.index(0, U1, 0)
        row[start : start + g.npts] = 0.5 * g.norm_const * self.cheb_integrals
        return row

    def phase_row(self):
        """``-Im v2[1](x2 = 0)``, proportional to the ``sin(k x1)`` content of
        the wall-normal velocity on the centreline.

        Streamwise conditions such as <v1, sin(k x1)> duplicate existing rows:
        for every n != 0 continuity and no-penetration already force
        ``int v1_n dx2 = 0``.  The wall-normal integral ``int v2_1 dx2`` is
        nearly zero for the even Orr-Sommerfeld mode, which leaves the phase
        poorly pinned, so the centreline value is used instead.
        """
        g = self.grid
        row = np.zeros(g.full_size, dtype=complex)
        centre = np.array([(1, 0, -1, 0)[m % 4] for m in range(g.npts)], dtype=float)  # T_m(0)
        p1 = g.index(1, U2, 0)
        m1 = g.index(-1, U2, 0)
        row[p1 : p1 + g.npts] = 0.5j * centre
        row[m1 : m1 + g.npts] = -0.5j * centre
        return row

    def linear_operator(self, phase):
        """Linear part ``A`` (c-independent) as a :class:`BlockOperator`."""
        g = self.grid
        blocks = np.stack([self._linear_block(n) for n in range(-g.n1, g.n1 + 1)])
        cols = np.zeros((g.nmodes * g.block, 2), dtype=complex)
        fcol = np.zeros((g.nfields, g.npts))
        fcol[U1] = self.interior
        start = g.index(0, 0, 0)
        # a constant body force f projects onto mode 0 as f / sqrt(k / 2 pi)
        cols[start : start + g.block, 0] = fcol.reshape(-1) / g.norm_const
        rows = np.zeros((2, g.full_size), dtype=complex)
        rows[0] = self.flux_row()
        if phase:
            rows[1] = self.phase_row()
        else:
            rows[1, g.c_index] = 1.0
        return BlockOperator(g, {0: blocks}, cols, rows)

    def mass_operator(self):
        g = self.grid
        blocks = np.broadcast_to(self.mass_block, (g.nmodes, g.block, g.block)).astype(complex)
        return BlockOperator(
            g, {0: blocks}, np.zeros((g.nmodes * g.block, 2), dtype=complex), np.zeros((2, g.full_size), dtype=complex)
        )

    def rhs(self, phase, c_fixed=0.0):
        g = self.grid
        out = np.zeros(g.full_size, dtype=complex)
        out[g.f_index] = 1.0
        if not phase:
            out[g.c_index] = c_fixed
        return out

    # ------------------------------------------------------------------
    # bilinear operator

    @cached_property
    def terms(self):
        """Product terms ``(out, coef, xfield, xop, yfield, yop)`` of B(x, y).

        Each contributes ``coef * op(x[xfield]) * op(y[yfield])`` to the
        equation of ``out``; ops are 'v' (value), 'dx', 'dy'.
        """
        t = []
        if self.kind == "newtonian":
            rho = 1.0
        else:
            rho = self.params.re
        if rho != 0:
            for out in (U1, U2):
                t.append((out, rho, U1, "v", out, "dx"))
                t.append((out, rho, U2, "v", out, "dy"))
        if self.kind == "oldroydb":
            # advection of stress by x, stretching of stress y by grad x
            for out in (T11, T12, T22):
                t.append((out, 1.0, U1, "v", out, "dx"))
                t.append((out, 1.0, U2, "v", out, "dy"))
            t += [
                (T11, -2.0, U1, "dx", T11, "v"),
                (T11, -2.0, U1, "dy", T12, "v"),
                (T12, -1.0, U2, "dx", T11, "v"),
                (T12, -1.0, U2, "dy", T12, "v"),
                (T12, -1.0, U1, "dx", T12, "v"),
                (T12, -1.0, U1, "dy", T22, "v"),
                (T22, -2.0, U2, "dx", T12, "v"),
                (T22, -2.0, U2, "dy", T22, "v"),
            ]
        return t

    def _split(self, vec):
        g = self.grid
        vec = np.asarray(vec)
        if vec.size != g.full_size:
            raise DimensionError(f"expected vector of length {g.full_size}, got {vec.size}")
        return vec[:-2].reshape(g.nmodes, g.nfields, g.npts), vec[-2], vec[-1]

    def _op_values(self, coeffs, f, op):
        g, cb = self.grid, self.cheb
        if op == "dy":
            return coeffs[:, f, :] @ cb.d1.T
        vals = coeffs[:, f, :] @ cb.eval.T
        if op == "dx":
            vals = vals * (1j * g.wavenumbers[:, None])
        return vals

    def _convolve(self, a, b):
        """Truncated product of Fourier series: ``out[n] = sum_q a[q] b[n - q]``."""
        n1 = self.grid.n1
        nm = self.grid.nmodes
        out = np.zeros(np.broadcast_shapes(a.shape, b.shape), dtype=complex)
        for i in range(nm):
            if not np.any(a[i]):
                continue
            lo = max(0, n1 - i)
            hi = min(nm, 3 * n1 + 1 - i)
            out[i + lo - n1 : i + hi - n1] += a[i] * b[lo:hi]
        return out * self.grid.norm_const

    def bilinear(self, x, y):
        """``B(x, y)`` for full-range vectors; bilinear over the complex field."""
        g = self.grid
        X, xf, xc = self._split(x)
        Y, yf, yc = self._split(y)
        out = np.zeros((g.nmodes, g.nfields, g.npts), dtype=complex)
        cache = {}

        def vals(which, arr, f, op):
            key = (which, f, op)
            if key not in cache:
                cache[key] = self._op_values(arr, f, op)
            return cache[key]

        for o, coef, fx, opx, fy, opy in self.terms:
            out[:, o] += coef * self._convolve(vals("x", X, fx, opx), vals("y", Y, fy, opy))
        out *= self.dynamic_rows[None]
        if xc != 0:
            # frame term: -c * M d/dx1 y
            for f in range(g.nfields):
                w = self.mass_weights[f]
                if w == 0:
                    continue
                out[:, f] -= xc * w * self._op_values(Y, f, "dx") * self.dynamic_rows[f]
        res = np.zeros(g.full_size, dtype=complex)
        res[:-2] = out.reshape(-1)
        return res

    def bilinear_jacobian(self, base):
        """Matrix of ``w -> B(base, w) + B(w, base)`` as a BlockOperator."""
        g, cb = self.grid, self.cheb
        Ub, _, cbase = self._split(base)
        nm, S = g.nmodes, g.npts
        kn = g.wavenumbers
        E, D1 = cb.eval, cb.d1

        def op_matrix(op):
            if op == "v":
                return np.broadcast_to(E, (nm, S, S))
            if op == "dx":
                return 1j * kn[:, None, None] * E[None]
            return np.broadcast_to(D1, (nm, S, S))

        out = BlockOperator(
            g, {}, np.zeros((nm * g.block, 2), dtype=complex), np.zeros((2, g.full_size), dtype=complex)
        )
        acc = {}
        kappa = g.norm_const
        for o, coef, fx, opx, fy, opy in self.terms:
            rows = self.dynamic_rows[o]
            # B(base, w): base enters through (fx, opx), w through (fy, opy)
            # B(w, base): w enters through (fx, opx), base through (fy, opy)
            for known_f, known_op, free_f, free_op in ((fx, opx, fy, opy), (fy, opy, fx, opx)):
                a = self._op_values(Ub, known_f, known_op)
                opm = op_matrix(free_op)
                for di in range(nm):
                    if not np.any(a[di]):
                        continue
                    d = di - g.n1
                    blk = acc.setdefault(d, np.zeros((nm, g.nfields, S, g.nfields, S), dtype=complex))
                    # output mode i, input mode j = i - d
                    i0, i1 = max(0, d), min(nm, nm + d)
                    coefvec = coef * kappa * a[di] * rows
                    blk[i0:i1, o, :, free_f, :] += coefvec[None, :, None] * opm[i0 - d : i1 - d]
        if cbase != 0:
            blk = acc.setdefault(0, np.zeros((nm, g.nfields, S, g.nfields, S), dtype=complex))
            for f in range(g.nfields):
                w = self.mass_weights[f]
                if w == 0:
                    continue
                rows = self.dynamic_rows[f]
                blk[:, f, rows, f, :] -= cbase * w * (1j * kn[:, None, None] * E[None, rows])
        # column for c: d/dc of B(v, base) = -M d/dx1 base
        ccol = np.zeros((nm, g.nfields, S), dtype=complex)
        for f in range(g.nfields):
            w = self.mass_weights[f]
            if w:
                ccol[:, f] = -w * self._op_values(Ub, f, "dx") * self.dynamic_rows[f]
        out.cols[:, 1] = ccol.reshape(-1)
        for d, blk in acc.items():
            out.diags[d] = blk.reshape(nm, g.block, g.block)
        return out

    # ------------------------------------------------------------------
    # assembled problems

    def combine(self, lin, jac):
        """``lin - jac`` as a BlockOperator."""
        out = lin.copy()
        for d, blk in jac.diags.items():
            out.add_block(d, -blk)
        out.cols = out.cols - jac.cols
        out.rows = out.rows - jac.rows
        return out

    def residual(self, v, phase, c_fixed=0.0):
        lin = self.linear_operator(phase)
        return self._matvec(lin, v) - self.bilinear(v, v) - self.rhs(phase, c_fixed)

    def _matvec(self, op, v):
        g = self.grid
        V = v[:-2].reshape(g.nmodes, g.block)
        out = np.zeros((g.nmodes, g.block), dtype=complex)
        for d, blk in op.diags.items():
            i0, i1 = max(0, d), min(g.nmodes, g.nmodes + d)
            out[i0:i1] += np.einsum("nij,nj->ni", blk[i0:i1], V[i0 - d : i1 - d])
        res = np.empty(g.full_size, dtype=complex)
        res[:-2] = out.reshape(-1) + op.cols @ v[-2:]
        res[-2:] = op.rows @ v
        return res

    def jacobian(self, v, phase):
        """Jacobian of the steady residual as a BlockOperator."""
        return self.combine(self.linear_operator(phase), self.bilinear_jacobian(v))

    def operator_pair(self, base, phase=None):
        if phase is None:
            phase = is_travelling(self.grid, base)
        a_u = self.jacobian(base, phase)
        mass = self.mass_operator()
        blocks = None
        if list(a_u.diags) == [0] and not phase:
            blocks = fourier_blocks(self.grid)
        return OperatorPair(
            a_u=a_u.tosparse(),
            m=mass.tosparse(),
            conjugate=lambda x: conjugate_full(self.grid, x),
            energy=self.energy,
            residual_norm=self.residual_norm,
            blocks=blocks,
        )

    # ------------------------------------------------------------------
    # norms

    def energy(self, vec):
        """Perturbation kinetic energy of a full-range vector (Parseval form)."""
        g = self.grid
        V = np.asarray(vec)[:-2].reshape(g.nmodes, g.nfields, g.npts)
        tot = 0.0
        for f in (U1, U2):
            tot += np.einsum("nm,ml,nl->", V[:, f].conj(), self.gram, V[:, f]).real
        return 0.5 * tot

    def residual_norm(self, vec):
        """Discrete L2 norm of the dynamic rows of a residual-space vector."""
        g = self.grid
        R = np.asarray(vec)[:-2].reshape(g.nmodes, g.nfields, g.npts)
        w = self.cc_weights[None, None, :] * self.dynamic_rows[None]
        return float(np.sqrt(np.sum(w * np.abs(R) ** 2)))

    # ------------------------------------------------------------------
    # diagnostics

    def _quadrature(self, oversample=2):
        g = self.grid
        nx = oversample * 2 * g.nmodes
        x1 = g.length * np.arange(nx) / nx
        xg, wg = np.polynomial.legendre.leggauss(oversample * g.npts)
        return x1, xg, np.outer(np.full(nx, g.length / nx), wg)

    def _fields(self, full, x1, x2, dx=0, dy=0):
        from .spectral import physical_values

        g = self.grid
        arr = np.asarray(full)[:-2].reshape(g.nmodes, g.nfields, g.npts)
        return physical_values(g, arr, x1, x2, dx, dy).real

    def xhat2(self):
        if self.params.xhat2 is not None:
            return self.params.xhat2
        if self.kind == "newtonian":
            return 0.0
        return float(self.cheb.points[10]) if self.grid.n2 >= 10 else 0.0

    def observables(self, u, base=None):
        """Perturbation diagnostics e, d, mwnv, svf (and T_ratio for Oldroyd-B)."""
        g = self.grid
        full = _as_full(g, u)
        x1, x2, w = self._quadrature()
        vel = self._fields(full, x1, x2)
        e = 0.5 * float(np.sum(w * (vel[U1] ** 2 + vel[U2] ** 2)))
        d2 = 0.0
        for dx, dy in ((1, 0), (0, 1)):
            grad = self._fields(full, x1, x2, dx, dy)
            d2 += float(np.sum(w * (grad[U1] ** 2 + grad[U2] ** 2)))
        xg, wg = np.polynomial.legendre.leggauss(g.npts)
        line = self._fields(full, np.array([0.0]), xg)
        out = {
            "e": e,
            "d": float(np.sqrt(d2)),
            "mwnv": float(np.sum(wg * line[U2, 0])),
            "svf": float(self._fields(full, np.array([0.0]), np.array([self.xhat2()]))[U1, 0, 0]),
        }
        if self.kind == "oldroydb":
            if base is None:
                base = laminar_state(g, self.params)
            bfull = _as_full(g, base)
            tb = self._fields(bfull, x1, x2)
            num = np.sum(w * (tb[T11] + tb[T22] + vel[T11] + vel[T22]))
            den = np.sum(w * (tb[T11] + tb[T22]))
            out["T_ratio"] = float(num / den)
        return out

    def spectrum_bound_constants(self, base, oversample=4):
        """Maxima of |U - c e1|, |curl U| and |grad U| on an oversampled grid."""
        g = self.grid
        full = _as_full(g, base)
        nx = oversample * g.nmodes
        x1 = g.length * np.arange(nx) / nx
        x2 = np.cos(np.pi * np.arange(oversample * g.npts) / (oversample * g.npts - 1))
        vals = self._fields(full, x1, x2)
        ddx = self._fields(full, x1, x2, 1, 0)
        ddy = self._fields(full, x1, x2, 0, 1)
        c = full[-1].real
        a = np.max(np.hypot(vals[U1] - c, vals[U2])) if np.any(full[:-2]) else 0.0
        b = np.max(np.abs(ddx[U2] - ddy[U1]))
        cc = np.max(np.sqrt(ddx[U1] ** 2 + ddy[U1] ** 2 + ddx[U2] ** 2 + ddy[U2] ** 2))
        return SpectrumBoundConstants(float(a), float(b), float(cc))


def fourier_blocks(grid):
    """Index sets of the decoupled Fourier blocks (f and c join mode 0)."""
    out = []
    for n in range(-grid.n1, grid.n1 + 1):
        start = (n + grid.n1) * grid.block
        idx = np.arange(start, start + grid.block)
        if n == 0:
            idx = np.concatenate([idx, [grid.f_index, grid.c_index]])
        out.append(idx)
    return out


def is_travelling(grid, state):
    """True when the state depends on x1 (any nonzero mode n >= 1)."""
    if isinstance(state, StateVector):
        arr = state.array(grid)[1:]
        return bool(np.any(np.abs(arr) > 0))
    V = np.asarray(state)[:-2].reshape(grid.nmodes, grid.nfields, grid.npts)
    return bool(np.any(np.abs(np.delete(V, grid.n1, axis=0)) > 0))


# ----------------------------------------------------------------------
# module-level interface


def _model_for(grid, params=None, model=None):
    if model is not None:
        return model
    if params is None:
        params = ModelParams(re=1.0) if grid.nfields == 3 else ModelParams(re=0.0, wi=1.0, beta_visc=1.0)
    return ChannelModel(grid, params)


def _as_full(grid, v):
    if isinstance(v, StateVector):
        v.check(grid)
        return v.to_full(grid)
    v = np.asarray(v)
    if v.size != grid.full_size:
        raise DimensionError(f"expected a StateVector or full vector of length {grid.full_size}, got {v.size}")
    return v.astype(complex)


def laminar_guess(grid, params):
    """Analytic laminar profile (exact for Newtonian, eps = 0 start for Oldroyd-B)."""
    kap = grid.norm_const
    v = np.zeros(grid.full_size, dtype=complex)
    base = grid.index(0, U1, 0)
    # 1.5 (1 - x^2) = 0.75 T0 - 0.75 T2
    v[base] = 0.75 / kap
    v[base + 2] = -0.75 / kap
    if grid.nfields == 3:
        v[grid.f_index] = 3.0 / params.re
    else:
        wi, beta = params.wi, params.beta_visc
        v[grid.index(0, T12, 1)] = -3.0 * (1 - beta) / kap
        # T11 = 2 Wi (1 - beta) U'^2 = 9 Wi (1 - beta) (T0 + T2)
        v[grid.index(0, T11, 0)] = 9.0 * wi * (1 - beta) / kap
        v[grid.index(0, T11, 2)] = 9.0 * wi * (1 - beta) / kap
        v[grid.f_index] = 3.0
    return v


def laminar_state(grid, params, tol=1e-11, max_iter=25):
    """x1-independent steady state with unit mean velocity and no-slip walls."""
    from .continuation import SteadyProblem, newton_solve

    model = ChannelModel(grid, params)
    if grid.n1 > 1:
        # only the mean mode is excited; solve on the smallest grid and embed
        small = ModeGrid(grid.k, 1, grid.n2, grid.nfields)
        st = laminar_state(small, params, tol, max_iter)
        coeffs = np.zeros((grid.n1 + 1, grid.nfields, grid.npts), dtype=complex)
        coeffs[0] = st.array(small)[0]
        return StateVector(coeffs.reshape(-1), st.f, 0.0)
    prob = SteadyProblem(model, phase=False)
    x0 = prob.restrict(laminar_guess(grid, params))
    res = newton_solve(prob, x0, tol=tol, max_iter=max_iter)
    state = prob.to_state(res.x)
    state.coeffs[np.abs(state.coeffs) < 1e-300] = 0.0
    arr = state.array(grid)
    arr[0] = arr[0].real
    return state


def apply_bilinear(grid, cheb, x, y, params=None, model=None):
    """``B(x, y)`` at the collocation points (full-range residual-space vector)."""
    m = _model_for(grid, params, model)
    if cheb is not None and cheb.n2 != grid.n2:
        raise DimensionError("Chebyshev tables do not match the grid")
    return m.bilinear(_as_full(grid, x), _as_full(grid, y))


def assemble_steady(grid, cheb, params, state, phase=None, c_fixed=0.0, dense=True):
    """Steady residual and Jacobian (dense unless ``dense=False``)."""
    m = ChannelModel(grid, params)
    full = _as_full(grid, state)
    if phase is None:
        phase = is_travelling(grid, full)
    if not phase and c_fixed == 0.0:
        c_fixed = full[-1].real
    res = m.residual(full, phase, c_fixed)
    jac = m.jacobian(full, phase)
    return res, (jac.todense() if dense else jac.tosparse())


def assemble_linearization(grid, cheb, params, base, phase=None):
    return ChannelModel(grid, params).operator_pair(_as_full(grid, base), phase)


def observables(grid, cheb, u, params=None, base=None, model=None):
    return _model_for(grid, params, model).observables(u, base=base)


def spectrum_bound_constants(grid, cheb, base, params=None, model=None):
    return _model_for(grid, params, model).spectrum_bound_constants(base)


def spectrum_bound(consts, re, lam):
    """Right-hand side of ``|Im lam| <= a sqrt((-Re lam + c) Re) + b``."""
    return consts.a * np.sqrt(max(-lam.real + consts.c_const, 0.0) * re) + consts.b
