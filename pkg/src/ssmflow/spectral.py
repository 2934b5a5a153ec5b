"""Chebyshev-Fourier primitives for a periodic channel.

Fields are expanded as ``sum_n sum_m v[n, m] Phi_n(x1) T_m(x2)`` with
``Phi_n(x1) = sqrt(k / 2 pi) exp(i n k x1)`` and Chebyshev polynomials
``T_m`` on ``[-1, 1]``.  Real fields obey ``v[-n] = conj(v[n])``, so states
only store ``n = 0..N1``; operators work on the full range ``-N1..N1``.
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import DegenerateGridError, DimensionError

NEWTONIAN_FIELDS = ("u1", "u2", "p")
OLDROYDB_FIELDS = ("u1", "u2", "p", "T11", "T12", "T22")


@dataclass(frozen=True)
class ModeGrid:
    """Discretization descriptor.

    Attributes
    ----------
    k : float
        Streamwise wavenumber; the domain is ``[0, 2 pi / k) x [-1, 1]``.
    n1 : int
        Highest Fourier mode kept.
    n2 : int
        Chebyshev degree.
    nfields : int
        3 for Newtonian (u1, u2, p), 6 for Oldroyd-B (adds T11, T12, T22).
    """

    k: float
    n1: int
    n2: int
    nfields: int = 3

    def __post_init__(self):
        if not (np.isfinite(self.k) and self.k > 0):
            raise DimensionError(f"k must be > 0, got {self.k}")
        if self.n1 < 1:
            raise DimensionError(f"n1 must be >= 1, got {self.n1}")
        if self.n2 < 4:
            raise DimensionError(f"n2 must be >= 4, got {self.n2}")
        if self.nfields not in (3, 6):
            raise DimensionError(f"nfields must be 3 or 6, got {self.nfields}")

    @property
    def npts(self):
        return self.n2 + 1

    @property
    def nmodes(self):
        """Number of Fourier modes on the full range -n1..n1."""
        return 2 * self.n1 + 1

    @property
    def block(self):
        """Unknowns per Fourier mode."""
        return self.nfields * self.npts

    @property
    def size(self):
        """Length of a half-range state (n = 0..n1) including f and c."""
        return self.nfields * (self.n1 + 1) * self.npts + 2

    @property
    def full_size(self):
        """Length of a full-range operator vector (n = -n1..n1) incl. f and c."""
        return self.nmodes * self.block + 2

    @property
    def norm_const(self):
        """Fourier normalization sqrt(k / 2 pi)."""
        return np.sqrt(self.k / (2 * np.pi))

    @property
    def length(self):
        return 2 * np.pi / self.k

    @property
    def wavenumbers(self):
        """Streamwise wavenumbers n k on the full range, ordered -n1..n1."""
        return self.k * np.arange(-self.n1, self.n1 + 1)

    @property
    def field_names(self):
        return NEWTONIAN_FIELDS if self.nfields == 3 else OLDROYDB_FIELDS

    def index(self, n, field, m):
        """Position of coefficient (n, field, m) in a full-range vector."""
        return ((n + self.n1) * self.nfields + field) * self.npts + m

    @property
    def f_index(self):
        return self.full_size - 2

    @property
    def c_index(self):
        return self.full_size - 1


@dataclass(frozen=True)
class ChebMatrices:
    """Chebyshev tables at the Gauss-Lobatto points.

    ``eval[s, m] = T_m(points[s])`` and ``d1``, ``d2`` hold the exact first
    and second derivatives of ``T_m`` at the same points.
    """

    points: np.ndarray
    eval: np.ndarray
    d1: np.ndarray
    d2: np.ndarray

    @property
    def n2(self):
        return len(self.points) - 1


def gauss_lobatto_points(n2):
    """Chebyshev extrema ``cos(s pi / n2)``, s = 0..n2 (from +1 down to -1)."""
    if n2 < 1:
        raise DegenerateGridError(f"need n2 >= 1 for a Gauss-Lobatto grid, got {n2}")
    x = np.cos(np.pi * np.arange(n2 + 1) / n2)
    x[0], x[-1] = 1.0, -1.0
    # symmetric points must cancel exactly; cos rounding leaves ~1e-17
    x = 0.5 * (x - x[::-1])
    return x


def chebyshev_tables(x, degree):
    """Values, first and second derivatives of T_0..T_degree at points ``x``.

    Built from the three-term recurrence, so derivatives are exact (up to
    rounding) including at the endpoints.
    """
    x = np.asarray(x, dtype=float)
    t = np.zeros((x.size, degree + 1))
    dt = np.zeros_like(t)
    ddt = np.zeros_like(t)
    t[:, 0] = 1.0
    if degree >= 1:
        t[:, 1] = x
        dt[:, 1] = 1.0
    for m in range(1, degree):
        t[:, m + 1] = 2 * x * t[:, m] - t[:, m - 1]
        dt[:, m + 1] = 2 * t[:, m] + 2 * x * dt[:, m] - dt[:, m - 1]
        ddt[:, m + 1] = 4 * dt[:, m] + 2 * x * ddt[:, m] - ddt[:, m - 1]
    return t, dt, ddt


@lru_cache(maxsize=32)
def cheb_matrices(n2):
    if n2 < 1:
        raise DegenerateGridError(f"need n2 >= 1, got {n2}")
    x = gauss_lobatto_points(n2)
    t, dt, ddt = chebyshev_tables(x, n2)
    for a in (x, t, dt, ddt):
        a.setflags(write=False)
    return ChebMatrices(points=x, eval=t, d1=dt, d2=ddt)


def clenshaw_curtis_weights(n2):
    """Quadrature weights on the Gauss-Lobatto points (exact to degree n2)."""
    theta = np.pi * np.arange(n2 + 1) / n2
    w = np.zeros(n2 + 1)
    v = np.ones(n2 - 1)
    inner = slice(1, n2)
    if n2 % 2 == 0:
        w[0] = w[n2] = 1.0 / (n2**2 - 1)
        for j in range(1, n2 // 2):
            v -= 2 * np.cos(2 * j * theta[inner]) / (4 * j**2 - 1)
        v -= np.cos(n2 * theta[inner]) / (n2**2 - 1)
    else:
        w[0] = w[n2] = 1.0 / n2**2
        for j in range(1, (n2 - 1) // 2 + 1):
            v -= 2 * np.cos(2 * j * theta[inner]) / (4 * j**2 - 1)
    w[inner] = 2 * v / n2
    return w


def chebyshev_integrals(n2):
    """``int_{-1}^{1} T_m dx`` for m = 0..n2."""
    m = np.arange(n2 + 1)
    out = np.zeros(n2 + 1)
    even = m % 2 == 0
    out[even] = 2.0 / (1.0 - m[even] ** 2)
    return out


def full_from_half(grid, coeffs):
    """Expand half-range coefficients (n = 0..n1) to the full range.

    Returns an array of shape ``(nmodes, nfields, npts)``.
    """
    coeffs = np.asarray(coeffs)
    expected = grid.nfields * (grid.n1 + 1) * grid.npts
    if coeffs.size != expected:
        raise DimensionError(f"expected {expected} coefficients, got {coeffs.size}")
    half = coeffs.reshape(grid.n1 + 1, grid.nfields, grid.npts)
    full = np.empty((grid.nmodes, grid.nfields, grid.npts), dtype=complex)
    full[grid.n1 :] = half
    full[: grid.n1] = np.conj(half[:0:-1])
    return full


def half_from_full(grid, full):
    full = np.asarray(full).reshape(grid.nmodes, grid.nfields, grid.npts)
    return full[grid.n1 :].reshape(-1).copy()


def conjugate_full(grid, vec):
    """Conjugation map of full-range vectors: ``(Cv)[n] = conj(v[-n])``.

    Real physical states are exactly the fixed points of this map.
    """
    vec = np.asarray(vec)
    nb = grid.nmodes * grid.block
    body = vec[:nb].reshape(grid.nmodes, grid.block)
    out = np.empty_like(vec, dtype=complex)
    out[:nb] = np.conj(body[::-1]).reshape(-1)
    out[nb:] = np.conj(vec[nb:])
    return out


def to_physical(grid, cheb, state, nx):
    """Evaluate real fields on a uniform ``nx x (n2 + 1)`` grid.

    Parameters
    ----------
    state : StateVector or array
        Half-range coefficients (a ``StateVector`` or its ``coeffs``).

    Returns
    -------
    x1 : (nx,) streamwise abscissae on ``[0, 2 pi / k)``
    x2 : (n2 + 1,) Gauss-Lobatto points
    fields : (nfields, nx, n2 + 1) real array
    """
    coeffs = getattr(state, "coeffs", state)
    if cheb.n2 != grid.n2:
        raise DimensionError("Chebyshev tables do not match the grid")
    full = full_from_half(grid, coeffs)
    x1 = grid.length * np.arange(nx) / nx
    return x1, cheb.points, _synthesize(grid, full, x1, cheb.eval).real


def _synthesize(grid, full, x1, table):
    # values[n, f, s] on the Chebyshev side, then sum over Fourier modes
    vals = np.einsum("nfm,sm->nfs", full, table)
    phase = grid.norm_const * np.exp(1j * np.outer(x1, grid.wavenumbers))
    return np.einsum("xn,nfs->fxs", phase, vals)


def physical_values(grid, full, x1, x2, dx=0, dy=0):
    """Evaluate full-range coefficients (and derivatives) at arbitrary points.

    ``full`` has shape ``(nmodes, nfields, npts)``; returns complex values of
    shape ``(nfields, len(x1), len(x2))``.
    """
    t, dt, ddt = chebyshev_tables(np.asarray(x2, dtype=float), grid.n2)
    table = (t, dt, ddt)[dy]
    vals = np.einsum("nfm,sm->nfs", full, table)
    vals = vals * (1j * grid.wavenumbers[:, None, None]) ** dx
    phase = grid.norm_const * np.exp(1j * np.outer(x1, grid.wavenumbers))
    return np.einsum("xn,nfs->fxs", phase, vals)


def fit_coefficients(grid, x1, x2, fields):
    """Least-squares refit of half-range coefficients from physical samples.

    Inverse of :func:`to_physical` when the samples resolve every mode.
    """
    fields = np.asarray(fields, dtype=float)
    t, _, _ = chebyshev_tables(np.asarray(x2, dtype=float), grid.n2)
    tinv = np.linalg.pinv(t)
    # project onto Chebyshev in x2, then onto Fourier modes in x1
    cheb_side = np.einsum("ms,fxs->fxm", tinv, fields)
    kk = grid.k * np.arange(grid.n1 + 1)
    phase = grid.norm_const * np.exp(1j * np.outer(x1, kk))
    # real fields: f(x) = sum_n c_n phi_n + c.c. for n > 0
    basis = np.concatenate([phase[:, :1].real, 2 * phase[:, 1:].real, -2 * phase[:, 1:].imag], axis=1)
    sol, *_ = np.linalg.lstsq(basis, cheb_side.transpose(1, 0, 2).reshape(len(x1), -1), rcond=None)
    sol = sol.reshape(-1, grid.nfields, grid.npts)
    n1 = grid.n1
    half = np.empty((n1 + 1, grid.nfields, grid.npts), dtype=complex)
    half[0] = sol[0]
    half[1:] = sol[1 : n1 + 1] + 1j * sol[n1 + 1 :]
    return half.transpose(0, 1, 2).reshape(-1)
