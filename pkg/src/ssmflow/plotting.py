"""PNG figures written next to the CSV output (Agg backend, no display needed)."""

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "figure.figsize": (5.0, 3.6),
    "figure.dpi": 120,
    "font.size": 9,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "savefig.bbox": "tight",
}


def _save(fig, path):
    fig.savefig(path)
    plt.close(fig)
    return path


def plot_spectrum(path, values, beta_split=None, title=None):
    values = np.asarray(values, dtype=complex)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        if beta_split is not None:
            sel = values.real > beta_split
            ax.plot(values.real[~sel], values.imag[~sel], "k.", ms=3, label=r"$\Sigma_2$")
            ax.plot(values.real[sel], values.imag[sel], "ro", ms=4, mfc="none", label=r"$\Sigma_1$")
            ax.axvline(beta_split, color="0.5", lw=0.8, ls="--")
            ax.legend(loc="best", frameon=False)
        else:
            ax.plot(values.real, values.imag, "k.", ms=3)
        ax.axvline(0.0, color="k", lw=0.6)
        ax.set_xlabel(r"Re $\lambda$")
        ax.set_ylabel(r"Im $\lambda$")
        finite = values[np.isfinite(values)]
        if finite.size:
            lo = max(finite.real.min(), -1.0)
            ax.set_xlim(lo, max(0.05, finite.real.max() * 1.2 + 0.01))
        if title:
            ax.set_title(title)
        return _save(fig, path)


def plot_branch(path, params, values, folds=(), xlabel="Re", ylabel="e"):
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.plot(params, values, "-", color="C0", lw=1.2)
        ax.plot(params, values, ".", color="C0", ms=3)
        for f in folds:
            ax.axvline(f, color="C3", lw=0.8, ls=":")
        ax.set_xlabel(xlabel)
        ax.set_ylabel(ylabel)
        return _save(fig, path)


def plot_orbit(path, t, observables, keys=("e", "d", "mwnv", "svf")):
    keys = [k for k in keys if observables and k in observables[0]]
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(len(keys), 1, sharex=True, figsize=(5.0, 1.4 * max(len(keys), 1) + 0.6))
        axes = np.atleast_1d(axes)
        for ax, k in zip(axes, keys):
            ax.plot(t, [o[k] for o in observables], lw=1.0)
            ax.set_ylabel(k)
        axes[-1].set_xlabel("t")
        return _save(fig, path)


def plot_polar(path, polar, radii=(), r_max=None):
    """Radial growth rate ``rho'/rho`` of the reduced polar form."""
    top = r_max if r_max else 1.5 * max([r.radius for r in radii] + [1e-3])
    rho = np.linspace(0.0, top, 400)
    g = sum(c * rho ** (2 * k) for k, c in enumerate(polar.radial))
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.plot(rho, g, "k-", lw=1.0)
        ax.axhline(0.0, color="0.5", lw=0.6)
        for r in radii:
            ax.plot(r.radius, 0.0, "o", color="C2" if r.stable else "C3", mfc="C2" if r.stable else "none")
        ax.set_xlabel(r"$\rho$")
        ax.set_ylabel(r"$\dot\rho / \rho$")
        return _save(fig, path)


def plot_field(path, x1, x2, field, label="u1"):
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        X, Y = np.meshgrid(x1, x2, indexing="ij")
        cs = ax.contourf(X, Y, field, levels=24, cmap="RdBu_r")
        fig.colorbar(cs, ax=ax, label=label)
        ax.set_xlabel(r"$x_1$")
        ax.set_ylabel(r"$x_2$")
        return _save(fig, path)
