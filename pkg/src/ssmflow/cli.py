"""Command-line driver: ``ssmflow config.json [--output-dir D] [--threads N] [--log-level L]``."""

import argparse
import logging
import os
import platform
import sys
import time

import numpy as np

from . import __version__, io, pipeline
from .config import load_config
from .eigen import solve_generalized_eig
from .errors import EXIT_CODES, SerializationError, SolverError, SsmFlowError
from .models import laminar_state
from .reduced import ReducedVectorField, circle_trajectory, integrate, lift_orbit
from .spectral import to_physical
from .ssm import paired_theta

log = logging.getLogger("ssmflow")

FIELD_NAMES = ("u1", "u2", "p", "T11", "T12", "T22")


class OutputDir:
    """Output directory guarded by an exclusive lockfile."""

    def __init__(self, path):
        self.path = os.path.abspath(path)
        self.lock = os.path.join(self.path, ".lock")
        self.files = []

    def _stale(self):
        """True when the lock names a process that no longer exists."""
        try:
            with open(self.lock) as fh:
                pid = int(fh.read().strip())
        except (OSError, ValueError):
            return False
        try:
            os.kill(pid, 0)
        except ProcessLookupError:
            return True
        except PermissionError:
            return False
        return False

    def __enter__(self):
        try:
            os.makedirs(self.path, exist_ok=True)
            if os.path.exists(self.lock) and self._stale():
                log.warning("removing stale lock %s", self.lock)
                os.remove(self.lock)
            fd = os.open(self.lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError as exc:
            raise SerializationError(f"{self.path} is locked by another run ({self.lock})") from exc
        except OSError as exc:
            raise SerializationError(f"cannot prepare output directory {self.path}: {exc}") from exc
        os.write(fd, str(os.getpid()).encode())
        os.close(fd)
        return self

    def __exit__(self, *exc):
        try:
            os.remove(self.lock)
        except OSError:
            pass

    def __call__(self, name):
        p = os.path.join(self.path, name)
        self.files.append(p)
        return p


def _model(cfg):
    return pipeline.build_model(cfg.model, **cfg.grid, **cfg.params)


def _write_state(out, model, state, name="state", nx=32, extra=None):
    from . import plotting

    g = model.grid
    io.save_state(out(f"{name}.json"), g, state, model.params, extra)
    x1, x2, fields = to_physical(g, model.cheb, state, nx)
    names = FIELD_NAMES[: g.nfields]
    io.write_physical_csv(out(f"{name}_physical.csv"), x1, x2, fields, names)
    plotting.plot_field(out(f"{name}_u1.png"), x1, x2, fields[0], "u1")


def _spectrum(out, eigs, beta_split=None):
    from . import plotting

    vals = np.array([p.value for p in eigs])
    io.write_spectrum_csv(out("spectrum.csv"), vals, beta_split)
    plotting.plot_spectrum(out("spectrum.png"), vals, beta_split)


def _ssm_kw(cfg):
    s = cfg.ssm
    kw = {k: s[k] for k in ("res_tol", "cross_tol", "err_tol") if k in s}
    return dict(beta_split=s["beta_split"], order=s.get("order", 3), style=s.get("style", "mixed"), **kw)


def _reduced_doc(red):
    doc = {"format": "ssmflow.reduced", "version": io.FORMAT_VERSION, "r": red.table.r}
    if red.polar is not None:
        doc["radial"] = red.polar.radial
        doc["angular"] = red.polar.angular
        doc["equivariance_defect"] = red.polar.equivariance_defect
        doc["radii"] = [
            {"radius": r.radius, "stable": bool(r.stable), "slope": r.slope, "frequency": float(red.polar.phidot(r.radius))}
            for r in red.radii
        ]
        if len(red.radii) >= 2:
            doc["radius_ratio"] = red.radii[1].radius / red.radii[0].radius
    return doc


def task_laminar(cfg, out):
    model = _model(cfg)
    base = laminar_state(model.grid, model.params)
    _write_state(out, model, base)


def task_spectrum(cfg, out):
    model = _model(cfg)
    base, ops = pipeline.laminar_operator(model)
    s = cfg.spectrum
    shift = s.get("shift")
    if isinstance(shift, list):
        shift = complex(shift[0], shift[1])
    eigs = solve_generalized_eig(
        ops, shift=shift, count=s.get("count"), method=s.get("method", "auto"), vectors=False
    )
    _spectrum(out, eigs, s.get("beta_split"))


def _reduce(cfg, out):
    from . import plotting

    model = _model(cfg)
    red = pipeline.reduce_laminar(model, **_ssm_kw(cfg))
    _spectrum(out, red.eigs, red.split.beta_split)
    io.save_table(out("ssm.json"), red.table)
    if red.polar is not None:
        plotting.plot_polar(out("polar.png"), red.polar, red.radii)
    return red


def task_ssm(cfg, out):
    _reduce(cfg, out)


def task_reduce(cfg, out):
    red = _reduce(cfg, out)
    io.write_json(out("reduced.json"), _reduced_doc(red))


def task_lift(cfg, out):
    from . import plotting

    red = _reduce(cfg, out)
    io.write_json(out("reduced.json"), _reduced_doc(red))
    lift = cfg.lift
    samples = lift.get("samples", 200)
    observe = lambda v: red.model.observables(v, red.base)
    if red.polar is not None and red.radii and "rho0" not in lift:
        rad = red.radii[0].radius
        freq = float(red.polar.phidot(rad))
        t_end = lift.get("t_end", 2 * np.pi / abs(freq))
        traj = circle_trajectory(red.table, rad, freq, np.linspace(0.0, t_end, samples))
    else:
        rho0 = lift.get("rho0", 1e-3)
        t_end = lift.get("t_end", 100.0)
        traj = integrate(
            ReducedVectorField.from_table(red.table),
            paired_theta(red.table, rho0),
            (0.0, t_end),
            t_eval=np.linspace(0.0, t_end, samples),
        )
    lift_orbit(red.table, traj, observe=observe, conjugate=red.ops.conjugate)
    io.write_orbit_csv(out("orbit.csv"), traj)
    plotting.plot_orbit(out("orbit.png"), traj.t, traj.observables)


def _tw_guess(cfg):
    tw = cfg.tw
    model = _model(cfg)
    if tw.get("seed", "ssm") == "state":
        grid, state = io.load_state(tw["state"])
        if (grid.k, grid.n1, grid.n2, grid.nfields) != (model.grid.k, model.grid.n1, model.grid.n2, model.grid.nfields):
            raise SerializationError("seed state grid does not match the configured grid")
        return model, state.to_full(model.grid)
    red = pipeline.reduce_laminar(model, **_ssm_kw(cfg))
    if not red.radii:
        raise SolverError("reduced dynamics have no invariant circle to seed a travelling wave")
    return model, pipeline.lift_circle(red, red.radii[0].radius)


def task_tw(cfg, out):
    model, guess = _tw_guess(cfg)
    param = cfg.continuation.get("param", "re")
    pr, res, state = pipeline.solve_travelling_wave(
        model, guess, param, tol=cfg.tw.get("tol", 1e-10), max_iter=cfg.tw.get("max_iter", 25)
    )
    _write_state(out, model, state, extra={"newton_iterations": res.iterations, "residual": res.residual})
    return model, pr, res


def task_continue(cfg, out):
    from . import plotting

    model, pr, res = task_tw(cfg, out)
    c = cfg.continuation
    param = c.get("param", "re")
    p0 = getattr(model.params, param)
    br = pipeline.trace(
        pr,
        res.x,
        p0,
        tuple(c["range"]),
        c["step"],
        direction=c.get("direction", 1.0),
        weight=c.get("weight", 1e-6),
        max_points=c.get("max_points", 500),
        step_max=c.get("step_max"),
        tol=c.get("tol", 1e-10),
        max_iter=c.get("max_iter", 10),
    )
    io.write_branch_csv(out("branch.csv"), br, param)
    io.write_json(out("branch.json"), io.branch_to_dict(br, param))
    if br.points and br.points[0].observables:
        plotting.plot_branch(
            out("branch.png"), br.params, [p.observables["e"] for p in br.points], [f.param for f in br.folds], param
        )


TASKS = {
    "laminar": task_laminar,
    "spectrum": task_spectrum,
    "tw": task_tw,
    "continue": task_continue,
    "ssm": task_ssm,
    "reduce": task_reduce,
    "lift": task_lift,
}


def _versions():
    import scipy

    return {
        "ssmflow": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
    }


def run(cfg, output_dir=None, threads=None):
    """Execute ``cfg.task``; returns the exit status.

    A manifest (inputs, versions, wall time, outputs and their hashes) is
    written even when the task fails.
    """
    from threadpoolctl import threadpool_limits

    out_path = output_dir or cfg.output_dir or "ssmflow-out"
    with OutputDir(out_path) as out:
        t0 = time.perf_counter()
        status, error = 0, None
        try:
            if threads:
                with threadpool_limits(limits=threads):
                    TASKS[cfg.task](cfg, out)
            else:
                TASKS[cfg.task](cfg, out)
        except SsmFlowError as exc:
            status = EXIT_CODES.get(exc.category, 1)
            error = {"category": exc.category, "type": type(exc).__name__, "message": str(exc)}
            log.error("%s error: %s", exc.category, exc)
        except Exception as exc:  # anything else is an internal bug
            status = EXIT_CODES["internal"]
            error = {"category": "internal", "type": type(exc).__name__, "message": str(exc)}
            log.exception("internal error")
        outputs = [p for p in out.files if os.path.exists(p)]
        manifest = {
            "format": "ssmflow.manifest",
            "version": io.FORMAT_VERSION,
            "task": cfg.task,
            "config": cfg.to_dict(),
            "config_source": cfg.source,
            "versions": _versions(),
            "threads": threads,
            "wall_time": time.perf_counter() - t0,
            "status": "ok" if status == 0 else "error",
            "exit_code": status,
            "error": error,
            "outputs": [{"name": os.path.basename(p), "sha256": io.file_digest(p)} for p in outputs],
            "payload_sha256": io.payload_digest([p for p in outputs if not p.endswith(".png")]),
        }
        io.write_json(os.path.join(out.path, "manifest.json"), manifest)
    return status


def main(argv=None):
    ap = argparse.ArgumentParser(prog="ssmflow", description="Spectral submanifold reduction of channel flows.")
    ap.add_argument("config", help="JSON run configuration")
    ap.add_argument("--output-dir", "-o", help="output directory (overrides output_dir in the config)")
    ap.add_argument("--threads", type=int, help="BLAS/LAPACK thread count")
    ap.add_argument("--log-level", default="INFO", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    args = ap.parse_args(argv)
    logging.basicConfig(level=args.log_level, format="%(asctime)s %(name)s %(levelname)s %(message)s")
    if args.threads is not None and args.threads < 1:
        ap.error("--threads must be >= 1")
    try:
        cfg = load_config(args.config)
    except SsmFlowError as exc:
        print(f"ssmflow: {exc}", file=sys.stderr)
        return EXIT_CODES[exc.category]
    try:
        return run(cfg, args.output_dir, args.threads)
    except SerializationError as exc:
        print(f"ssmflow: {exc}", file=sys.stderr)
        return EXIT_CODES["io"]


if __name__ == "__main__":
    sys.exit(main())
