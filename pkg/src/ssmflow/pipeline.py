"""Task building blocks shared by the command-line driver and the tests.

A typical reduction runs ``laminar -> operator pair -> spectrum -> split ->
expansion -> polar form``; travelling waves are seeded by lifting an
invariant circle of the reduced dynamics.
"""

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.optimize import brentq

from .continuation import SteadyProblem, continue_branch, newton_solve
from .eigen import solve_generalized_eig, split_spectrum
from .errors import SolverError
from .models import ChannelModel, ModelParams, StateVector, laminar_state
from .reduced import ReducedVectorField, cycle_frequency, invariant_radii, to_polar
from .spectral import ModeGrid
from .ssm import SsmConfig, compute_expansion, evaluate_K, paired_theta

log = logging.getLogger(__name__)


@dataclass
class Reduction:
    model: ChannelModel
    base: StateVector
    ops: object
    eigs: list
    split: object
    table: object
    polar: Optional[object] = None
    radii: Optional[list] = None


def build_model(kind, k, n1, n2, **params):
    grid = ModeGrid(float(k), int(n1), int(n2), 3 if kind == "newtonian" else 6)
    return ChannelModel(grid, ModelParams(**params), kind)


def laminar_operator(model):
    base = laminar_state(model.grid, model.params)
    return base, model.operator_pair(base.to_full(model.grid))


def leading_growth(model, mode=1):
    """Largest real part in the Fourier block of ``mode`` about the laminar flow."""
    base, ops = laminar_operator(model)
    ops.blocks = [ops.blocks[model.grid.n1 + mode]]
    return max(p.value.real for p in solve_generalized_eig(ops, vectors=False))


def critical_parameter(model, lo, hi, param="re", mode=1, xtol=1e-3):
    """Parameter where the leading growth rate of one Fourier block crosses zero."""
    f = lambda p: leading_growth(model.with_params(**{param: p}), mode)
    return brentq(f, lo, hi, xtol=xtol)


def reduce_laminar(model, beta_split, order=3, style="mixed", **ssm_kw):
    """Laminar SSM reduction with its polar form (when two-dimensional)."""
    base, ops = laminar_operator(model)
    eigs = solve_generalized_eig(ops)
    split = split_spectrum(eigs, ops, beta_split)
    cfg = SsmConfig(order=order, style=style, **ssm_kw)
    table = compute_expansion(split, ops, model.bilinear, cfg)
    red = Reduction(model, base, ops, eigs, split, table)
    if table.r == 2 and table.partner and table.partner[0] == 1:
        red.polar = to_polar(ReducedVectorField.from_table(table))
        red.radii = invariant_radii(red.polar)
    return red


def lift_circle(red, radius, phase_aligned=True):
    """Full-state guess for the travelling wave on an invariant circle.

    The phase of ``theta = (rho e^{i phi}, rho e^{-i phi})`` is chosen so
    that the lifted state satisfies the phase row; the wave speed is the
    cycle frequency divided by the wavenumber.
    """
    g = red.model.grid
    conj = red.ops.conjugate
    row = red.model.phase_row()
    lift = lambda ph: evaluate_K(red.table, paired_theta(red.table, radius, ph), conjugate=conj)
    phi = 0.0
    if phase_aligned:
        P = lambda ph: float((row @ lift(ph)).real)
        grid_phi = np.linspace(0.0, np.pi, 17)
        vals = [P(p) for p in grid_phi]
        for a, b, fa, fb in zip(grid_phi[:-1], grid_phi[1:], vals[:-1], vals[1:]):
            if fa == 0.0:
                phi = a
                break
            if fa * fb < 0:
                phi = brentq(P, a, b, xtol=1e-14)
                break
        else:
            raise SolverError("lifted circle never satisfies the phase condition")
    guess = red.base.to_full(g) + lift(phi)
    guess[g.c_index] = cycle_frequency(red.polar, radius) / g.k
    return guess


def solve_travelling_wave(model, guess_full, param="re", tol=1e-10, max_iter=25):
    """Newton solve in realified coordinates; returns (problem, result, state)."""
    pr = SteadyProblem(model, param, phase=True)
    p = getattr(model.params, param)
    res = newton_solve(pr, pr.restrict(guess_full), tol=tol, max_iter=max_iter, param=p)
    return pr, res, pr.to_state(res.x)


def ssm_travelling_wave(red, radius=None, param="re", **kw):
    """Travelling wave seeded from the smallest invariant circle of ``red``."""
    if not red.radii:
        raise SolverError("reduced dynamics have no invariant circle to seed from")
    rad = red.radii[0].radius if radius is None else radius
    return solve_travelling_wave(red.model, lift_circle(red, rad), param, **kw)


def trace(problem, x, p, param_range, step, direction=1.0, weight=1e-6, **kw):
    """Pseudo-arclength branch with observables attached to each point.

    ``weight`` scales the parameter in the arclength metric; small values
    let the step follow the state when the branch turns sharply in the
    parameter (folds close to a bifurcation).
    """
    br = continue_branch(problem, (x, p), direction=direction, step0=step, param_range=param_range, wp=weight, **kw)
    attach_observables(problem, br)
    return br


def attach_observables(problem, branch):
    for pt in branch.points:
        model = problem.model_at(pt.param)
        base = laminar_state(model.grid, model.params)
        full = problem.embed(pt.x)
        pert = full - base.to_full(model.grid)
        obs = model.observables(pert, base)
        obs["c"] = float(full[model.grid.c_index].real)
        pt.observables = obs
    return branch
