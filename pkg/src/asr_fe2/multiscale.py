"""FE2 driver: one periodic RVE per macro element, residual-driven iteration, time march."""
from __future__ import annotations

import logging
import pickle
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import NonConvergenceError, ParameterError, SingularityError
from .fem import Assembler, Constraints, Factorization
from .homogenization import VIRTUAL_STRAIN, homogenize, tensor_to_voigt
from .materials import eigenstrain
from .meso_solver import edge_traction_forces, sla_damage_loop

log = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1


@dataclass
class StepRecord:
    t: float
    iterations: int
    residual: float
    mean_strain: np.ndarray  # Voigt, area average over the macro mesh
    passes: int


@dataclass
class MacroProblem:
    """Macro mesh, boundary data and the RVE bound to each macro element.

    ``fixed_dofs``/``fixed_values`` make up the Dirichlet boundary and
    ``tractions`` maps a side name to a traction vector (Pa) on the Neumann
    boundary. Every element has a single integration point.
    """

    mesh: object
    rves: list
    law: object
    temperature: float
    fixed_dofs: np.ndarray
    fixed_values: np.ndarray
    tractions: dict = field(default_factory=dict)
    tol: float = 1e-4
    max_iter: int = 50
    virtual_strain: float = VIRTUAL_STRAIN
    n_workers: int = 1
    relaxation: bool = True
    u: np.ndarray = None
    effective: list = None
    t: float = 0.0
    step_index: int = 0

    def __post_init__(self):
        if len(self.rves) != self.mesh.n_elements:
            raise ParameterError("need exactly one RVE per macro element")
        self.assembler = Assembler.from_mesh(self.mesh)
        n = self.assembler.n_dofs
        if self.u is None:
            self.u = np.zeros(n)
            self.u[self.fixed_dofs] = self.fixed_values
        self.increment_constraints = Constraints(n, self.fixed_dofs, 0.0)
        self.f_ext = np.zeros(n)
        for side, traction in self.tractions.items():
            self.f_ext += edge_traction_forces(self.mesh, side, traction)
        self.free = ~self.increment_constraints.fixed

    def __getstate__(self):
        state = self.__dict__.copy()
        state.pop("assembler", None)
        return state

    def __setstate__(self, state):
        self.__dict__.update(state)
        self.assembler = Assembler.from_mesh(self.mesh)


def macro_gradient(assembler, element, u):
    """Deformation gradient 1 + grad u of one CST macro element."""
    ue = u[assembler.edofs[element]].reshape(3, 2)
    return np.eye(2) + ue.T @ assembler.grads[element]


def _solve_rve(args):
    rve, F, delta = args
    sol = sla_damage_loop(rve, rve.periodic(F))
    eff = homogenize(rve, sol, delta)
    rve.last_solution = sol
    return rve, eff, sol.passes


def update_rves(problem, pool=None):
    """Broadcast macro gradients, run SLA in every RVE and homogenize."""
    asm = problem.assembler
    tasks = [(rve, macro_gradient(asm, e, problem.u), problem.virtual_strain)
             for e, rve in enumerate(problem.rves)]
    if pool is None:
        results = [_solve_rve(t) for t in tasks]
    else:
        results = list(pool.map(_solve_rve, tasks))
        problem.rves = [r[0] for r in results]
    problem.effective = [r[1] for r in results]
    return sum(r[2] for r in results)


def _stiffness_stack(problem):
    return np.stack([eff.stiffness for eff in problem.effective])


def _stress_stack(problem):
    return np.stack([tensor_to_voigt(eff.stress) for eff in problem.effective])


def internal_forces(problem):
    asm = problem.assembler
    return asm.scatter(asm.element_forces(_stress_stack(problem)))


def macro_strains(problem):
    return problem.assembler.strains(problem.u)


def eigen_reaction(problem):
    """Assembled part of the homogenized stress not explained by C_M eps_M."""
    asm = problem.assembler
    sig = _stress_stack(problem)
    eps = macro_strains(problem)
    sig_eig = sig - np.einsum("eij,ej->ei", _stiffness_stack(problem), eps)
    return asm.scatter(asm.element_forces(sig_eig))


def macro_residual(problem):
    r = problem.f_ext - internal_forces(problem)
    r[~problem.free] = 0.0
    return r


def macro_increment(problem):
    """Solve K_M du = f_ext - f_int on free DOFs; returns (du, residual norm)."""
    r = macro_residual(problem)
    asm = problem.assembler
    cons = problem.increment_constraints
    K = asm.reduced_matrix(asm.element_matrices(_stiffness_stack(problem)), cons)
    try:
        du = Factorization(K).solve(cons.reduce(r))
    except SingularityError as err:
        raise SingularityError(f"macro stiffness singular: {err}") from err
    return cons.expand(du), float(np.linalg.norm(r))


def macro_solve_iteration(problem, relaxation=1.0):
    """One macro update u += w du with K_M du = f_ext - f_int.

    Returns the residual norm before the update.
    """
    du, res = macro_increment(problem)
    problem.u = problem.u + relaxation * du
    return res


def aitken_factor(prev_du, du, prev_omega, bounds=(0.1, 20.0)):
    """Irons-Tuck update of the relaxation factor from two successive increments."""
    diff = du - prev_du
    denom = diff @ diff
    if denom == 0.0:
        return prev_omega
    omega = -prev_omega * (prev_du @ diff) / denom
    return float(np.clip(omega, *bounds))


def converge_step(problem, pool=None):
    """Iterate macro solves and RVE updates until the residual test passes.

    The secant C_M of the virtual tests is stiffer than the response of an
    expanding RVE with open cracks, so plain iteration contracts slowly;
    macro increments are therefore scaled by an Aitken relaxation factor.
    """
    passes = update_rves(problem, pool)
    ref = max(np.linalg.norm(problem.f_ext[problem.free]),
              np.linalg.norm(eigen_reaction(problem)[problem.free]))
    ref = ref if ref > 0 else 1.0
    it = 0
    omega, prev_du = 1.0, None
    while True:
        du, res = macro_increment(problem)
        log.debug("t=%g iteration %d: relative residual %.3e, relaxation %.3f", problem.t, it,
                  res / ref, omega)
        if res <= problem.tol * ref:
            return it, res / ref, passes
        if it >= problem.max_iter:
            raise NonConvergenceError(
                f"macro iteration did not converge at t = {problem.t} d",
                {"t": problem.t, "iterations": it, "relative_residual": res / ref})
        if prev_du is not None and problem.relaxation:
            omega = aitken_factor(prev_du, du, omega)
        problem.u = problem.u + omega * du
        prev_du = du
        new_passes = update_rves(problem, pool)
        if new_passes:
            # the RVE response jumped; earlier increments say nothing about the new one
            omega, prev_du = 1.0, None
        passes += new_passes
        it += 1


def set_time(problem, t):
    eps = eigenstrain(t, problem.temperature, problem.law)
    for rve in problem.rves:
        rve.temperature = problem.temperature
        rve.set_eigenstrain(eps)
    problem.t = t


def mean_macro_strain(problem):
    w = problem.assembler.areas
    return w @ macro_strains(problem) / w.sum()


def save_checkpoint(problem, path):
    with Path(path).open("wb") as fh:
        pickle.dump({"version": CHECKPOINT_VERSION, "problem": problem}, fh)


def load_checkpoint(path):
    with Path(path).open("rb") as fh:
        payload = pickle.load(fh)
    if payload.get("version") != CHECKPOINT_VERSION:
        raise ParameterError(f"unsupported checkpoint version {payload.get('version')}")
    return payload["problem"]


def fe2_time_march(problem, t_end, dt, on_step=None, checkpoint_dir=None):
    """March the coupled problem over t = dt, 2 dt, ..., t_end (days).

    A preliminary step at t = 0 equilibrates the external load before any ASR
    expansion. ``on_step(problem, record)`` is called after every converged
    step; a checkpoint is written per step when ``checkpoint_dir`` is given.
    A problem restored from a checkpoint resumes after its last completed step.
    """
    if t_end <= 0:
        return []
    if dt <= 0:
        raise ParameterError("time step must be positive")
    n_steps = int(round(t_end / dt))
    history = []
    pool = ProcessPoolExecutor(problem.n_workers) if problem.n_workers > 1 else None
    try:
        if problem.step_index == 0:
            set_time(problem, 0.0)
            converge_step(problem, pool)
            if on_step is not None:
                on_step(problem, None)
        for k in range(problem.step_index + 1, n_steps + 1):
            set_time(problem, k * dt)
            its, rel, passes = converge_step(problem, pool)
            problem.step_index = k
            rec = StepRecord(problem.t, its, rel, mean_macro_strain(problem), passes)
            history.append(rec)
            log.info("t=%.1f d: %d macro iterations, residual %.2e, %d SLA passes",
                     rec.t, its, rel, passes)
            if on_step is not None:
                on_step(problem, rec)
            if checkpoint_dir is not None:
                save_checkpoint(problem, Path(checkpoint_dir) / f"step_{k:05d}.pkl")
    finally:
        if pool is not None:
            pool.shutdown()
    return history
