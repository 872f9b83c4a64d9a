"""Quasi-static meso-scale solver with eigenstrain loading and saw-tooth damage."""
from __future__ import annotations

import hashlib
import logging
from collections import OrderedDict
from dataclasses import dataclass

import numpy as np

from .errors import NonConvergenceError, PairingError, ParameterError, SingularityError
from .fem import Assembler, Constraints, Factorization
from .geometry import Phase
from .materials import FAILURE_TOL, crack_normal_stress, principal_stress

log = logging.getLogger(__name__)

_CACHE_SIZE = 4


@dataclass
class BoundaryConditions:
    """Constraint set plus external nodal forces (full length, may be None)."""

    constraints: Constraints
    forces: np.ndarray | None = None


@dataclass
class LinearSystem:
    matrix: object
    rhs: np.ndarray
    constraints: Constraints | None = None


@dataclass
class MesoSolution:
    u: np.ndarray
    stress: np.ndarray
    strain: np.ndarray
    passes: int = 0
    closure_iterations: int = 0


def periodic_pairs(mesh):
    """Matched (left, right) and (bottom, top) node pairs without corners."""
    tol = 1e-9 * max(mesh.width, mesh.height)
    out = []
    for a, b, axis in (("left", "right", 1), ("bottom", "top", 0)):
        na = mesh.boundary_nodes(a)[1:-1]
        nb = mesh.boundary_nodes(b)[1:-1]
        if len(na) != len(nb) or np.any(np.abs(mesh.nodes[na, axis] - mesh.nodes[nb, axis]) > tol):
            raise PairingError(f"nodes on {a} and {b} edges do not match")
        out.append(np.column_stack([na, nb]))
    return out[0], out[1]


def periodic_bc(mesh, F_M, pairs=None, corners=None):
    """Corner displacements (F - 1) x and periodic ties between opposite edges."""
    H = np.asarray(F_M, dtype=float) - np.eye(2)
    if pairs is None:
        pairs = periodic_pairs(mesh)
    if corners is None:
        corners = mesh.corner_nodes()
    lr, bt = pairs
    x = mesh.nodes[corners]
    u_corner = x @ H.T
    fixed = np.stack([2 * corners, 2 * corners + 1], axis=1).ravel()
    values = u_corner.ravel()
    # corner order: 1 bottom-left, 2 top-left, 3 top-right, 4 bottom-right
    jump_x = u_corner[3] - u_corner[0]
    jump_y = u_corner[1] - u_corner[0]
    slaves, masters, offsets = [], [], []
    for pair, jump in ((lr, jump_x), (bt, jump_y)):
        for comp in (0, 1):
            slaves.append(2 * pair[:, 1] + comp)
            masters.append(2 * pair[:, 0] + comp)
            offsets.append(np.full(len(pair), jump[comp]))
    cons = Constraints(2 * mesh.n_nodes, fixed, values, np.concatenate(slaves),
                       np.concatenate(masters), np.concatenate(offsets))
    return BoundaryConditions(cons)


def specimen_bc(mesh, top_pressure=0.0):
    """Bottom edge on vertical rollers, bottom-left node pinned, optional top pressure (Pa)."""
    bottom = mesh.boundary_nodes("bottom")
    fixed = np.concatenate([2 * bottom + 1, [2 * bottom[0]]])
    cons = Constraints(2 * mesh.n_nodes, fixed, 0.0)
    forces = None
    if top_pressure:
        forces = edge_traction_forces(mesh, "top", np.array([0.0, -top_pressure]))
    return BoundaryConditions(cons, forces)


def edge_traction_forces(mesh, side, traction):
    """Consistent nodal forces of a uniform traction (Pa) on one side."""
    f = np.zeros(2 * mesh.n_nodes)
    for n0, n1 in mesh.boundary_edges(side):
        length = np.linalg.norm(mesh.nodes[n1] - mesh.nodes[n0])
        half = 0.5 * length * np.asarray(traction, dtype=float)
        f[2 * n0:2 * n0 + 2] += half
        f[2 * n1:2 * n1 + 2] += half
    return f


class RveProblem:
    """One meso-scale problem: mesh, phases, element states and eigenstrain.

    The same object serves periodic RVEs (FE2) and supported specimens; the
    boundary conditions are passed to every solve. The factorization of the
    reduced stiffness is cached and reused while neither the damage state nor
    the closure flags change.
    """

    def __init__(self, mesh, phases, states, plane="stress", sla_max_passes=20000,
                 closure_max_iter=5, criterion_tol=FAILURE_TOL, sla_mode="modified",
                 damage=True):
        if sla_mode not in ("modified", "classical"):
            raise ParameterError(f"unknown SLA mode {sla_mode!r}")
        self.mesh = mesh
        self.phases = np.asarray(phases)
        self.states = states
        self.plane = plane
        self.sla_max_passes = sla_max_passes
        self.closure_max_iter = closure_max_iter
        self.criterion_tol = criterion_tol
        self.sla_mode = sla_mode
        self.damage = damage
        self.assembler = Assembler.from_mesh(mesh)
        self.eigenstrain_level = np.zeros((2, 2))
        self.eigen_elements = self.phases == Phase.ASR_SITE
        self.temperature = None
        self._pairs = None
        self._corners = None
        self._version = 0
        self._stiffness = {}
        self._factors = OrderedDict()

    # -- state bookkeeping ----------------------------------------------

    def touch(self):
        """Invalidate cached stiffness after the damage state was modified."""
        self._version += 1
        self._stiffness.clear()
        self._factors.clear()

    def __getstate__(self):
        state = self.__dict__.copy()
        state["_stiffness"] = {}
        state["_factors"] = OrderedDict()
        return state

    @property
    def area(self):
        return float(self.assembler.areas.sum())

    def periodic(self, F_M):
        if self._pairs is None:
            self._pairs = periodic_pairs(self.mesh)
            self._corners = self.mesh.corner_nodes()
        return periodic_bc(self.mesh, F_M, self._pairs, self._corners)

    def set_eigenstrain(self, eps):
        self.eigenstrain_level = np.array(eps, dtype=float)

    def element_eigenstrain(self):
        e = self.eigenstrain_level
        voigt = np.array([e[0, 0], e[1, 1], 2.0 * e[0, 1]])
        out = np.zeros((self.mesh.n_elements, 3))
        out[self.eigen_elements] = voigt
        return out

    def _state_key(self):
        return (self._version, hashlib.sha1(np.packbits(self.states.closed).tobytes()).hexdigest())

    def _matrices(self):
        key = self._state_key()
        hit = self._stiffness.get(key)
        if hit is None:
            C = self.states.stiffness(self.plane)
            hit = (C, self.assembler.element_matrices(C))
            if len(self._stiffness) >= _CACHE_SIZE:
                self._stiffness.pop(next(iter(self._stiffness)))
            self._stiffness[key] = hit
        return key, hit

    def material_matrices(self):
        return self._matrices()[1][0]

    # -- linear algebra -------------------------------------------------

    def _system(self, bc, include_eigen):
        asm = self.assembler
        _, (C, Ke) = self._matrices()
        K = asm.reduced_matrix(Ke, bc.constraints)
        return K, self._rhs(bc, C, Ke, include_eigen)

    def _rhs(self, bc, C, Ke, include_eigen):
        asm = self.assembler
        f = -asm.lifted_forces(Ke, bc.constraints)
        if bc.forces is not None:
            f = f + bc.forces
        if include_eigen and np.any(self.eigenstrain_level):
            sig_eig = np.einsum("eij,ej->ei", C, self.element_eigenstrain())
            f = f + asm.scatter(asm.element_forces(sig_eig))
        return bc.constraints.reduce(f)

    def solve(self, bc, include_eigen=True):
        """Linear solve with the current stiffness; returns a MesoSolution."""
        skey, (C, Ke) = self._matrices()
        key = skey + (bc.constraints.topology_key,)
        factor = self._factors.get(key)
        if factor is None:
            K = self.assembler.reduced_matrix(Ke, bc.constraints)
            try:
                factor = Factorization(K)
            except SingularityError as err:
                err.element = self.most_damaged()
                raise
            if len(self._factors) >= _CACHE_SIZE:
                self._factors.popitem(last=False)
            self._factors[key] = factor
        else:
            self._factors.move_to_end(key)
        f = self._rhs(bc, C, Ke, include_eigen)
        u = bc.constraints.expand(factor.solve(f))
        return self._solution(u, C, include_eigen)

    def _solution(self, u, C, include_eigen):
        strain = self.assembler.strains(u)
        elastic = strain - self.element_eigenstrain() if include_eigen else strain
        stress = np.einsum("eij,ej->ei", C, elastic)
        return MesoSolution(u=u, stress=stress, strain=strain)

    def most_damaged(self):
        return int(np.argmax(self.states.d))

    def internal_forces(self, sol):
        """Assembled nodal internal forces A t B^T sigma (full length)."""
        return self.assembler.scatter(self.assembler.element_forces(sol.stress))


def assemble(rve, include_eigen=True):
    """Unconstrained stiffness and eigenstress load of the current state."""
    C = rve.material_matrices()
    asm = rve.assembler
    Ke = asm.element_matrices(C)
    f = np.zeros(asm.n_dofs)
    if include_eigen and np.any(rve.eigenstrain_level):
        sig_eig = np.einsum("eij,ej->ei", C, rve.element_eigenstrain())
        f = asm.scatter(asm.element_forces(sig_eig))
    return LinearSystem(asm.full_matrix(Ke), f)


def apply_periodic(rve, F_M, include_eigen=True):
    """Reduced system with periodic constraints for the macro gradient F_M."""
    bc = rve.periodic(F_M)
    K, f = rve._system(bc, include_eigen)
    return LinearSystem(K, f, bc.constraints)


def solve_linear(system):
    """Nodal displacements (full length when the system carries constraints)."""
    u = Factorization(system.matrix.tocsc()).solve(system.rhs)
    if system.constraints is not None:
        return system.constraints.expand(u)
    return u


def closure_fixed_point(rve, bc, include_eigen=True, max_iter=None):
    """Solve and iterate crack closure flags until they stop changing.

    Returns the solution consistent with the final flags and the number of
    flag updates. When the cap is hit the last flags actually solved with are
    kept.
    """
    max_iter = rve.closure_max_iter if max_iter is None else max_iter
    states = rve.states
    sol = rve.solve(bc, include_eigen)
    if not states.cracked.any():
        return sol, 0
    updates = 0
    while True:
        sn = crack_normal_stress(sol.stress, states.alpha)
        new = states.cracked & (sn < 0.0)
        if np.array_equal(new, states.closed):
            return sol, updates
        if updates >= max_iter:
            log.debug("closure iteration cap reached, %d flags oscillating",
                      int(np.sum(new != states.closed)))
            return sol, updates
        states.closed = new
        updates += 1
        sol = rve.solve(bc, include_eigen)


def violating_elements(rve, stress):
    """Elements whose principal stress exceeds their current strength."""
    st = rve.states
    s1, angle = principal_stress(stress)
    active = st.can_damage & ~st.at_cap
    viol = active & (s1 > st.ft_current * (1.0 + rve.criterion_tol))
    return np.flatnonzero(viol), s1, angle


def sla_damage_loop(rve, bc):
    """Modified sequential linear analysis at fixed load.

    Every pass reduces all violating elements by one saw-tooth step (or only
    the most critical one in classical mode) and re-solves, until no element
    violates the criterion. Elements already at maximum damage are left alone.
    """
    sol, closure_its = closure_fixed_point(rve, bc)
    passes = 0
    if not rve.damage:
        sol.closure_iterations = closure_its
        return sol
    st = rve.states
    while True:
        idx, s1, angle = violating_elements(rve, sol.stress)
        if not len(idx):
            break
        if rve.sla_mode == "classical":
            ratio = s1[idx] / st.ft_current[idx]
            idx = idx[[int(np.argmax(ratio))]]
        st.initiate(idx, angle[idx])
        st.reduce(idx)
        rve.touch()
        passes += 1
        if passes >= rve.sla_max_passes:
            raise NonConvergenceError(
                f"SLA did not converge in {passes} passes",
                {"passes": passes, "violating": len(idx), "n_cracked": int(st.cracked.sum()),
                 "max_damage_element": rve.most_damaged()})
        sol, its = closure_fixed_point(rve, bc)
        closure_its += its
    sol.passes = passes
    sol.closure_iterations = closure_its
    return sol
