"""Constant-strain triangle kinematics, master-slave constraints and sparse assembly.

Degrees of freedom are numbered ``2 * node + component``. Constraints are
eliminated through ``u = T @ u_r + g`` where every row of ``T`` holds at most
one unit entry, so the reduced matrix ``T.T @ K @ T`` can be accumulated
directly from element matrices with a precomputed scatter map.
"""
from __future__ import annotations

import hashlib

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import MeshError, ParameterError, SingularityError

THICKNESS = 1.0  # mm, plane problems are solved per unit thickness


def cst_gradients(nodes, triangles):
    """Shape-function gradients (n, 3, 2) and areas (n,) of linear triangles."""
    p = nodes[triangles]
    x, y = p[..., 0], p[..., 1]
    b = np.stack([y[:, 1] - y[:, 2], y[:, 2] - y[:, 0], y[:, 0] - y[:, 1]], axis=1)
    c = np.stack([x[:, 2] - x[:, 1], x[:, 0] - x[:, 2], x[:, 1] - x[:, 0]], axis=1)
    two_a = x[:, 0] * b[:, 0] + x[:, 1] * b[:, 1] + x[:, 2] * b[:, 2]
    if np.any(two_a <= 0):
        bad = int(np.flatnonzero(two_a <= 0)[0])
        raise MeshError(f"element {bad} is degenerate or clockwise")
    grads = np.stack([b, c], axis=-1) / two_a[:, None, None]
    return grads, 0.5 * two_a


def cst_b_matrices(grads):
    """Voigt strain-displacement matrices (n, 3, 6): [exx, eyy, gxy]."""
    n = len(grads)
    B = np.zeros((n, 3, 6))
    B[:, 0, 0::2] = grads[..., 0]
    B[:, 1, 1::2] = grads[..., 1]
    B[:, 2, 0::2] = grads[..., 1]
    B[:, 2, 1::2] = grads[..., 0]
    return B


class Constraints:
    """Prescribed and tied degrees of freedom.

    ``slave = master + offset`` ties are resolved transitively; a slave whose
    master is prescribed becomes prescribed itself.
    """

    def __init__(self, n_dofs, fixed_dofs=(), fixed_values=(), slave_dofs=(), master_dofs=(),
                 offsets=()):
        self.n_dofs = int(n_dofs)
        fixed_dofs = np.asarray(fixed_dofs, dtype=np.int64).ravel()
        fixed_values = np.broadcast_to(np.asarray(fixed_values, dtype=float),
                                       fixed_dofs.shape).astype(float)
        slave_dofs = np.asarray(slave_dofs, dtype=np.int64).ravel()
        master_dofs = np.asarray(master_dofs, dtype=np.int64).ravel()
        offsets = np.broadcast_to(np.asarray(offsets, dtype=float), slave_dofs.shape).astype(float)
        if len(slave_dofs) != len(master_dofs):
            raise ParameterError("slave and master lists differ in length")

        g = np.zeros(self.n_dofs)
        fixed = np.zeros(self.n_dofs, dtype=bool)
        fixed[fixed_dofs] = True
        g[fixed_dofs] = fixed_values

        master = np.arange(self.n_dofs)
        master[slave_dofs] = master_dofs
        offset = np.zeros(self.n_dofs)
        offset[slave_dofs] = offsets
        if np.any(fixed[slave_dofs]):
            raise ParameterError("a dof cannot be both prescribed and tied")
        # follow chains slave -> master -> ... until a root
        root = master.copy()
        shift = offset.copy()
        for _ in range(self.n_dofs):
            nxt = root[root]
            if np.array_equal(nxt, root):
                break
            # roots carry zero shift, so pointer jumping can add unconditionally
            shift = shift + shift[root]
            root = nxt
        else:
            raise ParameterError("cyclic master-slave ties")
        if np.any(master[root] != root):
            # an even cycle collapses onto itself under pointer jumping
            raise ParameterError("cyclic master-slave ties")

        is_slave = root != np.arange(self.n_dofs)
        slave_of_fixed = is_slave & fixed[root]
        g[slave_of_fixed] = g[root[slave_of_fixed]] + shift[slave_of_fixed]
        fixed = fixed | slave_of_fixed
        is_slave &= ~fixed

        free = ~fixed & ~is_slave
        dof_map = np.full(self.n_dofs, -1, dtype=np.int64)
        dof_map[free] = np.arange(int(free.sum()))
        dof_map[is_slave] = dof_map[root[is_slave]]
        g[is_slave] = shift[is_slave]

        self.dof_map = dof_map
        self.g = g
        self.fixed = fixed
        self.is_slave = is_slave
        self.n_free = int(free.sum())
        digest = hashlib.sha1()
        digest.update(dof_map.tobytes())
        self.topology_key = digest.hexdigest()

    def expand(self, u_r):
        u = self.g.copy()
        mask = self.dof_map >= 0
        u[mask] += u_r[self.dof_map[mask]]
        return u

    def reduce(self, f_full):
        """T.T @ f for a full-length vector."""
        mask = self.dof_map >= 0
        return np.bincount(self.dof_map[mask], weights=f_full[mask], minlength=self.n_free)

    def transform(self):
        rows = np.flatnonzero(self.dof_map >= 0)
        return sp.csr_matrix((np.ones(len(rows)), (rows, self.dof_map[rows])),
                             shape=(self.n_dofs, self.n_free))


class Assembler:
    """Vectorized CST assembly on a fixed mesh."""

    def __init__(self, nodes, triangles, thickness=THICKNESS):
        self.nodes = np.asarray(nodes, dtype=float)
        self.triangles = np.asarray(triangles, dtype=np.int64)
        self.grads, self.areas = cst_gradients(self.nodes, self.triangles)
        self.B = cst_b_matrices(self.grads)
        self.thickness = thickness
        self.n_dofs = 2 * len(self.nodes)
        self.edofs = np.stack([2 * self.triangles, 2 * self.triangles + 1], axis=-1).reshape(-1, 6)
        self._patterns = {}

    @classmethod
    def from_mesh(cls, mesh):
        return cls(mesh.nodes, mesh.triangles)

    def element_matrices(self, C):
        """A t B^T C B for every element; C is (n, 3, 3) or (3, 3)."""
        C = np.broadcast_to(C, (len(self.B), 3, 3))
        w = (self.areas * self.thickness)[:, None, None]
        return w * np.einsum("eki,ekl,elj->eij", self.B, C, self.B, optimize=True)

    def element_forces(self, stress):
        """A t B^T sigma for Voigt stresses (n, 3)."""
        w = (self.areas * self.thickness)[:, None]
        return w * np.einsum("eki,ek->ei", self.B, stress)

    def strains(self, u):
        return np.einsum("eij,ej->ei", self.B, u[self.edofs])

    def scatter(self, fe):
        return np.bincount(self.edofs.ravel(), weights=fe.ravel(), minlength=self.n_dofs)

    def full_matrix(self, Ke):
        rows = np.repeat(self.edofs, 6, axis=1).ravel()
        cols = np.tile(self.edofs, (1, 6)).ravel()
        K = sp.coo_matrix((Ke.ravel(), (rows, cols)), shape=(self.n_dofs, self.n_dofs))
        return K.tocsr()

    def _pattern(self, cons):
        pat = self._patterns.get(cons.topology_key)
        if pat is not None:
            return pat
        r = cons.dof_map[self.edofs]
        rows = np.repeat(r, 6, axis=1).ravel()
        cols = np.tile(r, (1, 6)).ravel()
        valid = (rows >= 0) & (cols >= 0)
        nr = cons.n_free
        keys = rows[valid] * nr + cols[valid]
        uniq, inverse = np.unique(keys, return_inverse=True)
        major = uniq // nr
        minor = uniq % nr
        indptr = np.zeros(nr + 1, dtype=np.int64)
        np.cumsum(np.bincount(major, minlength=nr), out=indptr[1:])
        pat = (valid, inverse, minor, indptr, len(uniq))
        self._patterns[cons.topology_key] = pat
        return pat

    def reduced_matrix(self, Ke, cons):
        """T.T K T in CSC form, accumulated straight from element matrices."""
        valid, inverse, minor, indptr, nnz = self._pattern(cons)
        data = np.bincount(inverse, weights=Ke.reshape(-1)[valid], minlength=nnz)
        # symmetric: row-major keys read as column-major give the same matrix
        return sp.csc_matrix((data, minor.copy(), indptr.copy()), shape=(cons.n_free, cons.n_free))

    def lifted_forces(self, Ke, cons):
        """Element contributions K g of the prescribed/offset part of u."""
        ge = cons.g[self.edofs]
        return self.scatter(np.einsum("eij,ej->ei", Ke, ge))


class Factorization:
    """Sparse direct solve with a residual check."""

    def __init__(self, K):
        self.K = K
        try:
            self.lu = spla.splu(K, permc_spec="MMD_AT_PLUS_A",
                                options={"SymmetricMode": True})
        except RuntimeError as err:
            raise SingularityError(f"factorization failed: {err}") from err

    def solve(self, f, rtol=1e-10):
        u = self.lu.solve(f)
        if not np.all(np.isfinite(u)):
            raise SingularityError("non-finite solution")
        fn = np.linalg.norm(f)
        if fn == 0:
            return u
        r = f - self.K @ u
        if np.linalg.norm(r) > rtol * fn:
            u = u + self.lu.solve(r)
            r = f - self.K @ u
            if np.linalg.norm(r) > rtol * fn:
                raise SingularityError(
                    f"residual {np.linalg.norm(r) / fn:.2e} above tolerance {rtol:.0e}")
        return u
