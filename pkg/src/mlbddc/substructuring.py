"""Iterative substructuring: interface numbering, the matrix-free Schur
operator, condensed right-hand sides, and interior recovery.

The reduced interface problem S u = g is never assembled; applying S runs
one interior Dirichlet solve per subdomain. All reductions accumulate in
subdomain order so results do not depend on the worker count.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .sparse import Factorization, SparseMatrix, factorize


def map_ordered(fn, n: int, workers: int = 1) -> list:
    """Apply fn to range(n), returning results in index order."""
    if workers <= 1 or n <= 1:
        return [fn(i) for i in range(n)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, range(n)))


@dataclass
class InterfaceMap:
    """Global interface numbering: dofs holds level-dof ids ordered by
    (node, component); sub_local/sub_global give each subdomain's interface
    positions within its local vector and within the global interface
    vector."""

    dofs: np.ndarray
    dofs_per_node: int
    sub_local: list
    sub_global: list

    @property
    def n(self) -> int:
        return self.dofs.shape[0]


@dataclass
class SubdomainSplit:
    """One subdomain's interior/interface splitting of K_i."""

    index: int
    local_dofs: np.ndarray          # global level-dof ids, ascending
    interior_pos: np.ndarray        # positions within local_dofs
    interface_pos: np.ndarray
    k_local: SparseMatrix
    k_bb: SparseMatrix              # interface x interface
    k_ib: SparseMatrix              # interior x interface
    k_ii_fact: Factorization

    @property
    def n_local(self) -> int:
        return self.local_dofs.shape[0]


def build_splits(k_list, ltg_list, iface_dofs, dofs_per_node: int,
                 workers: int = 1, dense_threshold: int | None = None):
    """Split each subdomain matrix by the interface dof set and factorize
    the interior blocks. Returns (splits, InterfaceMap)."""
    iface_dofs = np.asarray(iface_dofs, dtype=np.int64)
    if np.any(np.diff(iface_dofs) <= 0):
        raise ValueError("interface dofs must be sorted and unique")
    n_subs = len(k_list)
    if len(ltg_list) != n_subs:
        raise ValueError("subdomain matrix and dof lists disagree")

    def build_one(i):
        ltg = np.asarray(ltg_list[i], dtype=np.int64)
        k = k_list[i]
        if k.n_rows != ltg.shape[0]:
            raise ValueError(f"subdomain {i}: matrix order != local dof count")
        on_iface = np.isin(ltg, iface_dofs, assume_unique=True)
        interior = np.nonzero(~on_iface)[0]
        interface = np.nonzero(on_iface)[0]
        k_ii = k.extract(interior, interior)
        k_ib = k.extract(interior, interface)
        k_bb = k.extract(interface, interface)
        fact = factorize(k_ii, "spd", dense_threshold=dense_threshold)
        gpos = np.searchsorted(iface_dofs, ltg[interface])
        return SubdomainSplit(index=i, local_dofs=ltg, interior_pos=interior,
                              interface_pos=interface, k_local=k, k_bb=k_bb,
                              k_ib=k_ib, k_ii_fact=fact), gpos

    built = map_ordered(build_one, n_subs, workers)
    splits = [b[0] for b in built]
    imap = InterfaceMap(dofs=iface_dofs, dofs_per_node=dofs_per_node,
                        sub_local=[s.interface_pos for s in splits],
                        sub_global=[b[1] for b in built])
    # interiors must partition the non-interface dofs
    seen = np.concatenate([s.local_dofs[s.interior_pos] for s in splits]) \
        if splits else np.zeros(0, dtype=np.int64)
    if np.unique(seen).shape[0] != seen.shape[0]:
        raise ValueError("an interior dof belongs to more than one subdomain")
    return splits, imap


def schur_apply(splits, imap: InterfaceMap, x: np.ndarray,
                workers: int = 1) -> np.ndarray:
    """y = S x with S = sum_i R_i^T (K_bb,i - K_ib,i^T K_ii,i^-1 K_ib,i) R_i."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (imap.n,):
        raise ValueError(f"interface vector has length {x.shape}, expected {imap.n}")

    def local(i):
        s = splits[i]
        xb = x[imap.sub_global[i]]
        t = s.k_ib.matvec(xb)
        return s.k_bb.matvec(xb) - s.k_ib.rmatvec(s.k_ii_fact.solve(t))

    parts = map_ordered(local, len(splits), workers)
    y = np.zeros(imap.n)
    for i, yb in enumerate(parts):
        y[imap.sub_global[i]] += yb
    return y


def condensed_rhs(splits, imap: InterfaceMap, f: np.ndarray,
                  workers: int = 1) -> np.ndarray:
    """Interface right-hand side g = f_G - sum_i R_i^T K_ib,i^T K_ii,i^-1 f_int,i."""
    f = np.asarray(f, dtype=np.float64)
    g = f[imap.dofs].copy()

    def local(i):
        s = splits[i]
        fint = f[s.local_dofs[s.interior_pos]]
        return s.k_ib.rmatvec(s.k_ii_fact.solve(fint))

    parts = map_ordered(local, len(splits), workers)
    for i, gb in enumerate(parts):
        g[imap.sub_global[i]] -= gb
    return g


def recover_interior(splits, imap: InterfaceMap, u_hat: np.ndarray,
                     f: np.ndarray, n_dofs: int, workers: int = 1) -> np.ndarray:
    """Complete the interface solution to all level dofs by interior solves.

    With an empty interface this is a direct solve of the whole problem.
    """
    u_hat = np.asarray(u_hat, dtype=np.float64)
    if u_hat.shape != (imap.n,):
        raise ValueError(f"interface vector has length {u_hat.shape}, expected {imap.n}")
    x = np.zeros(n_dofs)
    x[imap.dofs] = u_hat

    def local(i):
        s = splits[i]
        fint = f[s.local_dofs[s.interior_pos]]
        ub = u_hat[imap.sub_global[i]]
        return s.k_ii_fact.solve(fint - s.k_ib.matvec(ub))

    parts = map_ordered(local, len(splits), workers)
    for i, xi in enumerate(parts):
        s = splits[i]
        x[s.local_dofs[s.interior_pos]] = xi
    return x
