"""Interface reduction: Schur products, condensed rhs, interior recovery.

The two-spring chain is worked out by hand: K = tridiag(-1, [2,?,2], -1)
split at the middle dof gives S = 1 and g = 2 for a unit load.
"""

import numpy as np
import pytest

from conftest import build_level1
from mlbddc.fem import ProblemSpec
from mlbddc.sparse import SparseMatrix
from mlbddc.substructuring import (
    build_splits,
    condensed_rhs,
    map_ordered,
    recover_interior,
    schur_apply,
)


def chain_splits():
    k1 = SparseMatrix.from_dense([[2.0, -1.0], [-1.0, 1.0]], symmetric=True)
    k2 = SparseMatrix.from_dense([[1.0, -1.0], [-1.0, 2.0]], symmetric=True)
    return build_splits([k1, k2], [np.array([0, 1]), np.array([1, 2])],
                        np.array([1]), dofs_per_node=1)


def test_chain_schur():
    splits, imap = chain_splits()
    assert imap.n == 1
    s = schur_apply(splits, imap, np.array([1.0]))
    assert s == pytest.approx([1.0], abs=1e-15)


def test_chain_condensed_rhs_and_recovery():
    splits, imap = chain_splits()
    f = np.ones(3)
    g = condensed_rhs(splits, imap, f)
    assert g == pytest.approx([2.0], abs=1e-15)
    u_hat = g / 1.0
    x = recover_interior(splits, imap, u_hat, f, n_dofs=3)
    k = np.array([[2.0, -1.0, 0.0], [-1.0, 2.0, -1.0], [0.0, -1.0, 2.0]])
    assert np.allclose(x, np.linalg.solve(k, f), atol=1e-14)
    assert x == pytest.approx([1.5, 2.0, 1.5], abs=1e-14)


def dense_schur_parts(lv):
    """Block elimination of the assembled operator: the reference S and g."""
    kd = lv.k_global.to_dense()
    iface = lv.imap.dofs
    interior = np.setdiff1d(np.arange(kd.shape[0]), iface)
    kbb = kd[np.ix_(iface, iface)]
    kii = kd[np.ix_(interior, interior)]
    kib = kd[np.ix_(interior, iface)]
    s_dense = kbb - kib.T @ np.linalg.solve(kii, kib)
    g_dense = lv.f_global[iface] - kib.T @ np.linalg.solve(kii, lv.f_global[interior])
    return s_dense, g_dense, interior


FIXTURES = [
    (ProblemSpec(kind="poisson", dim=2), 8, 4, (2, 2)),
    (ProblemSpec(kind="elasticity", dim=2), 6, 4, (2, 2)),
    (ProblemSpec(kind="poisson", dim=3), 4, 2, (1, 1, 2)),
]


@pytest.mark.parametrize("spec,n,subs,axes", FIXTURES)
def test_schur_matches_block_elimination(spec, n, subs, axes):
    lv = build_level1(spec, n, subs, axis_counts=axes, method="regular-blocks")
    s_dense, g_dense, _ = dense_schur_parts(lv)
    rng = np.random.default_rng(7)
    for _ in range(3):
        x = rng.standard_normal(lv.imap.n)
        y = schur_apply(lv.splits, lv.imap, x)
        assert np.max(np.abs(y - s_dense @ x)) < 1e-9
    g = condensed_rhs(lv.splits, lv.imap, lv.f_global)
    assert np.max(np.abs(g - g_dense)) < 1e-9


def test_recovery_matches_full_solve():
    lv = build_level1(ProblemSpec(kind="poisson", dim=2), 8, 4,
                      axis_counts=(2, 2), method="regular-blocks")
    s_dense, g_dense, _ = dense_schur_parts(lv)
    u_hat = np.linalg.solve(s_dense, g_dense)
    x = recover_interior(lv.splits, lv.imap, u_hat, lv.f_global,
                         n_dofs=lv.k_global.n_rows)
    x_ref = np.linalg.solve(lv.k_global.to_dense(), lv.f_global)
    assert np.max(np.abs(x - x_ref)) < 1e-10


def test_empty_interface_is_direct_solve():
    lv = build_level1(ProblemSpec(kind="poisson", dim=2), 4, 1)
    assert lv.imap.n == 0
    x = recover_interior(lv.splits, lv.imap, np.zeros(0), lv.f_global,
                         n_dofs=lv.k_global.n_rows)
    x_ref = np.linalg.solve(lv.k_global.to_dense(), lv.f_global)
    assert np.max(np.abs(x - x_ref)) < 1e-12
    assert schur_apply(lv.splits, lv.imap, np.zeros(0)).shape == (0,)


def test_worker_count_does_not_change_results():
    lv = build_level1(ProblemSpec(kind="poisson", dim=2), 8, 4,
                      axis_counts=(2, 2), method="regular-blocks")
    x = np.linspace(-1.0, 1.0, lv.imap.n)
    y1 = schur_apply(lv.splits, lv.imap, x, workers=1)
    y4 = schur_apply(lv.splits, lv.imap, x, workers=4)
    assert np.array_equal(y1, y4)
    g1 = condensed_rhs(lv.splits, lv.imap, lv.f_global, workers=1)
    g4 = condensed_rhs(lv.splits, lv.imap, lv.f_global, workers=4)
    assert np.array_equal(g1, g4)
    # rebuilding the splits in parallel gives the same operator
    from mlbddc.fem import subassemble_subdomain
    from mlbddc.interface import interface_dofs
    splits4, imap4 = build_splits(lv.k_list, lv.ltg_list,
                                  interface_dofs(lv.globset, 1), 1, workers=4)
    y = schur_apply(splits4, imap4, x)
    assert np.array_equal(y, y1)


def test_map_ordered_preserves_order():
    out = map_ordered(lambda i: i * i, 7, workers=3)
    assert out == [i * i for i in range(7)]


def test_split_errors():
    k = SparseMatrix.from_dense([[1.0]], symmetric=True)
    with pytest.raises(ValueError, match="sorted"):
        build_splits([k], [np.array([0])], np.array([2, 1]), 1)
    with pytest.raises(ValueError, match="more than one"):
        build_splits([k, k], [np.array([0]), np.array([0])], np.zeros(0, dtype=int), 1)
    splits, imap = chain_splits()
    with pytest.raises(ValueError, match="length"):
        schur_apply(splits, imap, np.zeros(3))
