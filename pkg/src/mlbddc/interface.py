"""Interface classification, corner selection, and weight matrices.

Interface nodes are grouped into globs by their exact set of sharing
subdomains: a glob shared by two subdomains with at least dim members is a
face, larger sharing sets give edges, and singleton globs with three or
more sharers are vertices. Corners are selected nodes that become point
constraints; the remaining glob members carry average constraints.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import LevelGrid

CONSTRAINT_POLICIES = ("corners-only", "corners+edges", "corners+edges+faces")
WEIGHT_SCHEMES = ("cardinality", "stiffness-diagonal")
CORNER_STRATEGIES = ("default", "vertices-only", "all-interface")


@dataclass
class Glob:
    index: int
    kind: str                 # "face" | "edge" | "vertex"
    nodes: np.ndarray         # sorted member node ids
    sharers: tuple            # sorted subdomain ids


@dataclass
class GlobSet:
    globs: list
    n_nodes: int              # grid nodes (for sharer-count lookup)
    node_glob: np.ndarray     # node -> glob index, -1 off the interface

    def interface_nodes(self) -> np.ndarray:
        return np.nonzero(self.node_glob >= 0)[0]

    def sharer_counts(self) -> np.ndarray:
        out = np.zeros(self.n_nodes, dtype=np.int64)
        for g in self.globs:
            out[g.nodes] = len(g.sharers)
        return out

    def counts_by_kind(self) -> dict:
        out = {"face": 0, "edge": 0, "vertex": 0}
        for g in self.globs:
            out[g.kind] += 1
        return out


def classify_interface(grid: LevelGrid, partition) -> GlobSet:
    """Group interface nodes by exact sharing set and classify the groups."""
    sharers = [set() for _ in range(grid.n_nodes)]
    for e, nodes in enumerate(grid.elem_nodes):
        s = int(partition.assignment[e])
        for nd in nodes:
            sharers[int(nd)].add(s)
    groups: dict = {}
    for nd in range(grid.n_nodes):
        if len(sharers[nd]) >= 2:
            groups.setdefault(tuple(sorted(sharers[nd])), []).append(nd)
    dim = grid.dim
    globs = []
    node_glob = np.full(grid.n_nodes, -1, dtype=np.int64)
    # deterministic glob order: by smallest member node
    for key in sorted(groups, key=lambda k: groups[k][0]):
        members = np.array(groups[key], dtype=np.int64)
        n_share = len(key)
        if n_share == 2:
            kind = "face" if members.size >= dim else "edge"
        else:
            kind = "vertex" if members.size == 1 else "edge"
        idx = len(globs)
        globs.append(Glob(index=idx, kind=kind, nodes=members, sharers=key))
        node_glob[members] = idx
    return GlobSet(globs=globs, n_nodes=grid.n_nodes, node_glob=node_glob)


def _face_corner_nodes(glob: Glob, coords: np.ndarray, dim: int) -> list:
    """Two extremal members along the glob's longest axis; in 3D also the
    member farthest from the line through them."""
    pts = coords[glob.nodes]
    spans = pts.max(axis=0) - pts.min(axis=0)
    axis = int(np.argmax(spans))
    lo = int(glob.nodes[np.lexsort((glob.nodes, pts[:, axis]))[0]])
    hi = int(glob.nodes[np.lexsort((glob.nodes, -pts[:, axis]))[0]])
    picked = [lo] if hi == lo else [lo, hi]
    if dim == 3 and len(picked) == 2:
        p0 = coords[lo]
        u = coords[hi] - p0
        nu = np.linalg.norm(u)
        if nu > 0:
            u = u / nu
            rel = pts - p0
            dist = np.linalg.norm(rel - np.outer(rel @ u, u), axis=1)
            far = int(glob.nodes[np.lexsort((glob.nodes, -dist))[0]])
            if dist[np.nonzero(glob.nodes == far)[0][0]] > 1e-12 and far not in picked:
                picked.append(far)
    return picked


def select_corners(globset: GlobSet, grid: LevelGrid,
                   strategy: str = "default") -> np.ndarray:
    """Corner node selection.

    "default": all vertex globs plus extremal nodes of every face glob;
    "vertices-only": vertex globs alone; "all-interface": every interface
    node becomes a corner.
    """
    if strategy not in CORNER_STRATEGIES:
        raise ValueError(f"unknown corner strategy {strategy!r}")
    if strategy == "all-interface":
        return globset.interface_nodes()
    corners = []
    for g in globset.globs:
        if g.kind == "vertex":
            corners.extend(int(n) for n in g.nodes)
        elif g.kind == "face" and strategy == "default":
            corners.extend(_face_corner_nodes(g, grid.node_coords, grid.dim))
    return np.unique(np.array(sorted(corners), dtype=np.int64))


def interface_dofs(globset: GlobSet, dofs_per_node: int) -> np.ndarray:
    """Global interface dof ids, ordered by (node, component)."""
    nodes = globset.interface_nodes()
    return (nodes[:, None] * dofs_per_node
            + np.arange(dofs_per_node)[None, :]).reshape(-1)


def build_weights(globset: GlobSet, imap, scheme: str = "cardinality",
                  local_diags=None) -> list:
    """Per-subdomain weight vectors over local interface dofs.

    cardinality: 1/#sharers per dof. stiffness-diagonal: the subdomain's
    stiffness diagonal divided by the sum over sharing subdomains. Both
    sum to one across sharers.
    """
    if scheme not in WEIGHT_SCHEMES:
        raise ValueError(f"unknown weight scheme {scheme!r}")
    dpn = imap.dofs_per_node
    if scheme == "cardinality":
        counts = globset.sharer_counts()
        out = []
        for gpos in imap.sub_global:
            nodes = imap.dofs[gpos] // dpn
            out.append(1.0 / counts[nodes])
        return out
    if local_diags is None:
        raise ValueError("stiffness-diagonal weights need local diagonals")
    numer = []
    denom = np.zeros(imap.n)
    for i, (lpos, gpos) in enumerate(zip(imap.sub_local, imap.sub_global)):
        d = np.asarray(local_diags[i])[lpos]
        numer.append(d)
        denom[gpos] += d
    return [d / denom[gpos] for d, gpos in zip(numer, imap.sub_global)]


# -- coarse space -------------------------------------------------------------

def _policy_kinds(policy: str, dim: int):
    # Policy names refer to the geometric dimension of the averaged objects.
    # In 2D the codimension-1 globs ("face" kind) are lines, i.e. edges, so
    # corners+edges already includes them and coincides with the full policy.
    if policy == "corners-only":
        return ()
    if policy == "corners+edges":
        return ("edge",) if dim == 3 else ("edge", "face")
    return ("edge", "face")


@dataclass
class CoarseSpace:
    """Global coarse-node ordering (corners first, then globs) plus the
    per-subdomain restriction maps the levels are glued with."""

    dofs_per_node: int
    corner_nodes: np.ndarray       # sorted previous-level node ids
    glob_ids: np.ndarray           # included glob indices, classify order
    glob_members: list             # remaining (non-corner) members per glob
    node_coords: np.ndarray        # (n_coarse_nodes, dim)
    sub_nodes: list                # per subdomain: local coarse node ids

    @property
    def n_corners(self) -> int:
        return self.corner_nodes.shape[0]

    @property
    def n_nodes(self) -> int:
        return self.n_corners + len(self.glob_ids)

    @property
    def n_dofs(self) -> int:
        return self.n_nodes * self.dofs_per_node

    def sub_dofs(self, i: int) -> np.ndarray:
        """Global coarse dof ids for subdomain i's local coarse dofs."""
        nodes = self.sub_nodes[i]
        dpn = self.dofs_per_node
        return (nodes[:, None] * dpn + np.arange(dpn)[None, :]).reshape(-1)


def build_coarse_space(globset: GlobSet, corners: np.ndarray, grid: LevelGrid,
                       partition, policy: str = "corners+edges+faces") -> CoarseSpace:
    if policy not in CONSTRAINT_POLICIES:
        raise ValueError(f"unknown constraint policy {policy!r}")
    kinds = _policy_kinds(policy, grid.dim)
    corners = np.asarray(sorted(int(c) for c in corners), dtype=np.int64)
    corner_set = set(corners.tolist())
    for c in corners:
        if globset.node_glob[c] < 0:
            raise ValueError(f"corner node {c} is not an interface node")
    glob_ids = []
    glob_members = []
    for g in globset.globs:
        if g.kind not in kinds:
            continue
        rest = np.array([n for n in g.nodes if int(n) not in corner_set],
                        dtype=np.int64)
        if rest.size == 0:
            continue
        glob_ids.append(g.index)
        glob_members.append(rest)
    glob_ids = np.array(glob_ids, dtype=np.int64)

    coords = np.zeros((len(corners) + len(glob_ids), grid.dim))
    coords[: len(corners)] = grid.node_coords[corners]
    for j, members in enumerate(glob_members):
        coords[len(corners) + j] = grid.node_coords[members].mean(axis=0)

    # subdomain membership follows the sharing sets
    n_subs = partition.n_subdomains
    sub_sets = [[] for _ in range(n_subs)]
    for j, c in enumerate(corners):
        g = globset.globs[globset.node_glob[c]]
        for s in g.sharers:
            sub_sets[s].append(j)
    for j, gid in enumerate(glob_ids):
        g = globset.globs[gid]
        for s in g.sharers:
            sub_sets[s].append(len(corners) + j)
    sub_nodes = [np.array(sorted(v), dtype=np.int64) for v in sub_sets]
    return CoarseSpace(dofs_per_node=grid.dofs_per_node, corner_nodes=corners,
                       glob_ids=glob_ids, glob_members=glob_members,
                       node_coords=coords, sub_nodes=sub_nodes)


def format_glob_table(globset: GlobSet) -> str:
    """ASCII report: one row per glob."""
    lines = ["glob  kind    size  sharers"]
    for g in globset.globs:
        sharers = ",".join(str(s) for s in g.sharers)
        lines.append(f"{g.index:<5d} {g.kind:<7s} {g.nodes.size:<5d} {sharers}")
    counts = globset.counts_by_kind()
    lines.append(f"total: {counts['face']} faces, {counts['edge']} edges, "
                 f"{counts['vertex']} vertices")
    return "\n".join(lines)
