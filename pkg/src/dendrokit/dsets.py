"""Finite presheaves on a window of tree shapes, with a group action.

The canonical tree shapes inside a size window, together with every
structure-preserving map between them, form a small category.  A
presheaf on that window assigns a finite cell set to each shape, a
restriction table to each map, and a compatible permutation of the
cells to each group element.  Representables of equivariant trees,
their boundaries, inner horns, Segal cores and orbital horns all
become finite set computations, as do fixed-point passages, horn
filling, and bounded searches for anodyne decompositions.

Membership in a face image has a short characterization used
throughout: a valid map into a tree factors through a face exactly
when its image edges sit inside the face's surviving edges, because
the map's own planar factorization realizes the minimal such face.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

from .groups import FiniteGroup, group_from_json, group_to_json
from .gtrees import (
    GTree,
    GTreeMap,
    compose_gmaps,
    dedupe_gtrees,
    enumerate_gmaps,
    enumerate_gtrees,
    f_tree_family,
    orbital_faces,
    orbital_representation,
)
from .trees import PlanarTree, canonical_shape, enumerate_shapes, shape_encodings


def _same_group(G: FiniteGroup, K: FiniteGroup) -> bool:
    return G is K or (G.elements == K.elements and G.table == K.table)


def _same_window(A, Z) -> bool:
    a_site, z_site = A.ambient.site if hasattr(A, "ambient") else A.site, Z.site
    same_site = a_site is z_site or (
        a_site.max_vertices == z_site.max_vertices
        and a_site.max_arity == z_site.max_arity
    )
    a_group = A.ambient.group if hasattr(A, "ambient") else A.group
    return same_site and _same_group(a_group, Z.group)
from .treemaps import (
    TreeMap,
    compose,
    enumerate_maps,
    face_core,
    identity_map,
    validate_map,
)


# -- the window of shapes -----------------------------------------------------


class TreeSite:
    """Every canonical tree shape within a size window, with all maps.

    Shapes are keyed by their sorted-children encoding; maps between a
    pair of shapes are enumerated once and cached, in a fixed order, so
    a map can be referred to by its index.
    """

    def __init__(self, max_vertices: int, max_arity: int):
        self.max_vertices = max_vertices
        self.max_arity = max_arity
        self.shapes: dict[str, PlanarTree] = {}
        for tree in enumerate_shapes(max_vertices, max_arity):
            self.shapes[shape_encodings(tree)[tree.root]] = tree
        self.order = sorted(self.shapes, key=lambda k: (len(self.shapes[k].edges), k))
        self._maps: dict[tuple[str, str], tuple[TreeMap, ...]] = {}
        self._index: dict[tuple[str, str], dict[tuple, int]] = {}
        self._classes: dict[tuple[str, str, int], object] = {}

    @property
    def bounds(self) -> tuple[int, int]:
        return (self.max_vertices, self.max_arity)

    def shape(self, key: str) -> PlanarTree:
        return self.shapes[key]

    def fits(self, tree: PlanarTree) -> bool:
        arities = [len(s) for s in tree.up.values()]
        return (
            len(tree.up) <= self.max_vertices
            and max(arities, default=0) <= self.max_arity
        )

    def key_of(self, tree: PlanarTree) -> str:
        return shape_encodings(tree)[tree.root]

    def canon(self, tree: PlanarTree) -> tuple[str, dict[str, str]]:
        """Shape key plus the renaming of the tree's edges onto the shape."""
        canon, naming, _ = canonical_shape(tree)
        key = shape_encodings(canon)[canon.root]
        if key not in self.shapes:
            raise ValueError("tree exceeds the window bounds")
        return key, naming

    @staticmethod
    def _akey(assignment) -> tuple:
        return tuple(sorted(assignment.items()))

    def maps(self, u: str, v: str) -> tuple[TreeMap, ...]:
        got = self._maps.get((u, v))
        if got is None:
            got = tuple(enumerate_maps(self.shapes[u], self.shapes[v]))
            self._maps[(u, v)] = got
            self._index[(u, v)] = {self._akey(m.assignment): i for i, m in enumerate(got)}
        return got

    def map_index(self, u: str, v: str, assignment) -> int:
        self.maps(u, v)
        return self._index[(u, v)][self._akey(assignment)]

    def compose_index(self, u: str, v: str, w: str, i: int, j: int) -> int:
        """Index of maps(v,w)[j] after maps(u,v)[i] inside maps(u,w)."""
        m1 = self.maps(u, v)[i]
        m2 = self.maps(v, w)[j]
        return self.map_index(u, w, {e: m2(m1(e)) for e in self.shapes[u].edges})

    def classify(self, u: str, v: str, i: int):
        got = self._classes.get((u, v, i))
        if got is None:
            got = validate_map(self.maps(u, v)[i])
            self._classes[(u, v, i)] = got
        return got

    def identity_index(self, u: str) -> int:
        return self.map_index(u, u, {e: e for e in self.shapes[u].edges})

    def automorphism_indices(self, u: str) -> tuple[int, ...]:
        return tuple(
            i for i in range(len(self.maps(u, u))) if self.classify(u, u, i).iso
        )

    def degeneracy_steps(self, u: str) -> tuple[tuple[str, int], ...]:
        """Maps collapsing exactly one unary vertex, as (target key, index)."""
        out = []
        n = len(self.shapes[u].edges)
        for v in self.order:
            if len(self.shapes[v].edges) != n - 1:
                continue
            for i in range(len(self.maps(u, v))):
                cls = self.classify(u, v, i)
                if cls.degeneracy and not cls.iso:
                    out.append((v, i))
        return tuple(out)


# -- presheaves ---------------------------------------------------------------


class TruncatedGDSet:
    """A presheaf of finite cell sets on the window, with a group action.

    ``cells`` maps each shape key to a tuple of cells; ``tables`` holds
    one restriction dictionary per map of the window, contravariantly;
    ``gtables`` holds one cell permutation per shape and group element.
    """

    def __init__(self, site: TreeSite, group: FiniteGroup, cells, tables, gtables):
        self.site = site
        self.group = group
        self.cells = {u: tuple(cells.get(u, ())) for u in site.order}
        self.tables = tables
        self.gtables = gtables

    def restrict(self, u: str, v: str, idx: int, x):
        """Pull the cell x at shape v back along maps(u, v)[idx]."""
        return self.tables[(u, v, idx)][x]

    def act(self, g, u: str, x):
        return self.gtables[(u, g)][x]

    def cell_count(self) -> int:
        return sum(len(c) for c in self.cells.values())

    def cell_sets(self) -> dict[str, frozenset]:
        return {u: frozenset(c) for u, c in self.cells.items()}

    def __repr__(self) -> str:
        return f"TruncatedGDSet({self.cell_count()} cells on {len(self.site.order)} shapes)"


def build_presheaf(site, group, cells_of, restrict_along, act_by) -> TruncatedGDSet:
    """Assemble a presheaf from callables computing cells and actions.

    ``cells_of(key)`` lists the cells at a shape, ``restrict_along(m, x)``
    pulls a cell back along a window map, and ``act_by(g, key, x)``
    applies a group element.
    """
    cells = {u: tuple(cells_of(u)) for u in site.order}
    tables = {}
    for u in site.order:
        for v in site.order:
            for idx, m in enumerate(site.maps(u, v)):
                tables[(u, v, idx)] = {x: restrict_along(m, x) for x in cells[v]}
    gtables = {}
    for u in site.order:
        for g in group.elements:
            gtables[(u, g)] = {x: act_by(g, u, x) for x in cells[u]}
    return TruncatedGDSet(site, group, cells, tables, gtables)


def empty_presheaf(site: TreeSite, group: FiniteGroup) -> TruncatedGDSet:
    return build_presheaf(site, group, lambda u: (), None, None)


def validate_presheaf(X: TruncatedGDSet, composition: bool = True) -> None:
    """Check the presheaf axioms by enumeration; raise on the first failure.

    Identity and group laws, table well-formedness and naturality are
    always checked; the quadratic sweep over composable map pairs can
    be switched off for large windows.
    """
    site = X.site
    for u in site.order:
        if len(set(X.cells[u])) != len(X.cells[u]):
            raise ValueError(f"duplicate cells at shape {u!r}")
    for u in site.order:
        for v in site.order:
            for idx in range(len(site.maps(u, v))):
                table = X.tables.get((u, v, idx))
                if table is None:
                    raise ValueError(f"missing table for map {idx} : {u!r} -> {v!r}")
                if set(table) != set(X.cells[v]):
                    raise ValueError(f"table domain mismatch at map {idx} : {u!r} -> {v!r}")
                cu = set(X.cells[u])
                for val in table.values():
                    if val not in cu:
                        raise ValueError(f"table value escapes cells at {u!r}")
        ident = X.tables[(u, u, site.identity_index(u))]
        if any(ident[x] != x for x in X.cells[u]):
            raise ValueError(f"identity map acts nontrivially at {u!r}")
    e = X.group.identity
    for u in site.order:
        if any(X.gtables[(u, e)][x] != x for x in X.cells[u]):
            raise ValueError(f"group identity acts nontrivially at {u!r}")
        for g in X.group.elements:
            gt = X.gtables.get((u, g))
            if gt is None or set(gt) != set(X.cells[u]):
                raise ValueError(f"group table missing or mismatched at {u!r}, {g!r}")
            for h in X.group.elements:
                gh = X.group.mul(g, h)
                if any(gt[X.gtables[(u, h)][x]] != X.gtables[(u, gh)][x] for x in X.cells[u]):
                    raise ValueError(f"group action law fails at {u!r} for {g!r}, {h!r}")
    for (u, v, idx), table in X.tables.items():
        for g in X.group.elements:
            gu = X.gtables[(u, g)]
            gv = X.gtables[(v, g)]
            if any(table[gv[x]] != gu[table[x]] for x in X.cells[v]):
                raise ValueError(
                    f"group action is not natural along map {idx} : {u!r} -> {v!r}"
                )
    if not composition:
        return
    for u in site.order:
        for v in site.order:
            for w in site.order:
                if not X.cells[w]:
                    continue
                for i in range(len(site.maps(u, v))):
                    for j in range(len(site.maps(v, w))):
                        k = site.compose_index(u, v, w, i, j)
                        ti = X.tables[(u, v, i)]
                        tj = X.tables[(v, w, j)]
                        tk = X.tables[(u, w, k)]
                        if any(ti[tj[x]] != tk[x] for x in X.cells[w]):
                            raise ValueError(
                                f"composition square fails: {u!r} -> {v!r} -> {w!r}"
                            )


@dataclass(frozen=True)
class Dendrex:
    """A cell of a presheaf, tagged with its shape key."""

    shape: str
    element: object


# -- representables -----------------------------------------------------------


def component_canon(site: TreeSite, T: GTree) -> list[tuple[str, dict[str, str]]]:
    """Per component, the shape key and edge renaming onto the stored shape."""
    out = []
    for comp in T.components:
        if not site.fits(comp):
            raise ValueError("tree exceeds the window bounds")
        out.append(site.canon(comp))
    return out


def representable(site: TreeSite, T: GTree) -> TruncatedGDSet:
    """The presheaf of all maps from window shapes into the tree.

    A cell at shape U is a pair (component index, tuple of image edges
    aligned with U's edge order); the group acts by moving edges along
    the tree's own action.
    """
    component_canon(site, T)
    comps = T.components

    def cells_of(u):
        U = site.shape(u)
        out = []
        for i, comp in enumerate(comps):
            for m in enumerate_maps(U, comp):
                out.append((i, tuple(m(e) for e in U.edges)))
        return out

    def restrict_along(m, x):
        i, items = x
        lookup = dict(zip(m.target.edges, items))
        return (i, tuple(lookup[m(e)] for e in m.source.edges))

    def act_by(g, u, x):
        i, items = x
        return (T.component_action(g)[i], tuple(T.apply(g, e) for e in items))

    return build_presheaf(site, T.group, cells_of, restrict_along, act_by)


# -- subpresheaves ------------------------------------------------------------


class SubPresheaf:
    """Per-shape subsets of an ambient presheaf, closed under all maps."""

    def __init__(self, ambient: TruncatedGDSet, sets, check: bool = True):
        self.ambient = ambient
        self.sets = {u: frozenset(sets.get(u, ())) for u in ambient.site.order}
        if check:
            self._assert_closed()

    def _assert_closed(self):
        amb = self.ambient
        for u in amb.site.order:
            if not self.sets[u] <= set(amb.cells[u]):
                raise ValueError(f"subset escapes ambient cells at {u!r}")
        for (u, v, idx), table in amb.tables.items():
            for x in self.sets[v]:
                if table[x] not in self.sets[u]:
                    raise ValueError(f"subset not closed under map {idx} : {u!r} -> {v!r}")
        for (u, g), gt in amb.gtables.items():
            for x in self.sets[u]:
                if gt[x] not in self.sets[u]:
                    raise ValueError(f"subset not closed under the action of {g!r}")

    def cells(self, u: str) -> frozenset:
        return self.sets[u]

    def cell_count(self) -> int:
        return sum(len(s) for s in self.sets.values())

    def contains_cell(self, u: str, x) -> bool:
        return x in self.sets[u]

    def union(self, other: "SubPresheaf") -> "SubPresheaf":
        self._same_ambient(other)
        return SubPresheaf(
            self.ambient, {u: self.sets[u] | other.sets[u] for u in self.sets}, check=False
        )

    def intersection(self, other: "SubPresheaf") -> "SubPresheaf":
        self._same_ambient(other)
        return SubPresheaf(
            self.ambient, {u: self.sets[u] & other.sets[u] for u in self.sets}, check=False
        )

    def le(self, other: "SubPresheaf") -> bool:
        self._same_ambient(other)
        return all(self.sets[u] <= other.sets[u] for u in self.sets)

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, SubPresheaf)
            and self.ambient is other.ambient
            and self.sets == other.sets
        )

    def __hash__(self):
        return hash(tuple(sorted((u, s) for u, s in self.sets.items())))

    def _same_ambient(self, other):
        if self.ambient is not other.ambient:
            raise ValueError("subpresheaves live over different ambients")

    def to_presheaf(self) -> TruncatedGDSet:
        """Materialize the subobject as a presheaf in its own right."""
        amb = self.ambient
        cells = {u: tuple(x for x in amb.cells[u] if x in self.sets[u]) for u in self.sets}
        tables = {
            key: {x: table[x] for x in table if x in self.sets[key[1]]}
            for key, table in amb.tables.items()
        }
        gtables = {
            (u, g): {x: gt[x] for x in gt if x in self.sets[u]}
            for (u, g), gt in amb.gtables.items()
        }
        return TruncatedGDSet(amb.site, amb.group, cells, tables, gtables)

    def __repr__(self) -> str:
        return f"SubPresheaf({self.cell_count()} of {self.ambient.cell_count()} cells)"


def full_sub(X: TruncatedGDSet) -> SubPresheaf:
    return SubPresheaf(X, {u: set(X.cells[u]) for u in X.site.order}, check=False)


def empty_sub(X: TruncatedGDSet) -> SubPresheaf:
    return SubPresheaf(X, {}, check=False)


def generated_subpresheaf(X: TruncatedGDSet, dendrices) -> SubPresheaf:
    """Closure of the given dendrices under all maps and the group action."""
    sets = {u: set() for u in X.site.order}
    for d in dendrices:
        if d.element not in X.cells[d.shape]:
            raise ValueError("dendrex not present in the presheaf")
        sets[d.shape].add(d.element)
    changed = True
    while changed:
        changed = False
        for (u, v, idx), table in X.tables.items():
            for x in list(sets[v]):
                val = table[x]
                if val not in sets[u]:
                    sets[u].add(val)
                    changed = True
        for (u, g), gt in X.gtables.items():
            for x in list(sets[u]):
                val = gt[x]
                if val not in sets[u]:
                    sets[u].add(val)
                    changed = True
    return SubPresheaf(X, sets, check=False)


def _image_sub(ambient: TruncatedGDSet, T: GTree, predicate) -> SubPresheaf:
    """Cells whose component and image edge set satisfy the predicate."""
    sets = {}
    for u in ambient.site.order:
        sets[u] = {x for x in ambient.cells[u] if predicate(x[0], set(x[1]))}
    return SubPresheaf(ambient, sets)


def _check_inner_subset(T: GTree, E) -> frozenset:
    E = frozenset(E)
    if not E:
        raise ValueError("the chosen edge set is empty")
    inner = {e for comp in T.components for e in comp.inner_edges()}
    if not E <= inner:
        raise ValueError("the chosen edges are not all inner")
    for g in T.group.elements:
        if {T.apply(g, e) for e in E} != E:
            raise ValueError("the chosen edge set is not stable under the action")
    return E


def boundary(site: TreeSite, T: GTree, ambient: TruncatedGDSet | None = None) -> SubPresheaf:
    """Union of the proper-face representables: everything not edge-onto."""
    amb = ambient if ambient is not None else representable(site, T)
    full = [set(c.edges) for c in T.components]
    return _image_sub(amb, T, lambda i, image: image != full[i])


def inner_horn(
    site: TreeSite, T: GTree, E, ambient: TruncatedGDSet | None = None
) -> SubPresheaf:
    """Union of the faces that do not contain the inner face at E."""
    E = _check_inner_subset(T, E)
    amb = ambient if ambient is not None else representable(site, T)
    required = [set(c.edges) - E for c in T.components]
    return _image_sub(amb, T, lambda i, image: not required[i] <= image)


def segal_core(site: TreeSite, T: GTree, ambient: TruncatedGDSet | None = None) -> SubPresheaf:
    """Union of the single-edge and single-vertex faces."""
    amb = ambient if ambient is not None else representable(site, T)
    cores = []
    for comp in T.components:
        pieces = [{e} for e in comp.edges if e not in comp.up]
        pieces += [{t} | set(srcs) for t, srcs in comp.up.items()]
        cores.append(pieces)
    return _image_sub(amb, T, lambda i, image: any(image <= s for s in cores[i]))


def orbital_horn(
    site: TreeSite, T: GTree, E, ambient: TruncatedGDSet | None = None
) -> SubPresheaf:
    """Union of the orbital faces that do not contain the inner face at E."""
    E = _check_inner_subset(T, E)
    amb = ambient if ambient is not None else representable(site, T)
    R = orbital_representation(T)
    rep_of = {e: rep for rep, orb in R.orbits.items() for e in orb}
    required = set(R.tree.edges) - {rep_of[e] for e in E}
    comp_index = {comp.root: i for i, comp in enumerate(T.components)}
    windows: list[tuple[int, set]] = []
    for F in orbital_faces(T):
        if required <= set(F.face.source.edges):
            continue
        for part in F.source.components:
            windows.append((comp_index[_component_root(T, part.root)], set(part.edges)))
    return _image_sub(amb, T, lambda i, image: any(i == j and image <= w for j, w in windows))


def _component_root(T: GTree, edge) -> str:
    comp = T.forest.component_at(edge)
    return comp.root


# -- Segal condition ----------------------------------------------------------


def _core_handles(site: TreeSite, u: str):
    """Core faces of a shape with their site-map indices into it."""
    U = site.shape(u)
    handles = []
    for F in face_core(U):
        key, naming = site.canon(F.source)
        assignment = {naming[e]: e for e in F.source.edges}
        idx = site.map_index(key, u, assignment)
        handles.append((F, key, naming, idx))
    return handles


def _core_families(X: TruncatedGDSet, u: str, handles) -> list[tuple]:
    """Families of core-face cells agreeing on every shared edge."""
    site = X.site
    stick = site.key_of(PlanarTree("e", {}))
    stick_edge = site.shape(stick).edges[0]
    vertex_handles = [(n, h) for n, h in enumerate(handles) if h[0].source.up]
    edge_handles = {h[0].source.root: n for n, h in enumerate(handles) if not h[0].source.up}

    families: list[dict] = [{}]
    for pos, (F, key, naming, idx) in vertex_handles:
        grown = []
        for fam in families:
            for x in X.cells[key]:
                edges_ok = True
                extra = {}
                for e in F.source.edges:
                    stick_idx = site.map_index(stick, key, {stick_edge: naming[e]})
                    val = X.tables[(stick, key, stick_idx)][x]
                    slot = edge_handles[e]
                    known = fam.get(slot, extra.get(slot))
                    if known is None:
                        extra[slot] = val
                    elif known != val:
                        edges_ok = False
                        break
                if edges_ok:
                    new = dict(fam)
                    new[pos] = x
                    new.update(extra)
                    grown.append(new)
        families = grown
    out = []
    free = [n for n in edge_handles.values()]
    for fam in families:
        missing = [n for n in free if n not in fam]
        for combo in itertools.product(*(X.cells[stick] for _ in missing)):
            full = dict(fam)
            full.update(dict(zip(missing, combo)))
            out.append(tuple(full[n] for n in range(len(handles))))
    return out


def is_strict_segal(X: TruncatedGDSet):
    """Whether restriction to the Segal core is a bijection at every shape.

    Returns (True, None) or (False, witness) where the witness names
    the shape and the failing side of the bijection.
    """
    site = X.site
    for u in site.order:
        handles = _core_handles(site, u)
        restrictions = {}
        for x in X.cells[u]:
            r = tuple(X.tables[(key, u, idx)][x] for (_, key, _, idx) in handles)
            if r in restrictions:
                return False, {
                    "shape": u,
                    "problem": "two cells share every core restriction",
                    "cells": (restrictions[r], x),
                }
            restrictions[r] = x
        for fam in _core_families(X, u, handles):
            if fam not in restrictions:
                return False, {
                    "shape": u,
                    "problem": "core-compatible family has no filler",
                    "family": fam,
                }
    return True, None


# -- degeneracies -------------------------------------------------------------


def degenerate_cells(X: TruncatedGDSet, allowed=None) -> dict[str, set]:
    """Per shape, the cells hit by some one-step degeneracy table."""
    out = {u: set() for u in X.site.order}
    for u in X.site.order:
        for v, idx in X.site.degeneracy_steps(u):
            table = X.tables[(u, v, idx)]
            for y, val in table.items():
                if allowed is not None and y not in allowed[v]:
                    continue
                out[u].add(val)
    return out


def nondegenerate_decomposition(X: TruncatedGDSet, d: Dendrex) -> tuple[TreeMap, Dendrex]:
    """Factor a cell as a degeneracy applied to a nondegenerate core.

    The search tries one-step collapses in a fixed order, so repeated
    runs return the same factorization; the core is unique up to shape
    automorphism.
    """
    site = X.site
    u, x = d.shape, d.element
    if x not in X.cells[u]:
        raise ValueError("dendrex not present in the presheaf")
    for v, idx in site.degeneracy_steps(u):
        table = X.tables[(u, v, idx)]
        for y in X.cells[v]:
            if table[y] == x:
                tail, core = nondegenerate_decomposition(X, Dendrex(v, y))
                return compose(tail, site.maps(u, v)[idx]), core
    return identity_map(site.shape(u)), d


def is_sigma_free(obj) -> tuple[bool, Dendrex | None]:
    """Whether every nondegenerate cell is moved by every nontrivial
    automorphism of its shape; on failure the fixed cell is returned."""
    if isinstance(obj, SubPresheaf):
        X, allowed = obj.ambient, obj.sets
    else:
        X, allowed = obj, {u: set(obj.cells[u]) for u in obj.site.order}
    site = X.site
    degenerate = degenerate_cells(X, allowed)
    for u in site.order:
        ident = site.identity_index(u)
        autos = [i for i in site.automorphism_indices(u) if i != ident]
        if not autos:
            continue
        for x in X.cells[u]:
            if x not in allowed[u] or x in degenerate[u]:
                continue
            for i in autos:
                if X.tables[(u, u, i)][x] == x:
                    return False, Dendrex(u, x)
    return True, None


# -- normality ----------------------------------------------------------------


def normal_mono_check(A: SubPresheaf, B: SubPresheaf, wis=None):
    """Whether every cell of B outside A has graph-subgroup isotropy.

    The isotropy of a cell sits inside the product of the group with
    the shape's automorphisms; it must meet the automorphism factor
    trivially, and when a weak indexing system is supplied the whole
    isotropy must be one of the system's tree families.  Returns
    (True, None) or (False, witness).
    """
    if A.ambient is not B.ambient:
        raise ValueError("subpresheaves live over different ambients")
    if not A.le(B):
        raise ValueError("not an inclusion")
    X = A.ambient
    site = X.site
    for u in site.order:
        U = site.shape(u)
        pos = {e: i for i, e in enumerate(U.edges)}
        identity_perm = tuple(range(len(U.edges)))
        autos = site.automorphism_indices(u)
        inverses = {}
        for i in autos:
            m = site.maps(u, u)[i]
            inv = [0] * len(U.edges)
            for e in U.edges:
                inv[pos[m(e)]] = pos[e]
            inverses[i] = tuple(inv)
        allowed_carriers = None
        if wis is not None:
            if not _same_group(wis.group, X.group):
                raise ValueError("indexing system carries a different group")
            allowed_carriers = {gs.carrier for gs in f_tree_family(wis, U)}
        for x in B.sets[u] - A.sets[u]:
            carrier = set()
            for i in autos:
                moved = X.tables[(u, u, i)][x]
                for g in X.group.elements:
                    if X.gtables[(u, g)][moved] == x:
                        carrier.add((g, inverses[i]))
            for g, perm in carrier:
                if g == X.group.identity and perm != identity_perm:
                    return False, {
                        "shape": u,
                        "cell": x,
                        "problem": "fixed by a nontrivial shape automorphism",
                        "automorphism": perm,
                    }
            if allowed_carriers is not None and frozenset(carrier) not in allowed_carriers:
                return False, {
                    "shape": u,
                    "cell": x,
                    "problem": "isotropy not in the tree family",
                    "carrier": sorted(carrier),
                }
    return True, None


# -- equivariant families -----------------------------------------------------


def _action_moves(X: TruncatedGDSet, T: GTree, data):
    """Site-map indices realizing each group element between components."""
    moves = {}
    for g in T.group.elements:
        perm = T.component_action(g)
        for i, comp in enumerate(T.components):
            j = perm[i]
            ki, ni = data[i]
            kj, nj = data[j]
            assignment = {ni[e]: nj[T.apply(g, e)] for e in comp.edges}
            moves[(g, i)] = (ki, kj, X.site.map_index(ki, kj, assignment))
    return moves


def equivariant_cells(X: TruncatedGDSet, T: GTree, allowed=None) -> list[tuple]:
    """Families of cells over the components, compatible with the action.

    A family assigns a cell to each component's shape so that acting by
    any group element and translating along the induced shape
    isomorphism agree.  These are exactly the maps from the tree's
    representable into X, recorded by their component values.
    """
    data = component_canon(X.site, T)
    moves = _action_moves(X, T, data)
    n = len(T.components)
    pool0 = X.cells[data[0][0]]
    if allowed is not None:
        pool0 = [x for x in pool0 if x in allowed[data[0][0]]]
    out = []
    for x0 in pool0:
        fam = [None] * n
        fam[0] = x0
        known = {0}
        ok = True
        frontier = [0]
        while frontier and ok:
            i = frontier.pop()
            for g in T.group.elements:
                j = T.component_action(g)[i]
                ki, kj, idx = moves[(g, i)]
                target = X.gtables[(ki, g)][fam[i]]
                table = X.tables[(ki, kj, idx)]
                candidates = [y for y in X.cells[kj] if table[y] == target]
                if len(candidates) != 1:
                    ok = False
                    break
                if fam[j] is None:
                    fam[j] = candidates[0]
                    known.add(j)
                    frontier.append(j)
                elif fam[j] != candidates[0]:
                    ok = False
                    break
        if not ok or len(known) != n:
            continue
        if allowed is not None and any(
            fam[i] not in allowed[data[i][0]] for i in range(n)
        ):
            continue
        out.append(tuple(fam))
    return out


def _family_evaluator(X: TruncatedGDSet, T: GTree):
    """Closure computing family values on representable cells, with caches."""
    data = component_canon(X.site, T)
    site = X.site

    def value(fam, u, cell):
        i, items = cell
        key, naming = data[i]
        U = site.shape(u)
        assignment = {ue: naming[img] for ue, img in zip(U.edges, items)}
        idx = site.map_index(u, key, assignment)
        return X.tables[(u, key, idx)][fam[i]]

    return value


def evaluate_family(X: TruncatedGDSet, T: GTree, fam, u: str, cell):
    """Value of a family on one cell of the tree's representable."""
    return _family_evaluator(X, T)(fam, u, cell)


# -- presheaf maps ------------------------------------------------------------


def validate_presheaf_map(A: SubPresheaf, Z: TruncatedGDSet, mapping) -> None:
    """Check that a per-cell assignment is natural and equivariant."""
    amb = A.ambient
    if not _same_window(amb, Z):
        raise ValueError("source and target live on different windows")
    for u in amb.site.order:
        for x in A.sets[u]:
            if (u, x) not in mapping:
                raise ValueError(f"assignment missing a cell at {u!r}")
            if mapping[(u, x)] not in set(Z.cells[u]):
                raise ValueError(f"assignment leaves the target at {u!r}")
    for (u, v, idx), table in amb.tables.items():
        for x in A.sets[v]:
            if mapping[(u, table[x])] != Z.tables[(u, v, idx)][mapping[(v, x)]]:
                raise ValueError(f"assignment not natural along map {idx} : {u!r} -> {v!r}")
    for (u, g), gt in amb.gtables.items():
        for x in A.sets[u]:
            if mapping[(u, gt[x])] != Z.gtables[(u, g)][mapping[(u, x)]]:
                raise ValueError(f"assignment not equivariant for {g!r} at {u!r}")


def presheaf_maps(A: SubPresheaf, Z: TruncatedGDSet, limit=None) -> list[dict]:
    """All natural equivariant assignments from the subpresheaf into Z.

    Backtracking search: cells are visited smallest shape first, each
    choice propagates forced values along every restriction and group
    translate, and conflicts prune the branch.
    """
    amb = A.ambient
    site = amb.site
    if not _same_window(amb, Z):
        raise ValueError("source and target live on different windows")
    todo = [(u, x) for u in site.order for x in sorted(A.sets[u], key=repr)]
    zcells = {u: tuple(Z.cells[u]) for u in site.order}

    restrictions = {}
    for (u, v, idx), table in amb.tables.items():
        for x in A.sets[v]:
            restrictions.setdefault((v, x), []).append((u, table[x], (u, v, idx)))
    translates = {}
    for (u, g), gt in amb.gtables.items():
        for x in A.sets[u]:
            translates.setdefault((u, x), []).append((gt[x], g))

    out = []

    def propagate(assign, u, x, z):
        stack = [(u, x, z)]
        added = []
        while stack:
            cu, cx, cz = stack.pop()
            got = assign.get((cu, cx))
            if got is not None:
                if got != cz:
                    for key in added:
                        del assign[key]
                    return None
                continue
            assign[(cu, cx)] = cz
            added.append((cu, cx))
            for ru, rx, key in restrictions.get((cu, cx), ()):
                stack.append((ru, rx, Z.tables[key][cz]))
            for tx, g in translates.get((cu, cx), ()):
                stack.append((cu, tx, Z.gtables[(cu, g)][cz]))
        return added

    def search(assign, pos):
        if limit is not None and len(out) >= limit:
            return
        while pos < len(todo) and todo[pos] in assign:
            pos += 1
        if pos == len(todo):
            out.append(dict(assign))
            return
        u, x = todo[pos]
        for z in zcells[u]:
            added = propagate(assign, u, x, z)
            if added is not None:
                search(assign, pos + 1)
                for key in added:
                    del assign[key]
            if limit is not None and len(out) >= limit:
                return
        return

    search({}, 0)
    return out


def attachment_from_seed(A: SubPresheaf, Z: TruncatedGDSet, seed) -> dict:
    """Extend values on a few cells to a full presheaf map, if forced.

    The seed is a mapping (shape, cell) -> target cell; propagation
    along restrictions and translates must determine every cell of the
    subpresheaf or a ValueError is raised.
    """
    solutions = presheaf_maps(A, Z, limit=2)
    matching = [
        s for s in solutions if all(s.get(k) == v for k, v in seed.items())
    ]
    if len(matching) == 1:
        return matching[0]
    full = presheaf_maps(A, Z)
    matching = [s for s in full if all(s.get(k) == v for k, v in seed.items())]
    if not matching:
        raise ValueError("seed extends to no presheaf map")
    if len(matching) > 1:
        raise ValueError("seed does not determine the assignment")
    return matching[0]


def inclusion_attachment(A: SubPresheaf, Z: TruncatedGDSet) -> dict:
    """The tautological assignment when the cells are literally shared."""
    for u in A.ambient.site.order:
        missing = A.sets[u] - set(Z.cells[u])
        if missing:
            raise ValueError(f"cells at {u!r} are not present in the target")
    return {(u, x): x for u in A.ambient.site.order for x in A.sets[u]}


# -- horn filling -------------------------------------------------------------


def horn_filler(Z: TruncatedGDSet, T: GTree, horn: SubPresheaf, attachment) -> list[tuple]:
    """All families of Z over the tree restricting to the attachment."""
    validate_presheaf_map(horn, Z, attachment)
    value = _family_evaluator(Z, T)
    out = []
    for fam in equivariant_cells(Z, T):
        good = True
        for u in Z.site.order:
            for y in horn.sets[u]:
                if value(fam, u, y) != attachment[(u, y)]:
                    good = False
                    break
            if not good:
                break
        if good:
            out.append(fam)
    return out


# -- genuine presheaves -------------------------------------------------------


@dataclass
class GenuineDSet:
    """Finite sets indexed by equivariant tree shapes, contravariantly.

    ``maps[(i, j)]`` lists the enumerated equivariant maps between the
    stored shapes and ``tables[(i, j, k)]`` pulls cells back along the
    k-th of them.
    """

    group: FiniteGroup
    shapes: tuple
    cells: tuple
    maps: dict
    tables: dict

    def shape_index(self, T: GTree) -> int:
        for i, S in enumerate(self.shapes):
            if S is T or S == T:
                return i
        raise ValueError("shape not stored")


def _gmap_component_tables(X: TruncatedGDSet, S: GTree, T: GTree, m: GTreeMap, data_s, data_t):
    """Per source component, the site-map key triple realizing the map."""
    comp_of = {e: b for b, comp in enumerate(T.components) for e in comp.edges}
    out = []
    for a, comp in enumerate(S.components):
        b = comp_of[m(comp.root)]
        ka, na = data_s[a]
        kb, nb = data_t[b]
        assignment = {na[e]: nb[m(e)] for e in comp.edges}
        idx = X.site.map_index(ka, kb, assignment)
        out.append((b, (ka, kb, idx)))
    return out


def upsilon_star(X: TruncatedGDSet, gshapes=None, check: bool = True) -> GenuineDSet:
    """Package the equivariant families of X over a pool of tree shapes.

    The value at an induced tree is given by families over components,
    which biject with twisted fixed points of the component stabilizer;
    maps act by componentwise translation and restriction.
    """
    site = X.site
    if gshapes is None:
        gshapes = dedupe_gtrees(
            T
            for T in enumerate_gtrees(X.group, site.max_vertices, site.max_arity)
            if all(site.fits(c) for c in T.components)
        )
    shapes = tuple(gshapes)
    datas = [component_canon(site, T) for T in shapes]
    cells = tuple(tuple(equivariant_cells(X, T)) for T in shapes)
    maps = {}
    tables = {}
    for i, S in enumerate(shapes):
        for j, T in enumerate(shapes):
            ms = tuple(enumerate_gmaps(S, T))
            maps[(i, j)] = ms
            for k, m in enumerate(ms):
                plan = _gmap_component_tables(X, S, T, m, datas[i], datas[j])
                table = {}
                for fam in cells[j]:
                    table[fam] = tuple(X.tables[key][fam[b]] for b, key in plan)
                tables[(i, j, k)] = table
    out = GenuineDSet(X.group, shapes, cells, maps, tables)
    if check:
        _check_genuine_functoriality(out)
    return out


def _gmap_index(maps, m: GTreeMap) -> int:
    key = tuple(sorted(m.assignment.items()))
    for k, n in enumerate(maps):
        if tuple(sorted(n.assignment.items())) == key:
            return k
    raise ValueError("composite map missing from the enumeration")


def _check_genuine_functoriality(D: GenuineDSet) -> None:
    n = len(D.shapes)
    for i in range(n):
        for k, m in enumerate(D.maps[(i, i)]):
            if all(m(e) == e for e in D.shapes[i].edges):
                table = D.tables[(i, i, k)]
                if any(table[x] != x for x in D.cells[i]):
                    raise ValueError("identity map acts nontrivially")
    for i in range(n):
        for j in range(n):
            for k in range(n):
                for a, m1 in enumerate(D.maps[(i, j)]):
                    for b, m2 in enumerate(D.maps[(j, k)]):
                        c = _gmap_index(D.maps[(i, k)], compose_gmaps(m2, m1))
                        t1 = D.tables[(i, j, a)]
                        t2 = D.tables[(j, k, b)]
                        tc = D.tables[(i, k, c)]
                        if any(t1[t2[x]] != tc[x] for x in D.cells[k]):
                            raise ValueError("composition square fails on tree shapes")


def upsilon_sets(X: TruncatedGDSet, A: SubPresheaf, gshapes) -> dict[int, frozenset]:
    """Families of a subpresheaf over each stored tree shape."""
    if A.ambient is not X:
        raise ValueError("subpresheaf does not live in the given presheaf")
    return {
        i: frozenset(equivariant_cells(X, T, allowed=A.sets))
        for i, T in enumerate(gshapes)
    }


def genuine_horn_filler(D: GenuineDSet, t: int, E, attachment) -> list:
    """Cells at the full shape restricting to the attachment on the horn.

    The horn here consists of the equivariant maps into the shape whose
    componentwise images avoid the inner face at E; the attachment maps
    each such map's index to a cell at its source shape.
    """
    T = D.shapes[t]
    E = _check_inner_subset(T, E)
    required = {}
    comp_of = {e: b for b, comp in enumerate(T.components) for e in comp.edges}
    for b, comp in enumerate(T.components):
        required[b] = set(comp.edges) - E

    def in_horn(m: GTreeMap) -> bool:
        for comp in m.source.components:
            image = {m(e) for e in comp.edges}
            if required[comp_of[m(comp.root)]] <= image:
                return False
        return True

    horn = {
        (i, k)
        for i in range(len(D.shapes))
        for k, m in enumerate(D.maps[(i, t)])
        if in_horn(m)
    }
    if set(attachment) != horn:
        raise ValueError("attachment does not cover exactly the horn maps")
    for (i, k) in horn:
        if attachment[(i, k)] not in set(D.cells[i]):
            raise ValueError("attachment leaves the target")
    for (j, k) in horn:
        for i in range(len(D.shapes)):
            for n, mn in enumerate(D.maps[(i, j)]):
                c = _gmap_index(D.maps[(i, t)], compose_gmaps(D.maps[(j, t)][k], mn))
                if attachment[(i, c)] != D.tables[(i, j, n)][attachment[(j, k)]]:
                    raise ValueError("attachment is not natural")
    return [
        z
        for z in D.cells[t]
        if all(D.tables[(i, t, k)][z] == attachment[(i, k)] for (i, k) in horn)
    ]


# -- gluing and completion ----------------------------------------------------


def attach_cells(
    X: TruncatedGDSet, sub: SubPresheaf, attachment, tag: str
) -> TruncatedGDSet:
    """Glue the subpresheaf's ambient onto X along the attachment.

    Cells of the ambient outside the subpresheaf are added as fresh
    cells tagged with the label; their restrictions land in X through
    the attachment whenever they fall into the subpresheaf.
    """
    amb = sub.ambient
    validate_presheaf_map(sub, X, attachment)

    def wrap(u, y):
        return y if y in sub.sets[u] else ("+", tag, y)

    def send(u, y):
        return attachment[(u, y)] if y in sub.sets[u] else ("+", tag, y)

    cells = {
        u: X.cells[u] + tuple(("+", tag, y) for y in amb.cells[u] if y not in sub.sets[u])
        for u in X.site.order
    }
    tables = {}
    for key, table in X.tables.items():
        u, v, idx = key
        fresh = {
            ("+", tag, y): send(u, amb.tables[key][y])
            for y in amb.cells[v]
            if y not in sub.sets[v]
        }
        tables[key] = {**table, **fresh}
    gtables = {}
    for (u, g), gt in X.gtables.items():
        fresh = {
            ("+", tag, y): ("+", tag, amb.gtables[(u, g)][y])
            for y in amb.cells[u]
            if y not in sub.sets[u]
        }
        gtables[(u, g)] = {**gt, **fresh}
    return TruncatedGDSet(X.site, X.group, cells, tables, gtables)


def inner_orbit_families(T: GTree) -> list[frozenset]:
    """Nonempty unions of inner-edge orbits, the admissible horn data."""
    inner = {e for comp in T.components for e in comp.inner_edges()}
    orbits = [frozenset(orb) for orb in T.edge_orbits() if set(orb) <= inner]
    out = []
    for r in range(1, len(orbits) + 1):
        for combo in itertools.combinations(orbits, r):
            out.append(frozenset().union(*combo))
    return out


def horn_instances(site: TreeSite, pool) -> list[tuple]:
    """Per pool shape and admissible edge set: the representable and horn."""
    out = []
    for ti, T in enumerate(pool):
        if not all(site.fits(c) for c in T.components):
            continue
        options = inner_orbit_families(T)
        if not options:
            continue
        rep = representable(site, T)
        for E in options:
            out.append((ti, T, E, rep, inner_horn(site, T, E, rep)))
    return out


def is_bounded_g_infty(Z: TruncatedGDSet, pool):
    """Whether every horn attachment over the pool admits a filler."""
    for ti, T, E, rep, horn in horn_instances(Z.site, pool):
        for attachment in presheaf_maps(horn, Z):
            if not horn_filler(Z, T, horn, attachment):
                return False, {"tree": ti, "E": sorted(E), "attachment": attachment}
    return True, None


def bounded_completion(X: TruncatedGDSet, pool, budget: int = 32) -> TruncatedGDSet:
    """Freely adjoin fillers for unfilled horns until none remain.

    Each round scans every horn attachment into the current presheaf
    and glues in the full representable along the first unfilled one;
    raises RuntimeError when the budget is exhausted.
    """
    instances = horn_instances(X.site, pool)
    current = X
    count = 0
    while True:
        found = None
        for ti, T, E, rep, horn in instances:
            for attachment in presheaf_maps(horn, current):
                if not horn_filler(current, T, horn, attachment):
                    found = (T, horn, attachment)
                    break
            if found:
                break
        if found is None:
            return current
        if count >= budget:
            raise RuntimeError("iteration budget exceeded")
        T, horn, attachment = found
        current = attach_cells(current, horn, attachment, tag=f"fill{count}")
        count += 1


# -- anodyne certificates -----------------------------------------------------


def _candidate_steps(B: SubPresheaf, pool):
    """Horn pushout steps through families of B, with their images."""
    X = B.ambient
    site = X.site
    out = []
    for ti, T, E, rep, horn in horn_instances(site, pool):
        value = _family_evaluator(X, T)
        horn_cells = [(u, y) for u in site.order for y in sorted(horn.sets[u], key=repr)]
        rest_cells = [
            (u, y)
            for u in site.order
            for y in rep.cells[u]
            if y not in horn.sets[u]
        ]
        for fam in equivariant_cells(X, T, allowed=B.sets):
            img_horn = frozenset((u, value(fam, u, y)) for u, y in horn_cells)
            img_rest = [(u, value(fam, u, y)) for u, y in rest_cells]
            if len(set(img_rest)) != len(img_rest):
                continue
            if set(img_rest) & img_horn:
                continue
            out.append((ti, E, fam, img_horn, frozenset(img_rest)))
    out.sort(key=lambda c: (len(pool[c[0]].edges), c[0], sorted(c[1]), repr(c[2])))
    return out


def bounded_anodyne_search(A: SubPresheaf, B: SubPresheaf, pool, budget: int = 2000):
    """Search for horn pushout steps transforming A into B.

    Returns an ordered list of steps {"tree", "E", "family"} on
    success and None when the bounded search is exhausted; failure is
    not a disproof.
    """
    if A.ambient is not B.ambient:
        raise ValueError("subpresheaves live over different ambients")
    if not A.le(B):
        raise ValueError("not an inclusion")
    candidates = _candidate_steps(B, pool)
    target = B.sets
    visited = set()
    counter = [budget]

    def key_of(state):
        return tuple(state[u] for u in A.ambient.site.order)

    def search(state, steps):
        if state == target:
            return list(steps)
        k = key_of(state)
        if k in visited:
            return None
        visited.add(k)
        if counter[0] <= 0:
            return None
        counter[0] -= 1
        for ti, E, fam, img_horn, img_rest in candidates:
            if any(val not in state[u] for u, val in img_horn):
                continue
            if any(val in state[u] for u, val in img_rest):
                continue
            nxt = {u: state[u] for u in state}
            for u, val in img_rest:
                nxt[u] = nxt[u] | {val}
            steps.append({"tree": ti, "E": sorted(E), "family": fam})
            got = search(nxt, steps)
            if got is not None:
                return got
            steps.pop()
        return None

    return search(dict(A.sets), [])


def replay_certificate(A: SubPresheaf, B: SubPresheaf, pool, certificate) -> bool:
    """Re-apply certificate steps from A and confirm they land on B."""
    X = A.ambient
    site = X.site
    state = dict(A.sets)
    for step in certificate:
        T = pool[step["tree"]]
        E = frozenset(step["E"])
        fam = tuple(step["family"])
        if fam not in equivariant_cells(X, T, allowed=B.sets):
            return False
        rep = representable(site, T)
        horn = inner_horn(site, T, E, rep)
        value = _family_evaluator(X, T)
        for u in site.order:
            for y in rep.cells[u]:
                val = value(fam, u, y)
                if y in horn.sets[u]:
                    if val not in state[u]:
                        return False
                elif val in state[u]:
                    return False
        fresh = {}
        for u in site.order:
            vals = [value(fam, u, y) for y in rep.cells[u] if y not in horn.sets[u]]
            if len(set(vals)) != len(vals):
                return False
            fresh[u] = set(vals)
        state = {u: state[u] | fresh[u] for u in state}
    return state == dict(B.sets)


# -- serialization ------------------------------------------------------------


def presheaf_to_json(X: TruncatedGDSet) -> dict:
    """Full-table serialization: cells become per-shape string names."""
    names = {}
    for u in X.site.order:
        for n, x in enumerate(X.cells[u]):
            names[(u, x)] = f"c{n}"
    maps = {}
    for (u, v, idx), table in X.tables.items():
        maps[f"{u}|{v}|{idx}"] = {names[(v, x)]: names[(u, y)] for x, y in table.items()}
    gaction = {}
    for (u, g), gt in X.gtables.items():
        gaction[f"{u}|{g}"] = {names[(u, x)]: names[(u, y)] for x, y in gt.items()}
    return {
        "bounds": [X.site.max_vertices, X.site.max_arity],
        "group": group_to_json(X.group),
        "shapes": list(X.site.order),
        "cells": {u: [names[(u, x)] for x in X.cells[u]] for u in X.site.order},
        "maps": maps,
        "gaction": gaction,
    }


def presheaf_from_json(data, site: TreeSite | None = None, composition: bool = True) -> TruncatedGDSet:
    """Rebuild a presheaf from the full-table format and validate it."""
    if site is None:
        site = TreeSite(*data["bounds"])
    group = group_from_json(data["group"])
    cells = {u: tuple(data["cells"].get(u, ())) for u in site.order}
    tables = {}
    for key, table in data["maps"].items():
        u, v, idx = key.split("|")
        tables[(u, v, int(idx))] = dict(table)
    gtables = {}
    for key, gt in data["gaction"].items():
        u, g = key.split("|", 1)
        gtables[(u, g)] = dict(gt)
    X = TruncatedGDSet(site, group, cells, tables, gtables)
    validate_presheaf(X, composition=composition)
    return X
