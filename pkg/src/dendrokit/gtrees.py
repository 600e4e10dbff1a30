"""Forests with a group action that is transitive on tree components.

An equivariant tree is stored in expanded form: an honest forest
together with an edge-level action of the group.  The orbital picture
(one edge per orbit) is derived on demand.  Induction from a subgroup
action, orbit bookkeeping, map classification and factorization, and
orbital faces all live here, as do weak indexing systems.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping

from .groups import (
    FiniteGroup,
    GraphSubgroup,
    graph_subgroups_into,
    homomorphisms,
    is_subgroup,
    left_cosets,
    permutation_group,
    restricted_group,
    subgroups,
    symmetric,
)
from .treemaps import (
    Face,
    ForestMap,
    NotAMap,
    TreeMap,
    enumerate_faces,
    enumerate_maps,
    factorize_planar,
    is_valid,
    validate_map,
)
from .trees import (
    Forest,
    PlanarTree,
    broad_holds,
    corolla,
    enumerate_shapes,
    parse_tree,
    stick,
    tree_isomorphisms,
)


class GTree:
    """A forest with a group action permuting its components transitively."""

    __slots__ = ("group", "forest", "action", "_comp_action", "_pos")

    def __init__(self, group: FiniteGroup, forest, action: Mapping):
        self.group = group
        self.forest = forest if isinstance(forest, Forest) else Forest(tuple(forest))
        edges = self.forest.edges()
        edge_set = set(edges)
        act = {group.identity: {e: e for e in edges}}
        for g, perm in action.items():
            if g not in group:
                raise ValueError(f"unknown group element {g!r}")
            act[g] = dict(perm)
        if set(act) != set(group.elements):
            missing = set(group.elements) - set(act)
            raise ValueError(f"action missing elements {sorted(map(str, missing))}")
        for g, perm in act.items():
            if set(perm) != edge_set or set(perm.values()) != edge_set:
                raise ValueError(f"action of {g!r} is not an edge permutation")
        if any(act[group.identity][e] != e for e in edges):
            raise ValueError("identity must act trivially")
        for g in group.elements:
            for h in group.elements:
                gh = group.mul(g, h)
                if any(act[gh][e] != act[g][act[h][e]] for e in edges):
                    raise ValueError(f"action is not a homomorphism at ({g!r}, {h!r})")
        comps = self.forest.components
        root_index = {c.root: i for i, c in enumerate(comps)}
        comp_action = {}
        for g in group.elements:
            index_map = []
            for i, comp in enumerate(comps):
                j = root_index.get(act[g][comp.root])
                if j is None:
                    raise ValueError(f"{g!r} does not send roots to roots")
                other = comps[j]
                if {act[g][e] for e in comp.edges} != set(other.edges):
                    raise ValueError(f"{g!r} tears component {i}")
                for target, sources in comp.vertices():
                    image = other.up.get(act[g][target])
                    if image is None or len(image) != len(sources):
                        raise ValueError(f"{g!r} breaks the vertex at {target!r}")
                    if {act[g][s] for s in sources} != set(image):
                        raise ValueError(f"{g!r} breaks the vertex at {target!r}")
                index_map.append(j)
            comp_action[g] = tuple(index_map)
        reached = {0}
        for g in group.elements:
            reached.add(comp_action[g][0])
        if reached != set(range(len(comps))):
            raise ValueError("action is not transitive on tree components")
        self.action = act
        self._comp_action = comp_action
        self._pos = {e: i for i, e in enumerate(edges)}

    # -- basic accessors ----------------------------------------------------

    @property
    def components(self):
        return self.forest.components

    @property
    def edges(self):
        return self.forest.edges()

    def apply(self, g, e):
        return self.action[g][e]

    def component_action(self, g) -> tuple:
        return self._comp_action[g]

    def component_stabilizer(self, i: int) -> frozenset:
        return frozenset(g for g in self.group.elements if self._comp_action[g][i] == i)

    def orbit(self, e) -> frozenset:
        return frozenset(self.action[g][e] for g in self.group.elements)

    def edge_orbits(self) -> list[tuple]:
        """Orbits in first-occurrence order, each sorted by edge position."""
        seen = set()
        out = []
        for e in self.edges:
            if e in seen:
                continue
            orb = self.orbit(e)
            seen |= orb
            out.append(tuple(sorted(orb, key=self._pos.get)))
        return out

    def isotropy(self, e) -> frozenset:
        return frozenset(g for g in self.group.elements if self.action[g][e] == e)

    def vertex_targets(self) -> tuple:
        return tuple(t for comp in self.components for t, _ in comp.vertices())

    def vertex_orbits(self) -> list[tuple]:
        """Orbits of vertices, named by their target edges."""
        targets = set(self.vertex_targets())
        seen = set()
        out = []
        for e in self.edges:
            if e not in targets or e in seen:
                continue
            orb = self.orbit(e)
            seen |= orb
            out.append(tuple(sorted(orb, key=self._pos.get)))
        return out

    def up_of(self, e) -> tuple:
        comp = self.forest.component_at(e)
        return comp.up.get(e, ())

    def key(self):
        return (
            self.forest.key(),
            tuple(sorted((g, tuple(sorted(p.items(), key=lambda kv: self._pos[kv[0]])))
                         for g, p in self.action.items())),
        )

    def __eq__(self, other) -> bool:
        return isinstance(other, GTree) and self.key() == other.key()

    def __hash__(self) -> int:
        return hash(self.key())

    def __repr__(self) -> str:
        return f"GTree({len(self.components)} components, {len(self.edges)} edges)"


def is_g_corolla(T: GTree) -> bool:
    """True when every tree component is a corolla."""
    return all(set(c.up) == {c.root} for c in T.components)


# -- induction --------------------------------------------------------------


def induce(G: FiniteGroup, H: Iterable, tree: PlanarTree, phi: Mapping) -> GTree:
    """Spread an H-tree over the cosets of H, with the standard action.

    `phi` maps each element of H to an edge permutation of the tree
    (the identity may be omitted).  Component order follows coset
    representatives that are minimal in the group's element order; the
    identity coset keeps the original edge names, coset rep r prefixes
    names as "r.e".
    """
    members = frozenset(H)
    if not is_subgroup(G, members):
        raise ValueError("H is not a subgroup")
    full_phi = {G.identity: {e: e for e in tree.edges}}
    for h, perm in phi.items():
        if h not in members:
            raise ValueError(f"{h!r} is not in H")
        full_phi[h] = dict(perm)
    if set(full_phi) != members:
        missing = members - set(full_phi)
        raise ValueError(f"phi missing elements {sorted(map(str, missing))}")
    for h, perm in full_phi.items():
        f = TreeMap(tree, tree, perm)
        if not (is_valid(f) and validate_map(f).iso):
            raise ValueError(f"phi({h!r}) is not an automorphism")
    for h1 in members:
        for h2 in members:
            h12 = G.mul(h1, h2)
            if any(full_phi[h12][e] != full_phi[h1][full_phi[h2][e]] for e in tree.edges):
                raise ValueError("phi is not a homomorphism")

    cosets = left_cosets(G, members)
    rep_of = {}
    for rep, coset in cosets:
        for g in coset:
            rep_of[g] = rep

    def name(rep, e):
        return e if rep == G.identity else f"{rep}.{e}"

    comps = tuple(tree.rename({e: name(rep, e) for e in tree.edges}) for rep, _ in cosets)
    action = {}
    for g in G.elements:
        perm = {}
        for rep, _ in cosets:
            target_rep = rep_of[G.mul(g, rep)]
            h = G.mul(G.inv(target_rep), G.mul(g, rep))
            for e in tree.edges:
                perm[name(rep, e)] = name(target_rep, full_phi[h][e])
        action[g] = perm
    return GTree(G, Forest(comps), action)


def g_stick(G: FiniteGroup, H: Iterable, edge="e") -> GTree:
    """The equivariant stick with component set G/H."""
    return induce(G, H, stick(edge), {h: {edge: edge} for h in H})


def trivial_action(H: Iterable, tree: PlanarTree) -> dict:
    return {h: {e: e for e in tree.edges} for h in H}


# -- orbital representation --------------------------------------------------


@dataclass(frozen=True)
class OrbitalTree:
    """Quotient of a G-tree by its action: one edge per orbit.

    `tree` uses orbit representatives as edge names; `orbits` and
    `isotropy` record the fibers, and `multiplicity[(t, c)]` counts how
    many sources of the expanded vertex at t's representative lie in
    orbit c.
    """

    tree: PlanarTree
    orbits: dict
    isotropy: dict
    multiplicity: dict

    def orbit_size(self, rep) -> int:
        return len(self.orbits[rep])

    def summary(self) -> list[tuple]:
        return [(rep, len(self.orbits[rep]), len(self.isotropy[rep])) for rep in self.tree.edges]


def orbital_representation(T: GTree) -> OrbitalTree:
    orbit_list = T.edge_orbits()
    rep_of = {}
    for orb in orbit_list:
        for e in orb:
            rep_of[e] = orb[0]
    vertex_targets = set(T.vertex_targets())
    up = {}
    multiplicity = {}
    for orb in orbit_list:
        rep = orb[0]
        if rep not in vertex_targets:
            continue
        children = []
        for s in T.up_of(rep):
            c = rep_of[s]
            if c not in children:
                children.append(c)
            multiplicity[(rep, c)] = multiplicity.get((rep, c), 0) + 1
        up[rep] = tuple(children)
    root_rep = rep_of[T.components[0].root]
    tree = PlanarTree(root_rep, up)
    orbits = {orb[0]: orb for orb in orbit_list}
    isotropy = {orb[0]: T.isotropy(orb[0]) for orb in orbit_list}
    return OrbitalTree(tree=tree, orbits=orbits, isotropy=isotropy, multiplicity=multiplicity)


# -- vertex corollas ----------------------------------------------------------


def g_vertex_corolla(T: GTree, target) -> GTree:
    """The orbit of corollas at the vertex whose target edge is given."""
    vertex_targets = set(T.vertex_targets())
    if target not in vertex_targets:
        raise ValueError(f"no vertex at edge {target!r}")
    orb = sorted(T.orbit(target), key=T._pos.get)
    comps = tuple(corolla(t, T.up_of(t)) for t in orb)
    keep = {e for c in comps for e in c.edges}
    action = {g: {e: T.action[g][e] for e in keep} for g in T.group.elements}
    return GTree(T.group, Forest(comps), action)


def corolla_graph_subgroup(T: GTree) -> tuple[frozenset, int]:
    """Carrier of the (stabilizer, leaf permutation) graph of a G-corolla.

    Reads the action of the first component's stabilizer on its leaves
    in planar order; returns (carrier, arity).
    """
    if not is_g_corolla(T):
        raise ValueError("not a corolla orbit")
    comp = T.components[0]
    leaves = comp.up[comp.root]
    pos = {l: i for i, l in enumerate(leaves)}
    H = T.component_stabilizer(0)
    carrier = set()
    for h in H:
        perm = tuple(pos[T.apply(h, l)] for l in leaves)
        carrier.add((h, perm))
    return frozenset(carrier), len(leaves)


# -- maps ---------------------------------------------------------------------


class GTreeMap:
    """An equivariant forest map between trees with the same group."""

    __slots__ = ("source", "target", "forest_map")

    def __init__(self, source: GTree, target: GTree, assignment: Mapping):
        if source.group.elements != target.group.elements or source.group.table != target.group.table:
            raise ValueError("source and target must share the group")
        self.source = source
        self.target = target
        self.forest_map = ForestMap(source.forest, target.forest, assignment)
        for part in self.forest_map.parts:
            relation = next((r for r in _invalid_relations(part)), None)
            if relation is not None:
                raise NotAMap(f"component map breaks relation {relation}", relation)
        a = self.forest_map.assignment
        for g in source.group.elements:
            for e in source.edges:
                if a[source.apply(g, e)] != target.apply(g, a[e]):
                    raise NotAMap(f"not equivariant at ({g!r}, {e!r})")

    def __call__(self, e):
        return self.forest_map.assignment[e]

    @property
    def assignment(self) -> dict:
        return self.forest_map.assignment

    def key(self):
        return (self.source.key(), self.target.key(),
                tuple(sorted(self.assignment.items(), key=lambda kv: self.source._pos[kv[0]])))

    def __eq__(self, other) -> bool:
        return isinstance(other, GTreeMap) and self.key() == other.key()

    def __hash__(self) -> int:
        return hash(self.key())

    def __repr__(self) -> str:
        return f"GTreeMap({self.source!r} -> {self.target!r})"


def _invalid_relations(part: TreeMap):
    for target, sources in part.source.vertices():
        image_sources = tuple(part.assignment[s] for s in sources)
        image_target = part.assignment[target]
        if not broad_holds(part.target, image_sources, image_target):
            yield (sources, target)


def compose_gmaps(g: GTreeMap, f: GTreeMap) -> GTreeMap:
    if f.target is not g.source and f.target.key() != g.source.key():
        raise ValueError("maps do not align")
    return GTreeMap(f.source, g.target, {e: g(f(e)) for e in f.source.edges})


def identity_gmap(T: GTree) -> GTreeMap:
    return GTreeMap(T, T, {e: e for e in T.edges})


@dataclass(frozen=True)
class GMapClass:
    is_sorted: bool
    quotient: bool
    pullback: bool
    components: tuple

    def labels(self) -> str:
        out = []
        if self.is_sorted:
            out.append("sorted")
        if self.quotient:
            out.append("quotient")
        if self.pullback:
            out.append("pullback")
        return ",".join(out)


def classify_gmap(f: GTreeMap) -> GMapClass:
    """Sorted / quotient / pullback flags plus per-component classes."""
    per = tuple(validate_map(part) for part in f.forest_map.parts)
    n_src = len(f.source.components)
    n_tgt = len(f.target.components)
    index_map = f.forest_map.index_map
    is_sorted = n_src == n_tgt and index_map == tuple(range(n_src))
    quotient = all(c.iso for c in per)
    pullback = quotient and all(c.planar for c in per)
    return GMapClass(is_sorted=is_sorted, quotient=quotient, pullback=pullback, components=per)


@dataclass(frozen=True)
class GMapFactorization:
    """f = pullback . spo . spi . spd . sorted_iso, each factor equivariant."""

    sorted_iso: GTreeMap
    spd: GTreeMap
    spi: GTreeMap
    spo: GTreeMap
    pullback: GTreeMap

    def parts(self) -> tuple:
        return (self.sorted_iso, self.spd, self.spi, self.spo, self.pullback)

    def compose(self) -> GTreeMap:
        out = self.sorted_iso
        for nxt in (self.spd, self.spi, self.spo, self.pullback):
            out = compose_gmaps(nxt, out)
        return out


def factorize_gmap(f: GTreeMap) -> GMapFactorization:
    """Split an equivariant map into its five canonical stages.

    The pullback stage copies, for each source component i, the target
    component it lands in (edges renamed to (i, edge)); the sorted part
    is then factored planar-canonically component by component.
    """
    S, T = f.source, f.target
    G = S.group
    index_map = f.forest_map.index_map

    def pname(i, e):
        return (i, e)

    p_comps = []
    for i in range(len(S.components)):
        tc = T.components[index_map[i]]
        p_comps.append(tc.rename({e: pname(i, e) for e in tc.edges}))
    p_action = {}
    for g in G.elements:
        perm = {}
        for i in range(len(S.components)):
            gi = S.component_action(g)[i]
            for e in T.components[index_map[i]].edges:
                perm[pname(i, e)] = pname(gi, T.apply(g, e))
        p_action[g] = perm
    P = GTree(G, Forest(tuple(p_comps)), p_action)
    pull = GTreeMap(P, T, {pname(i, e): e for i in range(len(S.components))
                           for e in T.components[index_map[i]].edges})

    comp_of = {e: i for i, c in enumerate(S.components) for e in c.edges}
    sorted_assignment = {e: pname(comp_of[e], f(e)) for e in S.edges}

    iso_parts, pd_parts, pi_parts, po_parts = [], [], [], []
    for i, sc in enumerate(S.components):
        part = TreeMap(sc, P.components[i], {e: sorted_assignment[e] for e in sc.edges})
        fac = factorize_planar(part)
        iso_parts.append(fac.iso)
        pd_parts.append(fac.pd)
        pi_parts.append(fac.pi)
        po_parts.append(fac.po)

    def glue(parts, act):
        comps = tuple(p.target for p in parts)
        keep = {e for c in comps for e in c.edges}
        action = {g: {e: act(g, e) for e in keep} for g in G.elements}
        return GTree(G, Forest(comps), action)

    Sp = glue(iso_parts, S.apply)
    PhiS = glue(pd_parts, P.apply)
    Closure = glue(pi_parts, P.apply)

    def union(parts):
        out = {}
        for p in parts:
            out.update(p.assignment)
        return out

    sorted_iso = GTreeMap(S, Sp, union(iso_parts))
    spd = GTreeMap(Sp, PhiS, union(pd_parts))
    spi = GTreeMap(PhiS, Closure, union(pi_parts))
    spo = GTreeMap(Closure, P, union(po_parts))
    return GMapFactorization(sorted_iso=sorted_iso, spd=spd, spi=spi, spo=spo, pullback=pull)


# -- map enumeration and isomorphism ------------------------------------------


def enumerate_gmaps(S: GTree, T: GTree, first_only: bool = False) -> list[GTreeMap]:
    """All equivariant maps, built from stabilizer-compatible seeds."""
    if S.group.elements != T.group.elements or S.group.table != T.group.table:
        return []
    G = S.group
    comp0 = S.components[0]
    H0 = S.component_stabilizer(0)
    out = []
    for tc in T.components:
        for f0 in enumerate_maps(comp0, tc):
            if any(f0(S.apply(h, e)) != T.apply(h, f0(e)) for h in H0 for e in comp0.edges):
                continue
            assignment = {}
            ok = True
            for g in G.elements:
                for e in comp0.edges:
                    src = S.apply(g, e)
                    val = T.apply(g, f0(e))
                    if assignment.setdefault(src, val) != val:
                        ok = False
                        break
                if not ok:
                    break
            if not ok or len(assignment) != len(S.edges):
                continue
            try:
                gmap = GTreeMap(S, T, assignment)
            except (NotAMap, ValueError):
                continue
            out.append(gmap)
            if first_only:
                return out
    return out


def gmaps_exist(S: GTree, T: GTree) -> bool:
    return bool(enumerate_gmaps(S, T, first_only=True))


def gtrees_isomorphic(T1: GTree, T2: GTree) -> bool:
    if T1.group.elements != T2.group.elements or T1.group.table != T2.group.table:
        return False
    if len(T1.components) != len(T2.components) or len(T1.edges) != len(T2.edges):
        return False
    comp0 = T1.components[0]
    for tc in T2.components:
        for iso in tree_isomorphisms(comp0, tc):
            assignment = {}
            ok = True
            for g in T1.group.elements:
                for e in comp0.edges:
                    src = T1.apply(g, e)
                    val = T2.apply(g, iso[e])
                    if assignment.setdefault(src, val) != val:
                        ok = False
                        break
                if not ok:
                    break
            if not ok or len(assignment) != len(T1.edges):
                continue
            if len(set(assignment.values())) != len(T2.edges):
                continue
            try:
                GTreeMap(T1, T2, assignment)
            except (NotAMap, ValueError):
                continue
            return True
    return False


# -- orbital faces -------------------------------------------------------------


@dataclass(frozen=True)
class OrbitalFace:
    """An edge-injective map lifted from a face of the orbital tree."""

    face: Face
    source: GTree = field(compare=False)
    map: GTreeMap = field(compare=False)
    is_inner: bool = False

    @property
    def removed_orbits(self) -> frozenset:
        return self.face.contracted


def orbital_faces(T: GTree) -> list[OrbitalFace]:
    """Lift each face of the orbital tree to an edge-injective map into T."""
    R = orbital_representation(T)
    rep_of = {}
    for rep, orb in R.orbits.items():
        for e in orb:
            rep_of[e] = rep
    out = []
    for face in enumerate_faces(R.tree):
        keep = set(face.source.edges)
        contracted = set(face.contracted)
        kept_edges = [e for e in T.edges if rep_of[e] in keep]
        up = {}
        for e in kept_edges:
            if rep_of[e] not in face.source.up:
                continue

            def expand(edge):
                seq = []
                for s in T.up_of(edge):
                    if rep_of[s] in keep:
                        seq.append(s)
                    elif rep_of[s] in contracted:
                        seq.extend(expand(s))
                    else:
                        raise AssertionError("face lift hit a removed orbit")
                return seq

            up[e] = tuple(expand(e))
        roots = sorted(R.orbits[face.source.root], key=T._pos.get)
        comps = []
        for r in roots:
            reach = {r}
            stack = [r]
            sub_up = {}
            while stack:
                e = stack.pop()
                if e in up:
                    sub_up[e] = up[e]
                    for s in up[e]:
                        reach.add(s)
                        stack.append(s)
            comps.append(PlanarTree(r, sub_up))
        keep_set = {e for c in comps for e in c.edges}
        action = {g: {e: T.action[g][e] for e in keep_set} for g in T.group.elements}
        source = GTree(T.group, Forest(tuple(comps)), action)
        gmap = GTreeMap(source, T, {e: e for e in keep_set})
        inner = set(face.subtree.edges) == set(R.tree.edges)
        out.append(OrbitalFace(face=face, source=source, map=gmap, is_inner=inner))
    return out


# -- shape enumeration ---------------------------------------------------------


def enumerate_gtrees(G: FiniteGroup, max_vertices: int, max_arity: int) -> list[GTree]:
    """Induced trees for every (subgroup, shape, action) within bounds."""
    out = []
    for H in subgroups(G):
        Hg = restricted_group(G, H)
        for shape in enumerate_shapes(max_vertices, max_arity):
            autos = tree_isomorphisms(shape, shape)
            A = permutation_group(shape.edges, autos)
            for hom in homomorphisms(Hg, A):
                phi = {
                    h: {shape.edges[i]: shape.edges[hom[h][i]] for i in range(len(shape.edges))}
                    for h in H
                }
                out.append(induce(G, H, shape, phi))
    return out


def dedupe_gtrees(trees: Iterable[GTree]) -> list[GTree]:
    out: list[GTree] = []
    for T in trees:
        if not any(gtrees_isomorphic(T, S) for S in out):
            out.append(T)
    return out


# -- weak indexing systems ------------------------------------------------------


class WeakIndexingSystem:
    """A membership predicate on equivariant trees."""

    def __init__(self, group: FiniteGroup, predicate: Callable[[GTree], bool], name: str = ""):
        self.group = group
        self._predicate = predicate
        self.name = name

    def contains(self, T: GTree) -> bool:
        return bool(self._predicate(T))

    def __repr__(self) -> str:
        return f"WeakIndexingSystem({self.name or 'custom'})"


def wis_all(group: FiniteGroup) -> WeakIndexingSystem:
    return WeakIndexingSystem(group, lambda T: True, "all")


def wis_linear(group: FiniteGroup) -> WeakIndexingSystem:
    """Only trees whose components are linear (every vertex unary)."""

    def pred(T: GTree) -> bool:
        return all(len(ss) == 1 for c in T.components for _, ss in c.vertices())

    return WeakIndexingSystem(group, pred, "linear")


def wis_from_families(group: FiniteGroup, families: Mapping[int, Iterable[frozenset]]) -> WeakIndexingSystem:
    """Rebuild the membership predicate from per-arity carrier families."""
    fams = {int(n): {frozenset(c) for c in cs} for n, cs in families.items()}

    def pred(T: GTree) -> bool:
        for orb in T.vertex_orbits():
            carrier, n = corolla_graph_subgroup(g_vertex_corolla(T, orb[0]))
            if carrier not in fams.get(n, set()):
                return False
        return True

    return WeakIndexingSystem(group, pred, "families")


def wis_families(W: WeakIndexingSystem, n: int, max_order: int = 64) -> list[GraphSubgroup]:
    """Graph subgroups whose induced corolla the system contains."""
    out = []
    for gs in graph_subgroups_into(W.group, symmetric(n), max_order=max_order):
        if W.contains(induced_corolla(W.group, gs, n)):
            out.append(gs)
    return out


def induced_corolla(G: FiniteGroup, gs: GraphSubgroup, n: int) -> GTree:
    """The corolla orbit G ._H C_n for a graph subgroup of G x Sigma_n.

    The stored second coordinates of the carrier compose covariantly, so
    they act directly on leaf positions; this mirrors the right-action
    reading used when profiles are relabeled.
    """
    hom = gs.hom_map()
    leaves = tuple(f"x{i}" for i in range(n))
    C = corolla("r", leaves)
    phi = {
        h: {"r": "r", **{leaves[i]: leaves[hom[h][i]] for i in range(n)}}
        for h in gs.subgroup
    }
    return induce(G, gs.subgroup, C, phi)


def f_tree_family(W: WeakIndexingSystem, tree: PlanarTree, max_order: int = 64) -> list[GraphSubgroup]:
    """Graph subgroups of G x Aut(tree) whose induced tree the system contains."""
    autos = tree_isomorphisms(tree, tree)
    A = permutation_group(tree.edges, autos)
    out = []
    for gs in graph_subgroups_into(W.group, A, max_order=max_order):
        hom = gs.hom_map()
        phi = {
            h: {tree.edges[i]: tree.edges[hom[h][i]] for i in range(len(tree.edges))}
            for h in gs.subgroup
        }
        if W.contains(induce(W.group, gs.subgroup, tree, phi)):
            out.append(gs)
    return out


def wis_check(W: WeakIndexingSystem, max_vertices: int = 2, max_arity: int = 2) -> list[tuple]:
    """Sieve and vertex-condition violations on all shapes within bounds."""
    shapes = enumerate_gtrees(W.group, max_vertices, max_arity)
    violations = []
    for T in shapes:
        vertex_ok = all(
            W.contains(g_vertex_corolla(T, orb[0])) for orb in T.vertex_orbits()
        )
        if W.contains(T) != vertex_ok:
            violations.append(("vertex-condition", T))
    inside = [T for T in shapes if W.contains(T)]
    for T in inside:
        for S in shapes:
            if W.contains(S):
                continue
            if gmaps_exist(S, T):
                violations.append(("sieve", (S, T)))
    return violations


# -- serialization ---------------------------------------------------------------


def complete_action(G: FiniteGroup, edges: Iterable, partial: Mapping) -> dict:
    """Extend an action given on generators to the whole group."""
    edges = tuple(edges)
    known = {G.identity: {e: e for e in edges}}
    for g, perm in partial.items():
        known[g] = dict(perm)
    changed = True
    while changed:
        changed = False
        for g in list(known):
            for h in list(known):
                gh = G.mul(g, h)
                composed = {e: known[g][known[h][e]] for e in edges}
                if gh not in known:
                    known[gh] = composed
                    changed = True
                elif known[gh] != composed:
                    raise ValueError(f"inconsistent action at {gh!r}")
    if set(known) != set(G.elements):
        missing = set(G.elements) - set(known)
        raise ValueError(f"action does not determine elements {sorted(map(str, missing))}")
    return known


def gtree_from_json(G: FiniteGroup, data: Mapping) -> GTree:
    """Build a tree from {"forest", "action"} or the {"H", "tree", "phi"} shorthand.

    Permutations may be partial (missing edges are fixed) and need only
    be given on generators; the rest is completed by composition.
    """
    if "H" in data:
        tree = parse_tree(data["tree"])
        members = frozenset(data["H"])
        phi = {}
        for h, perm in data.get("phi", {}).items():
            full = {e: e for e in tree.edges}
            full.update(perm)
            phi[h] = full
        sub = restricted_group(G, subgroups_closure_guard(G, members))
        completed = complete_action(sub, tree.edges, phi)
        return induce(G, members, tree, completed)
    comps = data["forest"]
    if isinstance(comps, str):
        comps = [comps]
    forest = Forest(tuple(parse_tree(c) for c in comps))
    partial = {}
    for g, perm in data.get("action", {}).items():
        full = {e: e for e in forest.edges()}
        full.update(perm)
        partial[g] = full
    action = complete_action(G, forest.edges(), partial)
    return GTree(G, forest, action)


def subgroups_closure_guard(G: FiniteGroup, members: frozenset) -> frozenset:
    if not is_subgroup(G, members):
        raise ValueError("H is not a subgroup")
    return members
