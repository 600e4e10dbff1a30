"""Maps of planar trees: validity, classification, factorization, faces.

A map is an assignment of edges that sends every vertex, read as a
generating relation, to a relation that holds in the target.  The
classifier reports the standard classes (isomorphism, tall, face,
inner and outer face, degeneracy, convex, planar), and every valid map
factors strictly uniquely as an isomorphism followed by a planar
degeneracy, a planar inner face, and a planar outer face.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Iterable, Iterator, Mapping, Sequence

from .trees import (
    Forest,
    PlanarTree,
    broad_holds,
    corolla,
    expansion_order,
    leq_d,
    relations_above,
    stick,
)


class NotAMap(ValueError):
    """Raised when an edge assignment breaks a generating relation."""

    def __init__(self, message: str, relation=None):
        super().__init__(message)
        self.relation = relation


class TreeMap:
    """An edge assignment between two planar trees."""

    __slots__ = ("source", "target", "assignment")

    def __init__(self, source: PlanarTree, target: PlanarTree, assignment: Mapping[str, str]):
        for e in source.edges:
            if e not in assignment:
                raise ValueError(f"assignment misses edge {e!r}")
            target.check_edge(assignment[e])
        self.source = source
        self.target = target
        self.assignment = {e: assignment[e] for e in source.edges}

    def __call__(self, e: str) -> str:
        return self.assignment[e]

    def image(self) -> set[str]:
        return set(self.assignment.values())

    def is_identity(self) -> bool:
        return self.source == self.target and all(
            v == e for e, v in self.assignment.items()
        )

    def key(self) -> tuple:
        return (
            self.source.key(),
            self.target.key(),
            tuple(self.assignment[e] for e in self.source.edges),
        )

    def __eq__(self, other) -> bool:
        if not isinstance(other, TreeMap):
            return NotImplemented
        return self.key() == other.key()

    def __hash__(self) -> int:
        return hash(self.key())

    def __repr__(self) -> str:
        pairs = ", ".join(f"{e}>{v}" for e, v in self.assignment.items())
        return f"TreeMap({pairs})"


def identity_map(tree: PlanarTree) -> TreeMap:
    return TreeMap(tree, tree, {e: e for e in tree.edges})


def compose(g: TreeMap, f: TreeMap) -> TreeMap:
    """The composite g after f."""
    if f.target != g.source:
        raise ValueError("maps are not composable")
    return TreeMap(f.source, g.target, {e: g(f(e)) for e in f.source.edges})


def check_valid(f: TreeMap) -> None:
    """Raise NotAMap unless every generating relation is preserved."""
    for target, sources in f.source.vertices():
        image = tuple(f(s) for s in sources)
        if not broad_holds(f.target, image, f(target)):
            raise NotAMap(
                f"relation {sources} <= {target} maps to {image} <= {f(target)}, "
                "which does not hold in the target",
                relation=(sources, target),
            )


def is_valid(f: TreeMap) -> bool:
    try:
        check_valid(f)
    except NotAMap:
        return False
    return True


@dataclass(frozen=True)
class MapClass:
    """Classification flags of a valid tree map."""

    iso: bool
    planar: bool
    tall: bool
    face: bool
    degeneracy: bool
    inner_face: bool
    outer_face: bool
    convex: bool

    def labels(self) -> str:
        """The letter labels d/i/o/t/f/p of the classes that apply."""
        out = []
        for flag, letter in (
            (self.degeneracy, "d"),
            (self.inner_face, "i"),
            (self.outer_face, "o"),
            (self.tall, "t"),
            (self.face, "f"),
            (self.planar, "p"),
        ):
            if flag:
                out.append(letter)
        return "".join(out)


def _vertex_onto_vertex(f: TreeMap, target: str, sources: Sequence[str]) -> bool:
    """Does the vertex map onto a full vertex of the target tree?"""
    u = f(target)
    if not f.target.has_vertex(u):
        return False
    image = [f(s) for s in sources]
    expected = f.target.up[u]
    return len(image) == len(expected) and set(image) == set(expected)


def validate_map(f: TreeMap) -> MapClass:
    """Check validity and classify; raises NotAMap on a broken relation."""
    check_valid(f)
    s, t = f.source, f.target
    values = [f(e) for e in s.edges]
    injective = len(set(values)) == len(values)
    surjective = set(values) == set(t.edges)
    tall = f(s.root) == t.root and {f(l) for l in s.leaves()} == set(t.leaves())
    degeneracy = surjective and all(f(l) in t.leaves() for l in s.leaves())

    onto = True
    convex = True
    planar = True
    for target, sources in s.vertices():
        hits_vertex = _vertex_onto_vertex(f, target, sources)
        onto = onto and hits_vertex
        collapsed = len(sources) == 1 and f(sources[0]) == f(target)
        convex = convex and (hits_vertex or collapsed)
        image = tuple(f(x) for x in sources)
        if planar and image != expansion_order(t, set(image), f(target)):
            planar = False

    iso = injective and surjective
    if iso:
        inverse = TreeMap(t, s, {f(e): e for e in s.edges})
        iso = is_valid(inverse)
    return MapClass(
        iso=iso,
        planar=planar,
        tall=tall,
        face=injective,
        degeneracy=degeneracy,
        inner_face=tall and injective,
        outer_face=injective and onto,
        convex=convex,
    )


# -- factorization --------------------------------------------------------


@dataclass(frozen=True)
class PlanarFactorization:
    """The strictly unique iso / degeneracy / inner / outer splitting."""

    iso: TreeMap
    pd: TreeMap
    pi: TreeMap
    po: TreeMap

    def compose(self) -> TreeMap:
        return compose(self.po, compose(self.pi, compose(self.pd, self.iso)))

    def parts(self) -> tuple[TreeMap, TreeMap, TreeMap, TreeMap]:
        return (self.iso, self.pd, self.pi, self.po)


def factorize_planar(f: TreeMap) -> PlanarFactorization:
    """Split a valid map as iso, planar degeneracy, planar inner, planar outer.

    The middle tree keeps the names of the image edges; the outer stage
    is the witness closure of the image relations inside the target.
    """
    check_valid(f)
    s, t = f.source, f.target

    survivors = []  # (source vertex, image target, image tuple in planar order)
    phi_up: dict[str, tuple[str, ...]] = {}
    for target, sources in s.vertices():
        u = f(target)
        image = tuple(f(x) for x in sources)
        if len(sources) == 1 and image[0] == u:
            survivors.append((target, u, None))
            continue
        tup = expansion_order(t, set(image), u)
        if u in phi_up and phi_up[u] != tup:
            raise NotAMap(f"edges mapping to {u!r} carry conflicting vertices")
        phi_up[u] = tup
        survivors.append((target, u, tup))
    phi = PlanarTree(f(s.root), phi_up)

    c_up: dict[str, tuple[str, ...]] = {}
    for u, tup in phi_up.items():
        stop = set(tup)
        stack = [u]
        while stack:
            x = stack.pop()
            if x in stop:
                continue
            c_up[x] = t.up[x]
            stack.extend(t.up[x])
    closure = PlanarTree(f(s.root), c_up)

    sp_up: dict[str, tuple[str, ...]] = {}
    for target, sources in s.vertices():
        u = f(target)
        if len(sources) == 1 and f(sources[0]) == u:
            sp_up[target] = tuple(sources)
        else:
            rank = {x: i for i, x in enumerate(phi_up[u])}
            sp_up[target] = tuple(sorted(sources, key=lambda x: rank[f(x)]))
    s_planar = PlanarTree(s.root, sp_up)

    iso = TreeMap(s, s_planar, {e: e for e in s.edges})
    pd = TreeMap(s_planar, phi, dict(f.assignment))
    pi = TreeMap(phi, closure, {e: e for e in phi.edges})
    po = TreeMap(closure, t, {e: e for e in closure.edges})
    return PlanarFactorization(iso=iso, pd=pd, pi=pi, po=po)


# -- outer closures and the leaf-root corolla ------------------------------


def outer_closure(tree: PlanarTree, image: Iterable[str]) -> tuple[PlanarTree, TreeMap]:
    """Smallest outer face of the tree spanning the given edges.

    Every requested edge that carries a vertex keeps that vertex, so the
    closure of the image of a tall map receives an inner face from it.
    """
    edges = set(image)
    if not edges:
        raise ValueError("cannot span an empty edge set")
    for e in edges:
        tree.check_edge(e)
    probe = next(iter(edges))
    path = [probe]
    while tree.parent(path[-1]) is not None:
        path.append(tree.parent(path[-1]))
    meet = next(m for m in path if all(leq_d(tree, a, m) for a in edges))

    sub_up: dict[str, tuple[str, ...]] = {}
    for a in edges:
        e = a
        while e != meet:
            p = tree.parent(e)
            sub_up[p] = tree.up[p]
            e = p
    for a in edges:
        if tree.has_vertex(a):
            sub_up[a] = tree.up[a]
    sub = PlanarTree(meet, sub_up)
    return sub, TreeMap(sub, tree, {e: e for e in sub.edges})


def leaf_root(tree: PlanarTree) -> tuple[PlanarTree, TreeMap]:
    """The corolla on the tree's leaves and root, with its tall map."""
    if not tree.up:
        return tree, identity_map(tree)
    cor = corolla(tree.root, tree.leaves())
    return cor, TreeMap(cor, tree, {e: e for e in cor.edges})


# -- enumeration ------------------------------------------------------------


def enumerate_maps(source: PlanarTree, target: PlanarTree) -> list[TreeMap]:
    """All valid maps between two trees, by per-vertex relation choice."""
    rels = {u: relations_above(target, u) for u in target.edges}
    vertices = source.vertices()
    out: list[TreeMap] = []

    def extend(idx: int, partial: dict[str, str]) -> None:
        if idx == len(vertices):
            out.append(TreeMap(source, target, dict(partial)))
            return
        v_target, v_sources = vertices[idx]
        for rel in rels[partial[v_target]]:
            if len(rel) != len(v_sources):
                continue
            for perm in itertools.permutations(rel):
                for s, val in zip(v_sources, perm):
                    partial[s] = val
                extend(idx + 1, partial)
        for s in v_sources:
            partial.pop(s, None)

    for root_image in target.edges:
        extend(0, {source.root: root_image})
    return out


# -- faces -------------------------------------------------------------------


@dataclass(frozen=True)
class Face:
    """A planar face of a tree: an outer subtree with contracted inner edges."""

    subtree: PlanarTree
    contracted: frozenset
    source: PlanarTree
    map: TreeMap

    def is_outer(self) -> bool:
        return not self.contracted

    def is_core(self) -> bool:
        """A single edge or a single whole vertex."""
        return not self.contracted and len(self.subtree.up) <= 1


def contract_inner(tree: PlanarTree, inner: Iterable[str]) -> PlanarTree:
    """Remove inner edges, splicing each vertex into its parent's slot."""
    up = dict(tree.up)
    below = {s: t for t, srcs in up.items() for s in srcs}
    for i in inner:
        if i == tree.root or i not in up:
            raise ValueError(f"{i!r} is not an inner edge")
        sources = up.pop(i)
        parent = below[i]
        slot = up[parent].index(i)
        up[parent] = up[parent][:slot] + sources + up[parent][slot + 1 :]
        for s in sources:
            below[s] = parent
    return PlanarTree(tree.root, up)


def outer_subtrees(tree: PlanarTree) -> list[PlanarTree]:
    """All rooted full subtrees, the sources of planar outer faces."""
    out = []

    def grow(e: str) -> list[dict[str, tuple[str, ...]]]:
        options: list[dict[str, tuple[str, ...]]] = [{}]
        if tree.has_vertex(e):
            children = [grow(s) for s in tree.up[e]]
            for combo in itertools.product(*children):
                merged = {e: tree.up[e]}
                for part in combo:
                    merged.update(part)
                options.append(merged)
        return options

    for m in tree.edges:
        for up in grow(m):
            out.append(PlanarTree(m, up))
    return out


def enumerate_faces(tree: PlanarTree) -> list[Face]:
    """Every planar face of the tree, as subtree plus contraction data."""
    faces = []
    for sub in outer_subtrees(tree):
        inner = sub.inner_edges()
        for k in range(len(inner) + 1):
            for chosen in itertools.combinations(inner, k):
                src = contract_inner(sub, chosen)
                fmap = TreeMap(src, tree, {e: e for e in src.edges})
                faces.append(
                    Face(
                        subtree=sub,
                        contracted=frozenset(chosen),
                        source=src,
                        map=fmap,
                    )
                )
    return faces


def face_leq(f1: Face, f2: Face) -> bool:
    """Does the first face factor through the second, respecting names?"""
    if not set(f1.source.edges) <= set(f2.source.edges):
        return False
    between = TreeMap(f1.source, f2.source, {e: e for e in f1.source.edges})
    return is_valid(between)


def face_core(tree: PlanarTree) -> list[Face]:
    """The faces that are a single edge or a single vertex corolla."""
    return [f for f in enumerate_faces(tree) if f.is_core()]


# -- forest maps -------------------------------------------------------------


class ForestMap:
    """A map of forests: an index map plus one tree map per component."""

    __slots__ = ("source", "target", "assignment", "index_map", "parts")

    def __init__(self, source: Forest, target: Forest, assignment: Mapping[str, str]):
        self.source = source
        self.target = target
        self.assignment = dict(assignment)
        index_map = []
        parts = []
        for comp in source.components:
            images = {target.component_of(self.assignment[e]) for e in comp.edges}
            if len(images) != 1:
                raise NotAMap(
                    f"component rooted at {comp.root!r} is torn across target components"
                )
            j = images.pop()
            index_map.append(j)
            parts.append(
                TreeMap(comp, target.components[j], {e: self.assignment[e] for e in comp.edges})
            )
        self.index_map = tuple(index_map)
        self.parts = tuple(parts)

    def __call__(self, e: str) -> str:
        return self.assignment[e]

    def is_independent(self) -> bool:
        """Roots of components sharing a target tree must be incomparable."""
        grouped: dict[int, list[str]] = {}
        for comp, j in zip(self.source.components, self.index_map):
            grouped.setdefault(j, []).append(self.assignment[comp.root])
        for j, roots in grouped.items():
            t = self.target.components[j]
            for x, y in itertools.combinations(roots, 2):
                if leq_d(t, x, y) or leq_d(t, y, x):
                    return False
        return True

    def key(self) -> tuple:
        return (
            self.source.key(),
            self.target.key(),
            tuple(sorted(self.assignment.items())),
        )

    def __eq__(self, other) -> bool:
        if not isinstance(other, ForestMap):
            return NotImplemented
        return self.key() == other.key()

    def __hash__(self) -> int:
        return hash(self.key())


def check_valid_forest(f: ForestMap) -> None:
    for part in f.parts:
        check_valid(part)
