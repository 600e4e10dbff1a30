"""Finite groups stored by multiplication table.

Everything here runs at desk scale (groups of order at most a few
dozen), so validation, subgroup enumeration, and homomorphism search
are all exhaustive.  Permutations compose left-after-right throughout;
GraphSubgroup is the single place where the right-action convention
of profile relabeling is converted (see phi_op_map).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping, Sequence


class FiniteGroup:
    """A finite group given by labeled elements and a full table."""

    __slots__ = ("elements", "table", "identity", "_inverse")

    def __init__(self, elements: Sequence, table: Mapping):
        self.elements = tuple(elements)
        if len(set(self.elements)) != len(self.elements):
            raise ValueError("repeated element label")
        self.table = {(a, b): table[(a, b)] for a in self.elements for b in self.elements}
        idents = [
            e
            for e in self.elements
            if all(self.table[(e, x)] == x and self.table[(x, e)] == x for x in self.elements)
        ]
        if len(idents) != 1:
            raise ValueError("no two-sided identity")
        self.identity = idents[0]
        for a, b, c in itertools.product(self.elements, repeat=3):
            if self.table[(self.table[(a, b)], c)] != self.table[(a, self.table[(b, c)])]:
                raise ValueError(f"non-associative triple {(a, b, c)}")
        inverse = {}
        for a in self.elements:
            invs = [b for b in self.elements if self.table[(a, b)] == self.identity]
            if len(invs) != 1 or self.table[(invs[0], a)] != self.identity:
                raise ValueError(f"element {a!r} has no inverse")
            inverse[a] = invs[0]
        self._inverse = inverse

    def mul(self, a, b):
        return self.table[(a, b)]

    def inv(self, a):
        return self._inverse[a]

    def order(self) -> int:
        return len(self.elements)

    def __contains__(self, a) -> bool:
        return a in self._inverse

    def __repr__(self) -> str:
        return f"FiniteGroup({len(self.elements)} elements)"


def validate_group(elements: Sequence, table: Mapping) -> FiniteGroup:
    """Alias for the constructor; raises with a witness on a broken axiom."""
    return FiniteGroup(elements, table)


def cyclic(n: int) -> FiniteGroup:
    elements = [str(i) for i in range(n)]
    table = {(str(i), str(j)): str((i + j) % n) for i in range(n) for j in range(n)}
    return FiniteGroup(elements, table)


def dihedral8() -> FiniteGroup:
    """The dihedral group of order 8, generated by p (order 4) and s.

    Labels are words p^i s^j written as "p" repeated i times followed by
    an optional "s"; the identity is "1".  The defining relation is
    s p = p^3 s.
    """

    def label(i, j):
        word = "p" * i + "s" * j
        return word if word else "1"

    def decode(w):
        i = len(w) - len(w.lstrip("p")) if w != "1" else 0
        j = 1 if w.endswith("s") else 0
        return i, j

    elements = [label(i, j) for j in (0, 1) for i in range(4)]
    table = {}
    for a in elements:
        for b in elements:
            i, j = decode(a)
            k, l = decode(b)
            sign = -1 if j else 1
            table[(a, b)] = label((i + sign * k) % 4, (j + l) % 2)
    return FiniteGroup(elements, table)


def symmetric(n: int) -> FiniteGroup:
    """Permutations of range(n) as image tuples, composed left after right."""
    elements = list(itertools.permutations(range(n)))
    table = {}
    for a in elements:
        for b in elements:
            table[(a, b)] = tuple(a[b[i]] for i in range(n))
    return FiniteGroup(elements, table)


def apply_perm(perm: tuple, i: int) -> int:
    return perm[i]


def permutation_group(domain: Sequence, perms: Iterable[Mapping]) -> FiniteGroup:
    """Close a set of permutation dicts of the domain into a table group.

    Elements are image tuples in domain order; composition is function
    composition (left acts after right).
    """
    domain = tuple(domain)
    index = {x: i for i, x in enumerate(domain)}
    start = {tuple(index[p[x]] for x in domain) for p in perms}
    start.add(tuple(range(len(domain))))
    elements = set(start)
    frontier = list(start)
    while frontier:
        a = frontier.pop()
        for b in list(elements):
            for c in (tuple(a[b[i]] for i in range(len(domain))), tuple(b[a[i]] for i in range(len(domain)))):
                if c not in elements:
                    elements.add(c)
                    frontier.append(c)
    elements = sorted(elements)
    table = {
        (a, b): tuple(a[b[i]] for i in range(len(domain))) for a in elements for b in elements
    }
    return FiniteGroup(elements, table)


def subgroup_closure(G: FiniteGroup, seed: Iterable) -> frozenset:
    """Smallest subgroup containing the seed elements."""
    members = {G.identity}
    members.update(seed)
    frontier = list(members)
    while frontier:
        a = frontier.pop()
        for b in list(members):
            for c in (G.mul(a, b), G.mul(b, a)):
                if c not in members:
                    members.add(c)
                    frontier.append(c)
    return frozenset(members)


def subgroups(G: FiniteGroup, max_order: int = 64) -> list[frozenset]:
    """All subgroups, ordered by size then by element positions."""
    if G.order() > max_order:
        raise ValueError(f"group order {G.order()} exceeds bound {max_order}")
    found = {frozenset([G.identity])}
    queue = [frozenset([G.identity])]
    while queue:
        H = queue.pop()
        for g in G.elements:
            if g in H:
                continue
            bigger = subgroup_closure(G, H | {g})
            if bigger not in found:
                found.add(bigger)
                queue.append(bigger)
    rank = {e: i for i, e in enumerate(G.elements)}
    return sorted(found, key=lambda H: (len(H), sorted(rank[h] for h in H)))


def is_subgroup(G: FiniteGroup, subset: Iterable) -> bool:
    members = set(subset)
    if G.identity not in members:
        return False
    return all(G.mul(a, b) in members for a in members for b in members)


def left_cosets(G: FiniteGroup, H: Iterable) -> list[tuple]:
    """Left cosets gH as (representative, frozenset), reps minimal in element order."""
    members = frozenset(H)
    rank = {e: i for i, e in enumerate(G.elements)}
    seen: set[frozenset] = set()
    out = []
    for g in G.elements:
        coset = frozenset(G.mul(g, h) for h in members)
        if coset not in seen:
            seen.add(coset)
            rep = min(coset, key=lambda x: rank[x])
            out.append((rep, coset))
    return out


def generating_sequence(G: FiniteGroup, subset: Iterable | None = None) -> list:
    """A short generating sequence, grown greedily."""
    members = frozenset(subset) if subset is not None else frozenset(G.elements)
    gens: list = []
    span = subgroup_closure(G, gens)
    for g in sorted(members, key=lambda x: G.elements.index(x)):
        if g not in span:
            gens.append(g)
            span = subgroup_closure(G, gens)
        if span == members:
            break
    return gens


def homomorphisms(H: FiniteGroup, K: FiniteGroup) -> list[dict]:
    """All group homomorphisms, as element dictionaries."""
    gens = generating_sequence(H)
    if not gens:
        return [{H.identity: K.identity}]
    out = []

    def extend(idx: int, partial: dict) -> None:
        if idx == len(gens):
            closed = _close_hom(H, K, dict(partial))
            if closed is not None:
                out.append(closed)
            return
        for k in K.elements:
            partial[gens[idx]] = k
            extend(idx + 1, partial)
        del partial[gens[idx]]

    extend(0, {H.identity: K.identity})
    return out


def _close_hom(H: FiniteGroup, K: FiniteGroup, partial: dict) -> dict | None:
    """Propagate a partial map on generators to a full hom, or fail."""
    changed = True
    while changed:
        changed = False
        for a in list(partial):
            for b in list(partial):
                c = H.mul(a, b)
                image = K.mul(partial[a], partial[b])
                if c in partial:
                    if partial[c] != image:
                        return None
                else:
                    partial[c] = image
                    changed = True
    if len(partial) != H.order():
        return None
    return partial


def is_homomorphism(H_elems: Iterable, G: FiniteGroup, phi: Mapping, K: FiniteGroup) -> bool:
    members = list(H_elems)
    return all(phi[G.mul(a, b)] == K.mul(phi[a], phi[b]) for a in members for b in members)


def restricted_group(G: FiniteGroup, H: Iterable) -> FiniteGroup:
    members = [e for e in G.elements if e in frozenset(H)]
    table = {(a, b): G.mul(a, b) for a in members for b in members}
    return FiniteGroup(members, table)


def direct_product(G: FiniteGroup, K: FiniteGroup) -> FiniteGroup:
    elements = [(g, k) for g in G.elements for k in K.elements]
    table = {
        ((g1, k1), (g2, k2)): (G.mul(g1, g2), K.mul(k1, k2))
        for (g1, k1) in elements
        for (g2, k2) in elements
    }
    return FiniteGroup(elements, table)


def are_conjugate_subgroups(G: FiniteGroup, H1: Iterable, H2: Iterable) -> bool:
    a, b = frozenset(H1), frozenset(H2)
    return any(
        frozenset(G.mul(G.mul(g, h), G.inv(g)) for h in a) == b for g in G.elements
    )


# -- graph subgroups -------------------------------------------------------


@dataclass(frozen=True)
class GraphSubgroup:
    """A subgroup of G x A meeting A trivially, i.e. the graph of a hom.

    `hom` stores the second coordinates directly: with composition
    written left-after-right this is an honest homomorphism H -> A.
    Texts that let permutations act on the right instead record the
    pointwise inverse; `phi_op` provides that form, and this class is
    the only place the two conventions are converted.
    """

    carrier: frozenset
    subgroup: frozenset
    hom: tuple  # sorted (h, second coordinate) pairs

    def hom_map(self) -> dict:
        return dict(self.hom)

    def phi_op_map(self, A: FiniteGroup) -> dict:
        return {h: A.inv(s) for h, s in self.hom}


def carrier_from_pair(H: Iterable, hom: Mapping) -> frozenset:
    """The graph {(h, hom(h))} inside the product group."""
    return frozenset((h, hom[h]) for h in H)


def graph_subgroups_into(G: FiniteGroup, A: FiniteGroup, max_order: int = 64) -> list[GraphSubgroup]:
    """All subgroups of G x A meeting 1 x A trivially, as (H, hom) pairs."""
    product = direct_product(G, A)
    out = []
    for gamma in subgroups(product, max_order=max_order):
        inside = {s for (g, s) in gamma if g == G.identity}
        if len(inside) != 1:
            continue
        H = frozenset(g for (g, s) in gamma)
        hom = {g: s for (g, s) in gamma}
        out.append(
            GraphSubgroup(
                carrier=gamma,
                subgroup=H,
                hom=tuple(sorted(hom.items(), key=lambda kv: G.elements.index(kv[0]))),
            )
        )
    return out


def graph_subgroups(G: FiniteGroup, n: int, max_order: int = 64) -> list[GraphSubgroup]:
    """Graph subgroups of G x Sigma_n."""
    return graph_subgroups_into(G, symmetric(n), max_order=max_order)


# -- serialization ---------------------------------------------------------


def group_to_json(G: FiniteGroup) -> dict:
    """Serialize as the element list plus a nested multiplication table."""
    table: dict[str, dict] = {a: {} for a in G.elements}
    for (a, b), c in G.table.items():
        table[a][b] = c
    return {"elements": list(G.elements), "table": table}


def group_from_json(data: Mapping) -> FiniteGroup:
    """Build a group from {"elements", "table"} or {"generators", "degree"}.

    A table may be a nested dict {a: {b: c}} or a list of rows indexed
    like the element list.  Generators are permutations of range(degree)
    given as image lists; the group they generate is returned with
    image-tuple labels.
    """
    if "elements" in data:
        elements = list(data["elements"])
        raw = data["table"]
        table = {}
        if isinstance(raw, dict):
            for a in elements:
                for b in elements:
                    table[(a, b)] = raw[a][b]
        else:
            for i, a in enumerate(elements):
                for j, b in enumerate(elements):
                    table[(a, b)] = raw[i][j]
        return FiniteGroup(elements, table)
    if "generators" in data:
        degree = int(data["degree"])
        domain = range(degree)
        perms = [{i: int(p[i]) for i in domain} for p in data["generators"]]
        return permutation_group(domain, perms)
    raise ValueError("group JSON needs 'elements' or 'generators'")


# -- twisted fixed points -----------------------------------------------------


def twisted_fixed_points(items: Iterable, action: Mapping, twist: Mapping) -> list:
    """Elements on which each group member's action equals its twist.

    Both arguments map group elements to either dicts or callables on
    the item set; the result keeps the input order.
    """

    def as_fn(move) -> Callable:
        if callable(move):
            return move
        return move.__getitem__

    keys = set(action) | set(twist)
    pairs = [(as_fn(action[h]), as_fn(twist[h])) for h in keys]
    return [x for x in items if all(act(x) == tw(x) for act, tw in pairs)]
