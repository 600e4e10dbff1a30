"""Presheaves on tree windows: representables, subobjects, fixed points, filling."""

import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import planar_trees
from dendrokit.groups import cyclic, dihedral8, restricted_group, subgroup_closure, twisted_fixed_points
from dendrokit.gtrees import (
    GTree,
    complete_action,
    enumerate_gmaps,
    g_stick,
    induce,
    orbital_faces,
    wis_all,
    wis_linear,
)
from dendrokit.treemaps import compose, enumerate_faces, enumerate_maps
from dendrokit.trees import PlanarTree
from dendrokit.dsets import (
    Dendrex,
    SubPresheaf,
    TreeSite,
    TruncatedGDSet,
    attach_cells,
    attachment_from_seed,
    boundary,
    bounded_anodyne_search,
    bounded_completion,
    build_presheaf,
    component_canon,
    degenerate_cells,
    empty_presheaf,
    empty_sub,
    equivariant_cells,
    evaluate_family,
    full_sub,
    generated_subpresheaf,
    genuine_horn_filler,
    horn_filler,
    inclusion_attachment,
    inner_horn,
    inner_orbit_families,
    is_bounded_g_infty,
    is_sigma_free,
    is_strict_segal,
    nondegenerate_decomposition,
    normal_mono_check,
    orbital_horn,
    presheaf_from_json,
    presheaf_maps,
    presheaf_to_json,
    presheaf_to_json as _dumps,
    replay_certificate,
    representable,
    segal_core,
    upsilon_sets,
    upsilon_star,
    validate_presheaf,
    validate_presheaf_map,
)


def trivial_gtree(tree):
    G = cyclic(1)
    return GTree(G, (tree,), {"0": {e: e for e in tree.edges}})


def swap_tree():
    """One component, three levels, the two branches exchanged by Z/2."""
    G = cyclic(2)
    tree = PlanarTree("r", {"r": ("m1", "m2"), "m1": ("l1",), "m2": ("l2",)})
    act = {
        "0": {e: e for e in tree.edges},
        "1": {"r": "r", "m1": "m2", "m2": "m1", "l1": "l2", "l2": "l1"},
    }
    return G, tree, GTree(G, (tree,), act)


def dihedral_tree():
    """Two mirrored components carried by the order-8 dihedral group."""
    G = dihedral8()
    H = subgroup_closure(G, {"pp", "s"})
    t_star = PlanarTree(
        "d", {"d": ("c", "sc"), "c": ("a", "b", "ppa"), "sc": ("sa", "sb", "ppsa")}
    )
    swap_pp = {"a": "ppa", "ppa": "a", "sa": "ppsa", "ppsa": "sa"}
    swap_s = {
        "c": "sc", "sc": "c", "a": "sa", "sa": "a",
        "b": "sb", "sb": "b", "ppa": "ppsa", "ppsa": "ppa",
    }
    fill = lambda d: {**{e: e for e in t_star.edges}, **d}
    phi = complete_action(
        restricted_group(G, H), t_star.edges, {"pp": fill(swap_pp), "s": fill(swap_s)}
    )
    return G, H, t_star, induce(G, H, t_star, phi)


TWO_VERTEX = PlanarTree("r", {"r": ("a", "b"), "a": ("c", "d")})


# -- the site -----------------------------------------------------------------


def test_site_shape_counts():
    assert len(TreeSite(2, 2).order) == 10
    assert len(TreeSite(3, 2).order) == 28
    assert len(TreeSite(3, 3).order) == 73


def test_site_composition_and_identity():
    site = TreeSite(2, 2)
    u, v = "l", "(l)"
    for i, m in enumerate(site.maps(u, v)):
        assert site.classify(u, v, i) is not None
    ident = site.identity_index(v)
    for j in range(len(site.maps(u, v))):
        assert site.compose_index(u, v, v, j, ident) == j


def test_site_canon_rejects_oversized():
    site = TreeSite(2, 2)
    big = PlanarTree("r", {"r": ("a", "b", "c")})
    with pytest.raises(ValueError):
        site.canon(big)


def test_degeneracy_steps_collapse_one_unary_vertex():
    site = TreeSite(2, 2)
    steps = site.degeneracy_steps("(l)")
    assert len(steps) == 1
    (v, idx) = steps[0]
    assert v == "l"
    m = site.maps("(l)", v)[idx]
    assert len(set(m.assignment.values())) == 1


# -- representables -----------------------------------------------------------


def test_representable_of_edge_sees_only_linear_shapes():
    site = TreeSite(2, 2)
    X = representable(site, trivial_gtree(PlanarTree("e", {})))
    validate_presheaf(X)
    counts = {u: len(X.cells[u]) for u in site.order if X.cells[u]}
    assert counts == {"l": 1, "(l)": 1, "((l))": 1}


def test_representable_cells_are_enumerated_maps():
    site = TreeSite(2, 2)
    T = trivial_gtree(TWO_VERTEX)
    X = representable(site, T)
    validate_presheaf(X)
    for u in site.order:
        assert len(X.cells[u]) == len(enumerate_maps(site.shape(u), TWO_VERTEX))


def test_representable_respects_group_action():
    _, _, T = swap_tree()
    site = TreeSite(3, 2)
    X = representable(site, T)
    validate_presheaf(X, composition=False)
    for u in site.order:
        for x in X.cells[u]:
            moved = X.gtables[(u, "1")][x]
            assert moved in set(X.cells[u])
            assert X.gtables[(u, "1")][moved] == x


def test_representable_dihedral_counts():
    G, H, t_star, T = dihedral_tree()
    site = TreeSite(3, 3)
    X = representable(site, T)
    validate_presheaf(X, composition=False)
    assert sum(len(X.cells[u]) for u in site.order) == 532
    corolla2 = "(ll)"
    per_component = len(enumerate_maps(site.shape(corolla2), t_star))
    assert len(X.cells[corolla2]) == 2 * per_component


# -- subobjects against the face poset ----------------------------------------


def face_union_cells(site, tree, keep):
    """Cells reached through the faces selected by ``keep``.

    Independent of the membership predicates: enumerate faces of the
    tree, enumerate maps into each kept face source, compose with the
    face inclusion, and collect images per shape.
    """
    out = {u: set() for u in site.order}
    for face in enumerate_faces(tree):
        if not keep(face):
            continue
        for u in site.order:
            for m in enumerate_maps(site.shape(u), face.source):
                comp = compose(face.map, m)
                out[u].add((0, tuple(comp.assignment[e] for e in site.shape(u).edges)))
    return out


def subobject_sets(sub, site):
    return {u: set(sub.sets[u]) for u in site.order}


@pytest.mark.parametrize("tree", [TWO_VERTEX, PlanarTree("r", {"r": ("a",), "a": ()})])
def test_boundary_matches_face_poset(tree):
    site = TreeSite(2, 2)
    T = trivial_gtree(tree)
    X = representable(site, T)
    got = subobject_sets(boundary(site, T, X), site)
    want = face_union_cells(site, tree, lambda f: set(f.source.edges) != set(tree.edges) or f.contracted)
    assert got == want


def test_inner_horn_matches_face_poset():
    site = TreeSite(2, 2)
    T = trivial_gtree(TWO_VERTEX)
    X = representable(site, T)
    E = frozenset({"a"})
    got = subobject_sets(inner_horn(site, T, E, X), site)

    def keep(face):
        survivors = set(face.source.edges)
        return not (set(TWO_VERTEX.edges) - E) <= survivors

    want = face_union_cells(site, TWO_VERTEX, keep)
    assert got == want


def test_segal_core_matches_face_poset():
    site = TreeSite(2, 2)
    T = trivial_gtree(TWO_VERTEX)
    X = representable(site, T)
    got = subobject_sets(segal_core(site, T, X), site)
    want = face_union_cells(site, TWO_VERTEX, lambda f: f.is_core())
    assert got == want


def test_subobject_chain_two_vertex_counts():
    site = TreeSite(2, 3)
    T = trivial_gtree(TWO_VERTEX)
    X = representable(site, T)
    E = frozenset({"a"})
    sc = segal_core(site, T, X)
    oh = orbital_horn(site, T, E, X)
    ih = inner_horn(site, T, E, X)
    bd = boundary(site, T, X)
    total = lambda S: sum(len(S.sets[u]) for u in site.order)
    assert sc.le(ih) and ih.le(bd) and bd.le(full_sub(X))
    assert oh == ih
    assert (total(sc), total(ih), total(bd)) == (27, 27, 45)
    assert sum(len(X.cells[u]) for u in site.order) == 47
    assert ih != bd
    assert sc == ih


@settings(max_examples=20, deadline=None)
@given(data=st.data())
def test_boundary_predicate_agrees_with_faces_on_random_trees(data):
    tree = data.draw(planar_trees(max_vertices=2, max_arity=2))
    if not any(True for _ in tree.up):
        return
    site = TreeSite(2, 2)
    T = trivial_gtree(tree)
    X = representable(site, T)
    got = subobject_sets(boundary(site, T, X), site)
    want = face_union_cells(
        site, tree, lambda f: set(f.source.edges) != set(tree.edges) or f.contracted
    )
    assert got == want


def test_inner_horn_requires_inner_stable_edges():
    site = TreeSite(3, 2)
    G, tree, T = swap_tree()
    X = representable(site, T)
    with pytest.raises(ValueError):
        inner_horn(site, T, frozenset({"m1"}), X)
    with pytest.raises(ValueError):
        inner_horn(site, T, frozenset({"r"}), X)
    with pytest.raises(ValueError):
        inner_horn(site, T, frozenset(), X)


def test_orbital_horn_is_union_of_qualifying_orbital_faces():
    site = TreeSite(3, 2)
    G, tree, T = swap_tree()
    X = representable(site, T)
    E = frozenset({"m1", "m2"})
    got = subobject_sets(orbital_horn(site, T, E, X), site)

    want = {u: set() for u in site.order}
    for of in orbital_faces(T):
        survivors = {e for comp in of.source.components for e in comp.edges}
        if {"r", "l1"} <= set(of.face.source.edges):
            continue
        for part in of.source.components:
            for u in site.order:
                for m in enumerate_maps(site.shape(u), part):
                    want[u].add((0, tuple(m.assignment[e] for e in site.shape(u).edges)))
    assert got == want


def test_orbital_horn_strictly_below_inner_horn():
    site = TreeSite(3, 2)
    G, tree, T = swap_tree()
    X = representable(site, T)
    E = frozenset({"m1", "m2"})
    oh = orbital_horn(site, T, E, X)
    ih = inner_horn(site, T, E, X)
    assert oh.le(ih) and oh != ih
    witness = (0, ("r", "m1", "l2"))
    assert witness in ih.sets["(ll)"]
    assert witness not in oh.sets["(ll)"]


def test_orbital_horn_coincides_with_inner_horn_for_trivial_group():
    site = TreeSite(2, 2)
    T = trivial_gtree(TWO_VERTEX)
    X = representable(site, T)
    E = frozenset({"a"})
    assert orbital_horn(site, T, E, X) == inner_horn(site, T, E, X)


def test_dihedral_subobject_counts():
    G, H, t_star, T = dihedral_tree()
    site = TreeSite(3, 3)
    X = representable(site, T)
    E = frozenset(T.orbit("c"))
    total = lambda S: sum(len(S.sets[u]) for u in site.order)
    sc = segal_core(site, T, X)
    oh = orbital_horn(site, T, E, X)
    ih = inner_horn(site, T, E, X)
    bd = boundary(site, T, X)
    assert sc.le(oh) and oh.le(ih) and ih.le(bd)
    assert (total(sc), total(oh), total(ih), total(bd)) == (268, 268, 388, 388)


def test_subpresheaf_closure_is_enforced():
    site = TreeSite(2, 2)
    T = trivial_gtree(TWO_VERTEX)
    X = representable(site, T)
    bad = {u: set() for u in site.order}
    full_cell = next(x for x in X.cells["((ll)l)"] if len(set(x[1])) == 5)
    bad["((ll)l)"] = {full_cell}
    with pytest.raises(ValueError):
        SubPresheaf(X, bad)


def test_generated_subpresheaf_of_full_cell_is_everything():
    site = TreeSite(2, 2)
    T = trivial_gtree(TWO_VERTEX)
    X = representable(site, T)
    full_cell = next(x for x in X.cells["((ll)l)"] if len(set(x[1])) == 5)
    gen = generated_subpresheaf(X, [Dendrex("((ll)l)", full_cell)])
    assert gen == full_sub(X)


def test_union_intersection_lattice():
    site = TreeSite(2, 2)
    T = trivial_gtree(TWO_VERTEX)
    X = representable(site, T)
    E = frozenset({"a"})
    sc = segal_core(site, T, X)
    ih = inner_horn(site, T, E, X)
    bd = boundary(site, T, X)
    assert sc.union(ih) == ih
    assert sc.intersection(ih) == sc
    assert ih.union(bd) == bd
    assert bd.intersection(ih) == ih


# -- Segal condition and degeneracies -----------------------------------------


def test_representables_are_strict_segal():
    site = TreeSite(2, 2)
    for tree in (TWO_VERTEX, PlanarTree("r", {"r": ("a",), "a": ("b",)})):
        T = trivial_gtree(tree)
        ok, witness = is_strict_segal(representable(site, T))
        assert ok, witness


def test_boundary_is_not_strict_segal():
    site = TreeSite(2, 2)
    T = trivial_gtree(TWO_VERTEX)
    X = representable(site, T)
    Y = boundary(site, T, X).to_presheaf()
    validate_presheaf(Y)
    ok, witness = is_strict_segal(Y)
    assert not ok
    assert witness["shape"] == "((ll)l)"
    assert witness["problem"] == "core-compatible family has no filler"


def test_degenerate_cells_of_edge_representable():
    site = TreeSite(2, 2)
    X = representable(site, trivial_gtree(PlanarTree("e", {})))
    degs = degenerate_cells(X)
    assert {u for u in site.order if degs[u]} == {"(l)", "((l))"}


def test_nondegenerate_decomposition_steps():
    site = TreeSite(2, 2)
    X = representable(site, trivial_gtree(PlanarTree("e", {})))
    cell = X.cells["((l))"][0]
    m, core = nondegenerate_decomposition(X, Dendrex("((l))", cell))
    assert core.shape == "l"
    assert set(m.assignment.values()) == {site.shape("l").edges[0]}
    top = Dendrex("l", X.cells["l"][0])
    m2, core2 = nondegenerate_decomposition(X, top)
    assert m2.is_identity() and core2 == top


def test_sigma_free_representable_and_fixed_cell():
    site = TreeSite(2, 2)
    T = trivial_gtree(PlanarTree("r", {"r": ("a", "b")}))
    X = representable(site, T)
    ok, _ = is_sigma_free(X)
    assert ok

    Y = symmetric_arrow_presheaf(site)
    ok, witness = is_sigma_free(Y)
    assert not ok
    assert witness.shape == "(ll)"


def symmetric_arrow_presheaf(site):
    """One color and one fully symmetric operation in each arity.

    Every nullary-free shape carries exactly one cell, so every
    restriction table is forced; the single binary cell is fixed by the
    leaf swap.
    """
    G = cyclic(1)

    def nullary_free(u):
        return all(site.shape(u).up.values())

    cells = {u: (("x", u),) if nullary_free(u) else () for u in site.order}
    tables = {}
    for u in site.order:
        for v in site.order:
            for idx in range(len(site.maps(u, v))):
                tables[(u, v, idx)] = {x: cells[u][0] for x in cells[v]}
    gtables = {(u, "0"): {x: x for x in cells[u]} for u in site.order}
    Y = TruncatedGDSet(site, G, cells, tables, gtables)
    validate_presheaf(Y)
    return Y


# -- normality of inclusions --------------------------------------------------


def test_empty_into_representable_is_normal():
    site = TreeSite(2, 2)
    T = trivial_gtree(PlanarTree("r", {"r": ("a", "b")}))
    X = representable(site, T)
    ok, _ = normal_mono_check(empty_sub(X), full_sub(X))
    assert ok


def test_fixed_cell_breaks_normality():
    site = TreeSite(2, 2)
    Y = symmetric_arrow_presheaf(site)
    ok, witness = normal_mono_check(empty_sub(Y), full_sub(Y))
    assert not ok
    assert witness["shape"] == "(ll)"


def test_normality_relative_to_indexing_systems():
    site = TreeSite(2, 2)
    G, tree, T = swap_tree()
    corolla = PlanarTree("r", {"r": ("m1", "m2")})
    act = {"0": {e: e for e in corolla.edges},
           "1": {"r": "r", "m1": "m2", "m2": "m1"}}
    C = GTree(G, (corolla,), act)
    X = representable(site, C)
    ok_all, _ = normal_mono_check(empty_sub(X), full_sub(X), wis=wis_all(G))
    assert ok_all
    ok_lin, witness = normal_mono_check(empty_sub(X), full_sub(X), wis=wis_linear(G))
    assert not ok_lin
    assert witness["shape"] == "(ll)"


def test_normal_mono_check_requires_inclusion():
    site = TreeSite(2, 2)
    T = trivial_gtree(TWO_VERTEX)
    X = representable(site, T)
    bd = boundary(site, T, X)
    with pytest.raises(ValueError):
        normal_mono_check(full_sub(X), bd)


# -- equivariant families ------------------------------------------------------


def test_families_match_twisted_fixed_points():
    site = TreeSite(3, 2)
    G, tree, T = swap_tree()
    X = representable(site, T)
    fams = equivariant_cells(X, T)
    assert len(fams) == 6
    assert len(fams) == len(enumerate_gmaps(T, T))

    (k0, naming) = component_canon(site, T)[0]
    action = {g: X.gtables[(k0, g)] for g in G.elements}
    twist = {}
    for g in G.elements:
        assignment = {naming[e]: naming[T.apply(g, e)] for e in tree.edges}
        idx = site.map_index(k0, k0, assignment)
        twist[g] = X.tables[(k0, k0, idx)]
    assert len(twisted_fixed_points(X.cells[k0], action, twist)) == 6


def test_families_on_sticks():
    site = TreeSite(3, 2)
    G, tree, T = swap_tree()
    X = representable(site, T)
    fixed = g_stick(G, G.elements)
    free = g_stick(G, ("0",))
    assert len(equivariant_cells(X, fixed)) == 1
    assert len(equivariant_cells(X, free)) == len(X.cells["l"])


def test_dihedral_families_match_twisted_fixed_points():
    G, H, t_star, T = dihedral_tree()
    site = TreeSite(3, 3)
    X = representable(site, T)
    fams = equivariant_cells(X, T)
    assert len(fams) == 8
    assert len(fams) == len(enumerate_gmaps(T, T))

    (k0, naming) = component_canon(site, T)[0]
    action = {g: X.gtables[(k0, g)] for g in H}
    twist = {}
    for g in H:
        assignment = {naming[e]: naming[T.apply(g, e)] for e in t_star.edges}
        idx = site.map_index(k0, k0, assignment)
        twist[g] = X.tables[(k0, k0, idx)]
    assert len(twisted_fixed_points(X.cells[k0], action, twist)) == 8


def test_evaluate_family_is_natural():
    site = TreeSite(3, 2)
    G, tree, T = swap_tree()
    X = representable(site, T)
    fam = equivariant_cells(X, T)[0]
    rep = representable(site, T)
    for (u, v, idx), table in rep.tables.items():
        for y in rep.cells[v]:
            lhs = evaluate_family(X, T, fam, u, table[y])
            rhs = X.tables[(u, v, idx)][evaluate_family(X, T, fam, v, y)]
            assert lhs == rhs


# -- the fixed-point functor ---------------------------------------------------


def test_upsilon_values_and_functoriality():
    site = TreeSite(3, 2)
    G, tree, T = swap_tree()
    X = representable(site, T)
    shapes = [g_stick(G, G.elements), g_stick(G, ("0",)), T]
    D = upsilon_star(X, gshapes=shapes, check=True)
    assert [len(c) for c in D.cells] == [1, 5, 6]


def test_upsilon_on_trivial_group_reindexes_cells():
    site = TreeSite(2, 2)
    T = trivial_gtree(TWO_VERTEX)
    X = representable(site, T)
    shapes = [trivial_gtree(PlanarTree("e", {})), T]
    D = upsilon_star(X, gshapes=shapes, check=True)
    assert len(D.cells[0]) == len(X.cells["l"])
    assert len(D.cells[1]) == len(enumerate_maps(TWO_VERTEX, TWO_VERTEX))


def test_upsilon_preserves_unions():
    site = TreeSite(3, 2)
    G, tree, T = swap_tree()
    X = representable(site, T)
    E = frozenset({"m1", "m2"})
    A = segal_core(site, T, X)
    B = inner_horn(site, T, E, X)
    shapes = [g_stick(G, G.elements), g_stick(G, ("0",)), T]
    ua = upsilon_sets(X, A, shapes)
    ub = upsilon_sets(X, B, shapes)
    uu = upsilon_sets(X, A.union(B), shapes)
    ui = upsilon_sets(X, A.intersection(B), shapes)
    for i in range(len(shapes)):
        assert uu[i] == ua[i] | ub[i]
        assert ui[i] == ua[i] & ub[i]


def test_upsilon_of_boundary_drops_full_families():
    site = TreeSite(3, 2)
    G, tree, T = swap_tree()
    X = representable(site, T)
    shapes = [g_stick(G, G.elements), g_stick(G, ("0",)), T]
    us = upsilon_sets(X, boundary(site, T, X), shapes)
    assert [len(us[i]) for i in range(3)] == [1, 5, 4]


def test_genuine_horn_filler_unique_on_representable():
    site = TreeSite(3, 2)
    G, tree, T = swap_tree()
    X = representable(site, T)
    shapes = [g_stick(G, G.elements), g_stick(G, ("0",)), T]
    D = upsilon_star(X, gshapes=shapes, check=True)
    t_idx = 2
    E = frozenset({"m1", "m2"})
    required = set(tree.edges) - E
    for z in D.cells[t_idx]:
        att = {}
        for i in range(len(shapes)):
            for k, m in enumerate(D.maps[(i, t_idx)]):
                if any(
                    required <= {m(e) for e in comp.edges}
                    for comp in m.source.components
                ):
                    continue
                att[(i, k)] = D.tables[(i, t_idx, k)][z]
        fills = genuine_horn_filler(D, t_idx, E, att)
        assert fills == [z]


# -- presheaf maps and ordinary horn filling -----------------------------------


def test_presheaf_maps_from_horn_count_endomaps():
    site = TreeSite(3, 2)
    G, tree, T = swap_tree()
    X = representable(site, T)
    E = frozenset({"m1", "m2"})
    horn = inner_horn(site, T, E, X)
    sols = presheaf_maps(horn, X)
    assert len(sols) == len(enumerate_gmaps(T, T))
    for sol in sols:
        validate_presheaf_map(horn, X, sol)


def test_horn_filler_unique_on_representable():
    site = TreeSite(3, 2)
    G, tree, T = swap_tree()
    X = representable(site, T)
    E = frozenset({"m1", "m2"})
    horn = inner_horn(site, T, E, X)
    att = inclusion_attachment(horn, X)
    assert len(horn_filler(X, T, horn, att)) == 1


def test_horn_filler_empty_on_boundary_presheaf():
    site = TreeSite(3, 2)
    G, tree, T = swap_tree()
    X = representable(site, T)
    E = frozenset({"m1", "m2"})
    Y = boundary(site, T, X).to_presheaf()
    horn = inner_horn(site, T, E, X)
    att = inclusion_attachment(horn, Y)
    assert horn_filler(Y, T, horn, att) == []


def test_attachment_from_seed_detects_ambiguity():
    site = TreeSite(2, 2)
    G1 = cyclic(1)
    eta = trivial_gtree(PlanarTree("e", {}))
    rep_eta = representable(site, eta)
    X = empty_presheaf(site, G1)
    X = attach_cells(X, empty_sub(rep_eta), {}, "a")
    X = attach_cells(X, empty_sub(rep_eta), {}, "b")
    sub = full_sub(rep_eta)
    with pytest.raises(ValueError):
        attachment_from_seed(sub, X, {})


# -- gluing, completion, certificates ------------------------------------------


def arrow_category_presheaf():
    """Colors a, b, c with arrows f: b -> a and h: c -> b, no composite."""
    site = TreeSite(2, 2)
    G1 = cyclic(1)
    eta = trivial_gtree(PlanarTree("e", {}))
    C1 = trivial_gtree(PlanarTree("t", {"t": ("s",)}))
    rep_eta = representable(site, eta)
    rep_c1 = representable(site, C1)
    X = empty_presheaf(site, G1)
    for tag in ("a", "b", "c"):
        X = attach_cells(X, empty_sub(rep_eta), {}, tag)
    color = lambda tag: ("+", tag, (0, ("e",)))
    for tag, (root, leaf) in (("f", ("a", "b")), ("h", ("b", "c"))):
        bd = boundary(site, C1, rep_c1)
        seed = {
            ("l", (0, ("t",))): color(root),
            ("l", (0, ("s",))): color(leaf),
        }
        X = attach_cells(X, bd, attachment_from_seed(bd, X, seed), tag)
    validate_presheaf(X)
    return site, X


def test_attach_cells_counts():
    site, X = arrow_category_presheaf()
    assert {u: len(X.cells[u]) for u in site.order if X.cells[u]} == {
        "l": 3, "(l)": 5, "((l))": 7,
    }


def test_completion_adjoins_exactly_the_composite():
    site, X = arrow_category_presheaf()
    C2 = trivial_gtree(PlanarTree("r", {"r": ("m",), "m": ("l",)}))
    pool = [C2]
    ok, witness = is_bounded_g_infty(X, pool)
    assert not ok

    Z = bounded_completion(X, pool, budget=8)
    validate_presheaf(Z)
    assert {u: len(Z.cells[u]) for u in site.order if Z.cells[u]} == {
        "l": 3, "(l)": 6, "((l))": 10,
    }
    ok, _ = is_bounded_g_infty(Z, pool)
    assert ok
    fresh = [x for x in Z.cells["(l)"] if x not in X.cells["(l)"]]
    assert fresh == [("+", "fill0", (0, ("r", "l")))]


def test_completion_budget_error():
    site, X = arrow_category_presheaf()
    C2 = trivial_gtree(PlanarTree("r", {"r": ("m",), "m": ("l",)}))
    with pytest.raises(RuntimeError):
        bounded_completion(X, [C2], budget=0)


def test_completion_of_representable_is_identity():
    site = TreeSite(3, 2)
    G, tree, T = swap_tree()
    X = representable(site, T)
    assert bounded_completion(X, [T]) is X
    ok, _ = is_bounded_g_infty(X, [T])
    assert ok


def test_anodyne_certificate_horn_to_full():
    site = TreeSite(3, 2)
    G, tree, T = swap_tree()
    X = representable(site, T)
    E = frozenset({"m1", "m2"})
    A = inner_horn(site, T, E, X)
    B = full_sub(X)
    cert = bounded_anodyne_search(A, B, [T])
    assert cert is not None and len(cert) == 1
    assert cert[0]["E"] == sorted(E)
    assert replay_certificate(A, B, [T], cert)


def test_anodyne_certificate_segal_core_to_full():
    site = TreeSite(2, 2)
    T = trivial_gtree(TWO_VERTEX)
    X = representable(site, T)
    A = segal_core(site, T, X)
    B = full_sub(X)
    cert = bounded_anodyne_search(A, B, [T])
    assert cert is not None and len(cert) == 1
    assert replay_certificate(A, B, [T], cert)


def test_anodyne_search_fails_from_boundary():
    site = TreeSite(2, 3)
    T = trivial_gtree(TWO_VERTEX)
    X = representable(site, T)
    A = boundary(site, T, X)
    B = full_sub(X)
    assert bounded_anodyne_search(A, B, [T], budget=50) is None


def test_replay_rejects_tampered_certificate():
    site = TreeSite(3, 2)
    G, tree, T = swap_tree()
    X = representable(site, T)
    E = frozenset({"m1", "m2"})
    A = inner_horn(site, T, E, X)
    B = full_sub(X)
    cert = bounded_anodyne_search(A, B, [T])
    assert not replay_certificate(A, A, [T], cert)
    assert not replay_certificate(A, B, [T], cert + cert)


def test_inner_orbit_families():
    G, tree, T = swap_tree()
    assert inner_orbit_families(T) == [frozenset({"m1", "m2"})]
    G2, H, t_star, T2 = dihedral_tree()
    assert inner_orbit_families(T2) == [frozenset(T2.orbit("c"))]


# -- serialization --------------------------------------------------------------


def test_presheaf_json_round_trip():
    site = TreeSite(2, 2)
    T = trivial_gtree(TWO_VERTEX)
    X = representable(site, T)
    data = json.loads(json.dumps(presheaf_to_json(X)))
    Y = presheaf_from_json(data)
    assert {u: len(Y.cells[u]) for u in site.order} == {
        u: len(X.cells[u]) for u in site.order
    }
    assert len(presheaf_maps(full_sub(Y), Y)) == len(presheaf_maps(full_sub(X), X))


def test_presheaf_json_round_trip_with_action():
    site = TreeSite(3, 2)
    G, tree, T = swap_tree()
    X = representable(site, T)
    Y = presheaf_from_json(presheaf_to_json(X), composition=False)
    assert Y.group.elements == X.group.elements
    for u in site.order:
        moved = [Y.gtables[(u, "1")][x] for x in Y.cells[u]]
        assert sorted(moved) == sorted(Y.cells[u])


def test_validate_presheaf_catches_broken_table():
    site = TreeSite(2, 2)
    T = trivial_gtree(TWO_VERTEX)
    X = representable(site, T)
    key = next(k for k in X.tables if X.tables[k])
    bad = dict(X.tables)
    table = dict(bad[key])
    some = next(iter(table))
    others = [x for x in X.cells[key[0]] if x != table[some]]
    if not others:
        pytest.skip("no alternative cell to corrupt with")
    table[some] = others[0]
    bad[key] = table
    Y = TruncatedGDSet(site, X.group, X.cells, bad, X.gtables)
    with pytest.raises(ValueError):
        validate_presheaf(Y)
