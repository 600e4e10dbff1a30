"""Shared hypothesis strategies for tree-shaped test data."""

from hypothesis import strategies as st

from dendrokit.trees import PlanarTree


@st.composite
def planar_trees(draw, max_vertices=5, max_arity=3):
    """Random planar tree grown by attaching vertices to leaves."""
    n_vertices = draw(st.integers(min_value=0, max_value=max_vertices))
    up = {}
    counter = [0]

    def fresh():
        counter[0] += 1
        return f"e{counter[0] - 1}"

    root = fresh()
    open_edges = [root]
    for _ in range(n_vertices):
        if not open_edges:
            break
        spot = draw(st.integers(min_value=0, max_value=len(open_edges) - 1))
        target = open_edges.pop(spot)
        arity = draw(st.integers(min_value=0, max_value=max_arity))
        children = tuple(fresh() for _ in range(arity))
        up[target] = children
        open_edges.extend(children)
    return PlanarTree(root, up)


@st.composite
def renamings(draw, tree):
    """Random injective rename of a tree's edges onto fresh names."""
    perm = draw(st.permutations(range(len(tree.edges))))
    return {e: f"x{i}" for e, i in zip(tree.edges, perm)}
