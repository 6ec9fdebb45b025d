from hypothesis import strategies as st

from egocluster.graph import Graph


def star_graph(center: int, leaves) -> Graph:
    return Graph.from_edges([(center, leaf) for leaf in leaves])


def path_graph(n: int, start: int = 1) -> Graph:
    return Graph.from_edges([(i, i + 1) for i in range(start, start + n - 1)])


def disjoint_stars(k: int, leaves: int) -> Graph:
    edges = []
    for s in range(k):
        c = s * (leaves + 1)
        edges += [(c, c + j) for j in range(1, leaves + 1)]
    return Graph.from_edges(edges)


@st.composite
def small_graphs(draw, max_nodes: int = 30, weighted: bool = True):
    n = draw(st.integers(2, max_nodes))
    pairs = draw(st.lists(
        st.tuples(st.integers(0, n - 1), st.integers(0, n - 1)).filter(lambda p: p[0] != p[1]),
        max_size=4 * n,
    ))
    weights = st.sampled_from([0.5, 1.0, 2.0, 3.0]) if weighted else st.just(1.0)
    edges = [(u, v, draw(weights)) for u, v in pairs]
    return Graph.from_edges(edges, nodes=range(n))
