"""Maximum-cardinality bipartite matching via augmenting paths."""

import numpy as np

__all__ = ["max_matching"]


def max_matching(adjacency):
    """Maximum matching between rows (beams) and columns (users).

    Classic augmenting-path search, deterministic: users are processed in
    index order and neighbors tried in index order.

    Parameters
    ----------
    adjacency : (M, K) array_like of {0, 1}

    Returns
    -------
    size : int
    pairs : list of (row, col) tuples, sorted by row index
    """
    a = np.asarray(adjacency)
    if a.ndim != 2:
        raise ValueError("adjacency must be 2-D")
    m, k = a.shape
    neighbors = [np.flatnonzero(a[:, j]) for j in range(k)]
    row_match = np.full(m, -1, dtype=int)
    col_match = np.full(k, -1, dtype=int)

    def augment(col, visited):
        for row in neighbors[col]:
            if visited[row]:
                continue
            visited[row] = True
            if row_match[row] < 0 or augment(row_match[row], visited):
                row_match[row] = col
                col_match[col] = row
                return True
        return False

    size = 0
    for col in range(k):
        if augment(col, np.zeros(m, dtype=bool)):
            size += 1
    pairs = [(r, int(row_match[r])) for r in range(m) if row_match[r] >= 0]
    return size, pairs
