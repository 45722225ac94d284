"""Dense two-phase primal simplex for small LPs.

Maximization over the canonical cone: max c'x s.t. A x <= b, x >= 0,
where b may have negative entries (phase 1 introduces artificials for
those rows). Entering variables follow Dantzig's rule (most positive
reduced cost) while the objective is moving; after a long degenerate
stall Bland's smallest-index rule takes over, whose anti-cycling
guarantee carries the phase to termination. Leaving ties always break
on the smallest basis index. Problem sizes here are a few hundred rows,
so the dense tableau is the right tool.
"""

import numpy as np

from .errors import LpNumericalFailureError

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
ITERATION_LIMIT = "iteration_limit"

__all__ = ["OPTIMAL", "INFEASIBLE", "UNBOUNDED", "ITERATION_LIMIT", "simplex_max"]

_TOL = 1e-9


def simplex_max(c, a_ub, b_ub, max_iter=50000):
    """Solve max c'x subject to a_ub @ x <= b_ub, x >= 0.

    Parameters
    ----------
    c : (n,) array_like
    a_ub : (m, n) array_like
    b_ub : (m,) array_like

    Returns
    -------
    status : str
        One of OPTIMAL, INFEASIBLE, UNBOUNDED, ITERATION_LIMIT.
    x : (n,) ndarray or None
        Primal solution when status is OPTIMAL.
    value : float or None
        Objective value when status is OPTIMAL.
    """
    c = np.asarray(c, dtype=float)
    a = np.atleast_2d(np.asarray(a_ub, dtype=float))
    b = np.asarray(b_ub, dtype=float).copy()
    m, n = a.shape
    if c.shape != (n,) or b.shape != (m,):
        raise ValueError("inconsistent LP dimensions")
    if not (np.isfinite(c).all() and np.isfinite(a).all() and np.isfinite(b).all()):
        raise LpNumericalFailureError("non-finite LP data")

    a = a.copy()
    flip = b < 0
    a[flip] *= -1.0
    b[flip] *= -1.0
    art_rows = np.flatnonzero(flip)
    n_art = art_rows.size
    ncols = n + m + n_art

    # tableau: m constraint rows + phase-2 and phase-1 objective rows
    tab = np.zeros((m + 2, ncols + 1))
    tab[:m, :n] = a
    tab[:m, ncols] = b
    # slack (+1) for straight rows, surplus (-1) for flipped rows
    tab[np.arange(m), n + np.arange(m)] = np.where(flip, -1.0, 1.0)
    basis = n + np.arange(m)
    for j, r in enumerate(art_rows):
        tab[r, n + m + j] = 1.0
        basis[r] = n + m + j

    obj2 = m  # row index of the phase-2 objective (improvement coefficients)
    obj1 = m + 1
    tab[obj2, :n] = c
    if n_art:
        tab[obj1, n + m : ncols] = -1.0
        for r in art_rows:
            tab[obj1] += tab[r]

    allowed = np.ones(ncols, dtype=bool)
    iters = 0

    def pivot(r, s):
        tab[r] /= tab[r, s]
        col = tab[:, s].copy()
        col[r] = 0.0
        tab[:] -= np.outer(col, tab[r])
        basis[r] = s

    def run_phase(obj_row):
        nonlocal iters
        stall_limit = 4 * (m + ncols)
        stall = 0
        best = -tab[obj_row, ncols]
        while True:
            if iters >= max_iter:
                return ITERATION_LIMIT
            red = tab[obj_row, :ncols]
            cand = np.flatnonzero((red > _TOL) & allowed)
            if cand.size == 0:
                return OPTIMAL
            if stall > stall_limit:
                s = cand[0]  # Bland: smallest improving index
            else:
                s = cand[np.argmax(red[cand])]  # Dantzig: steepest reduced cost
            col = tab[:m, s]
            pos = col > _TOL
            if not pos.any():
                return UNBOUNDED
            ratios = tab[:m, ncols][pos] / col[pos]
            rmin = ratios.min()
            rows = np.flatnonzero(pos)[ratios <= rmin + 1e-12 * (1.0 + abs(rmin))]
            r = rows[np.argmin(basis[rows])]  # Bland: smallest basis index out
            pivot(r, s)
            iters += 1
            if not np.isfinite(tab).all():
                raise LpNumericalFailureError("tableau lost finiteness")
            value = -tab[obj_row, ncols]
            if value > best + 1e-12 * (1.0 + abs(best)):
                best = value
                stall = 0
            else:
                stall += 1

    if n_art:
        status = run_phase(obj1)
        if status == ITERATION_LIMIT:
            return ITERATION_LIMIT, None, None
        if status == UNBOUNDED:
            raise LpNumericalFailureError("phase 1 reported unbounded")
        if tab[obj1, ncols] > 1e-7 * (1.0 + abs(b).max()):
            return INFEASIBLE, None, None
        # drive leftover artificials out of the basis where possible
        for r in range(m):
            if basis[r] >= n + m:
                row = tab[r, : n + m]
                nz = np.flatnonzero(np.abs(row) > _TOL)
                if nz.size:
                    pivot(r, nz[0])
        allowed[n + m :] = False

    status = run_phase(obj2)
    if status != OPTIMAL:
        return status, None, None

    x = np.zeros(n)
    for r in range(m):
        if basis[r] < n:
            x[basis[r]] = tab[r, ncols]
    # objective row carries -(value) in its rhs cell after eliminations
    return OPTIMAL, x, float(-tab[obj2, ncols])
