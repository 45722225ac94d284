"""Exact beam/user selection by branch and bound.

The selection problem maximizes the number of simultaneously servable
users (a matching between selected beams and selected users) with a small
per-beam bonus as tie-break, subject to a pilot budget on each selected
user's beam degree, a minimum captured power per selected user, and the
rule that a selected beam must serve somebody. Bounds come from the LP
relaxation of the binaries (self-contained simplex) plus a cheap matching
bound; branching is most-fractional-first, and every node LP point is
rounded and repaired into a candidate incumbent so time-limited runs
still return good selections.
"""

import time
from dataclasses import dataclass

import numpy as np

from .errors import LpNumericalFailureError
from .matching import max_matching
from .simplex import INFEASIBLE, ITERATION_LIMIT, OPTIMAL, simplex_max

__all__ = [
    "BeamGraph",
    "MilpInstance",
    "MilpSolution",
    "lp_relax_bound",
    "solve_milp",
    "write_instance",
    "read_instance",
    "write_solution",
    "read_solution",
]

_TOL = 1e-9
_INT_TOL = 1e-6


def _readonly(a, dtype):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class BeamGraph:
    """Bipartite beam/user graph: weights W and adjacency A = (W > cutoff).

    ``threshold`` holds the per-user absolute cutoff (length K); a scalar
    applies to every user.
    """

    adjacency: np.ndarray
    weights: np.ndarray
    threshold: np.ndarray

    def __post_init__(self):
        w = _readonly(self.weights, float)
        a = _readonly(self.adjacency, np.int8)
        if w.ndim != 2 or a.shape != w.shape:
            raise ValueError("adjacency and weights must be equal-shape 2-D arrays")
        thr = np.asarray(self.threshold, dtype=float)
        if thr.ndim == 0:
            thr = np.full(w.shape[1], float(thr))
        if thr.shape != (w.shape[1],) or np.any(thr <= 0):
            raise ValueError("threshold must be positive, scalar or per-user")
        if np.any((w > thr[None, :]).astype(np.int8) != a):
            raise ValueError("adjacency does not match weights > threshold")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "adjacency", a)
        object.__setattr__(self, "threshold", _readonly(thr, float))

    @classmethod
    def from_weights(cls, weights, threshold):
        w = np.asarray(weights, dtype=float)
        thr = np.asarray(threshold, dtype=float)
        if thr.ndim == 0:
            thr = np.full(w.shape[1], float(thr))
        return cls((w > thr[None, :]).astype(np.int8), w, thr)

    @property
    def num_beams(self):
        return self.weights.shape[0]

    @property
    def num_users(self):
        return self.weights.shape[1]


@dataclass(frozen=True)
class MilpInstance:
    """Selection problem data: graph, pilot budget T_dl, power floor P0."""

    graph: BeamGraph
    t_dl: int
    p0: float
    epsilon_obj: float = None

    def __post_init__(self):
        if not 1 <= self.t_dl <= self.graph.num_beams:
            raise ValueError("t_dl must lie in [1, num_beams]")
        if self.p0 < 0:
            raise ValueError("p0 must be nonnegative")
        eps = self.epsilon_obj
        if eps is None:
            eps = 1.0 / (2.0 * self.graph.num_beams)
        if not 0.0 < eps * self.graph.num_beams < 1.0:
            raise ValueError("epsilon_obj must satisfy 0 < eps * M < 1")
        object.__setattr__(self, "t_dl", int(self.t_dl))
        object.__setattr__(self, "epsilon_obj", float(eps))


@dataclass
class MilpSolution:
    x: np.ndarray
    y: np.ndarray
    z: np.ndarray
    objective: float
    proven_optimal: bool
    gap: float
    nodes: int = 0

    @property
    def selected_beams(self):
        return np.flatnonzero(self.x)

    @property
    def selected_users(self):
        return np.flatnonzero(self.y)


def _evaluate(instance, x, y):
    """Exact check of an integral assignment.

    Returns (feasible, objective, z) where z is the 0/1 matching
    certificate on the induced subgraph.
    """
    g = instance.graph
    a, w = g.adjacency, g.weights
    m, k = a.shape
    x = np.asarray(x, dtype=np.int8)
    y = np.asarray(y, dtype=np.int8)
    deg = x @ a  # selected beams adjacent to each user
    cap = x @ w
    for j in range(k):
        if y[j]:
            if deg[j] > instance.t_dl:
                return False, 0.0, None
            if cap[j] < instance.p0:
                return False, 0.0, None
    served_reach = a @ y
    if np.any((x == 1) & (served_reach == 0)):
        return False, 0.0, None
    sub = a * x[:, None] * y[None, :]
    size, pairs = max_matching(sub)
    z = np.zeros((m, k))
    for r, c in pairs:
        z[r, c] = 1.0
    return True, size + instance.epsilon_obj * int(x.sum()), z


def _lp_relax(instance, fix_x, fix_y):
    """LP bound with binaries partially fixed.

    Returns (status, bound, x_values, y_values); bound includes the
    epsilon credit of beams already fixed to 1. Fixed entries of the
    returned vectors carry their fixed values.
    """
    g = instance.graph
    a, w = g.adjacency, g.weights
    m, k = a.shape
    t_dl, p0, eps = instance.t_dl, instance.p0, instance.epsilon_obj

    live = [
        (mm, kk)
        for mm in range(m)
        for kk in range(k)
        if a[mm, kk] and fix_x[mm] != 0 and fix_y[kk] != 0
    ]
    freex = [mm for mm in range(m) if fix_x[mm] < 0]
    freey = [kk for kk in range(k) if fix_y[kk] < 0]
    nz, nx, ny = len(live), len(freex), len(freey)
    nvar = nz + nx + ny
    xcol = {mm: nz + i for i, mm in enumerate(freex)}
    ycol = {kk: nz + nx + j for j, kk in enumerate(freey)}
    const = eps * int(np.sum(fix_x == 1))

    if nvar == 0:
        feasible, obj, _ = _evaluate(
            instance, np.maximum(fix_x, 0), np.maximum(fix_y, 0)
        )
        return (OPTIMAL, obj, fix_x.astype(float), fix_y.astype(float)) if feasible else (
            INFEASIBLE,
            -np.inf,
            None,
            None,
        )

    rows, rhs = [], []

    def new_row():
        rows.append(np.zeros(nvar))
        return rows[-1]

    for mm in range(m):
        idx = [i for i, (em, _) in enumerate(live) if em == mm]
        if not idx:
            continue
        row = new_row()
        row[idx] = 1.0
        if fix_x[mm] < 0:
            row[xcol[mm]] = -1.0
            rhs.append(0.0)
        else:
            rhs.append(1.0)
    for kk in range(k):
        idx = [i for i, (_, ek) in enumerate(live) if ek == kk]
        if not idx:
            continue
        row = new_row()
        row[idx] = 1.0
        if fix_y[kk] < 0:
            row[ycol[kk]] = -1.0
            rhs.append(0.0)
        else:
            rhs.append(1.0)
    for kk in range(k):
        if fix_y[kk] == 0:
            continue
        base_deg = int(sum(a[mm, kk] for mm in range(m) if fix_x[mm] == 1))
        base_cap = float(sum(w[mm, kk] for mm in range(m) if fix_x[mm] == 1))
        if fix_y[kk] < 0:
            row = new_row()
            for mm in freex:
                row[xcol[mm]] = float(a[mm, kk])
            row[ycol[kk]] = float(m - t_dl)
            rhs.append(float(m - base_deg))
            row = new_row()
            row[ycol[kk]] = p0
            for mm in freex:
                row[xcol[mm]] -= w[mm, kk]
            rhs.append(base_cap)
        else:
            row = new_row()
            for mm in freex:
                row[xcol[mm]] = float(a[mm, kk])
            rhs.append(float(t_dl - base_deg))
            row = new_row()
            for mm in freex:
                row[xcol[mm]] = -w[mm, kk]
            rhs.append(base_cap - p0)
    for mm in range(m):
        if fix_x[mm] == 0:
            continue
        cnt1 = int(sum(a[mm, kk] for kk in range(k) if fix_y[kk] == 1))
        if fix_x[mm] == 1 and cnt1 >= 1:
            continue
        row = new_row()
        if fix_x[mm] < 0:
            row[xcol[mm]] = 1.0
        for kk in freey:
            row[ycol[kk]] -= float(a[mm, kk])
        rhs.append(float(cnt1) - (1.0 if fix_x[mm] == 1 else 0.0))
    for mm in freex:
        row = new_row()
        row[xcol[mm]] = 1.0
        rhs.append(1.0)
    for kk in freey:
        row = new_row()
        row[ycol[kk]] = 1.0
        rhs.append(1.0)

    c = np.zeros(nvar)
    c[:nz] = 1.0
    for mm in freex:
        c[xcol[mm]] = eps

    status, sol, val = simplex_max(c, np.vstack(rows), np.asarray(rhs))
    if status == ITERATION_LIMIT:
        raise LpNumericalFailureError("simplex hit its iteration cap")
    if status != OPTIMAL:
        return INFEASIBLE, -np.inf, None, None

    x_vals = fix_x.astype(float)
    for mm in freex:
        x_vals[mm] = sol[xcol[mm]]
    y_vals = fix_y.astype(float)
    for kk in freey:
        y_vals[kk] = sol[ycol[kk]]
    return OPTIMAL, val + const, x_vals, y_vals


def lp_relax_bound(instance, fix_x=None, fix_y=None):
    """Upper bound on the selection objective with binaries partially fixed.

    ``fix_x`` / ``fix_y`` use -1 for free, 0/1 for fixed (default all
    free). Falls back to the trivial capacity bound when the simplex
    fails numerically; returns -inf for infeasible fixings.
    """
    g = instance.graph
    fix_x = _as_fix(fix_x, g.num_beams)
    fix_y = _as_fix(fix_y, g.num_users)
    try:
        _, bound, _, _ = _lp_relax(instance, fix_x, fix_y)
    except LpNumericalFailureError:
        live = (
            g.adjacency.astype(bool)
            & (fix_x != 0)[:, None]
            & (fix_y != 0)[None, :]
        )
        return float(live.sum()) + instance.epsilon_obj * g.num_beams
    return bound


def _as_fix(fix, size):
    if fix is None:
        return np.full(size, -1, dtype=np.int8)
    fix = np.asarray(fix, dtype=np.int8)
    if fix.shape != (size,):
        raise ValueError(f"fix vector must have shape ({size},)")
    return fix.copy()


def solve_milp(instance, time_limit=60.0):
    """Exact branch and bound over the beam/user binaries.

    Most-fractional branching (ties go to the larger total weight, then
    beams before users, then lower index), LP relaxation bounds with a
    matching-based prebound, LIFO exploration with the rounded child
    first. Returns the incumbent with ``proven_optimal`` False and a
    positive ``gap`` if the time limit expires.

    Parameters
    ----------
    instance : MilpInstance
    time_limit : float, seconds

    Returns
    -------
    MilpSolution
    """
    g = instance.graph
    a, w = g.adjacency, g.weights
    m, k = a.shape
    eps = instance.epsilon_obj
    t0 = time.monotonic()

    weight_x = w.sum(axis=1)
    weight_y = w.sum(axis=0)

    best_obj = 0.0
    best_xy = (np.zeros(m, dtype=np.int8), np.zeros(k, dtype=np.int8))
    for x0, y0 in _initial_incumbents(instance):
        feasible, obj, _ = _evaluate(instance, x0, y0)
        if feasible and obj > best_obj + _TOL:
            best_obj, best_xy = obj, (x0, y0)

    # served users can never exceed the full-graph matching, nor the beam
    # credit eps * m, so this bounds the gap even on an immediate timeout
    match_cap, _ = max_matching(a)
    root_bound = float(match_cap) + eps * m
    root = (np.full(m, -1, dtype=np.int8), np.full(k, -1, dtype=np.int8), root_bound)
    stack = [root]
    nodes = 0
    timed_out = False
    open_bound = 0.0

    while stack:
        if time.monotonic() - t0 > time_limit:
            timed_out = True
            open_bound = max([node[2] for node in stack] + [open_bound])
            break
        fix_x, fix_y, parent_bound = stack.pop()
        if parent_bound <= best_obj + _TOL:
            continue
        nodes += 1

        rows_ok = fix_x != 0
        cols_ok = fix_y != 0
        msize, _ = max_matching(a * rows_ok[:, None] * cols_ok[None, :])
        comb = msize + eps * int(rows_ok.sum())
        if comb <= best_obj + _TOL:
            continue

        if not np.any(fix_x < 0) and not np.any(fix_y < 0):
            feasible, obj, _ = _evaluate(instance, fix_x, fix_y)
            if feasible and obj > best_obj + _TOL:
                best_obj, best_xy = obj, (fix_x.copy(), fix_y.copy())
            continue

        try:
            status, bound, x_vals, y_vals = _lp_relax(instance, fix_x, fix_y)
        except LpNumericalFailureError:
            live = a.astype(bool) & rows_ok[:, None] & cols_ok[None, :]
            status, bound = OPTIMAL, float(live.sum()) + eps * m
            x_vals = y_vals = None
        if status != OPTIMAL or bound <= best_obj + _TOL:
            continue

        if x_vals is not None:
            # round-and-repair the LP point into a global incumbent
            rx, ry = _round_repair(instance, x_vals)
            feasible, obj, _ = _evaluate(instance, rx, ry)
            if feasible and obj > best_obj + _TOL:
                best_obj, best_xy = obj, (rx, ry)
                if bound <= best_obj + _TOL:
                    continue

        if x_vals is None:
            # fallback bound gave no fractional point: branch on first free var
            branch = [("x", mm) for mm in range(m) if fix_x[mm] < 0]
            branch += [("y", kk) for kk in range(k) if fix_y[kk] < 0]
            kind, idx = branch[0]
            near = 1
        else:
            cand = []
            for mm in range(m):
                if fix_x[mm] < 0:
                    v = x_vals[mm]
                    cand.append((abs(v - 0.5), -weight_x[mm], 0, mm, v))
            for kk in range(k):
                if fix_y[kk] < 0:
                    v = y_vals[kk]
                    cand.append((abs(v - 0.5), -weight_y[kk], 1, kk, v))
            frac = [t for t in cand if abs(t[4] - round(t[4])) > _INT_TOL]
            if not frac:
                x_int = np.where(fix_x < 0, np.round(x_vals).astype(np.int8), fix_x)
                y_int = np.where(fix_y < 0, np.round(y_vals).astype(np.int8), fix_y)
                feasible, obj, _ = _evaluate(instance, x_int, y_int)
                if feasible:
                    if obj > best_obj + _TOL:
                        best_obj, best_xy = obj, (x_int, y_int)
                    continue
                # integral LP point failed the exact check: split anyway
                frac = cand
            _, _, kindcode, idx, v = min(frac)
            kind = "x" if kindcode == 0 else "y"
            near = 1 if v >= 0.5 else 0

        for value in (1 - near, near):  # rounded child on top of the stack
            cx, cy = fix_x.copy(), fix_y.copy()
            if kind == "x":
                cx[idx] = value
            else:
                cy[idx] = value
            stack.append((cx, cy, bound))

    x_best, y_best = best_xy
    _, obj, z = _evaluate(instance, x_best, y_best)
    gap = max(0.0, open_bound - best_obj) if timed_out else 0.0
    return MilpSolution(
        x=x_best.astype(np.int8),
        y=y_best.astype(np.int8),
        z=z,
        objective=float(obj),
        proven_optimal=not timed_out,
        gap=float(gap),
        nodes=nodes,
    )


def _initial_incumbents(instance):
    """Cheap integral candidates: full-graph matching, everything on, and
    a greedy user insertion. All are gated through the exact check."""
    a = instance.graph.adjacency
    m, k = a.shape
    _, pairs = max_matching(a)
    x0 = np.zeros(m, dtype=np.int8)
    y0 = np.zeros(k, dtype=np.int8)
    for mm, kk in pairs:
        x0[mm] = 1
        y0[kk] = 1
    x1 = (a.sum(axis=1) > 0).astype(np.int8)
    y1 = np.ones(k, dtype=np.int8)
    return [(x0, y0), (x1, y1), _greedy_incumbent(instance)]


def _round_repair(instance, x_vals):
    """Round a fractional beam vector and repair it into an assignment.

    Users flip on wherever the rounded beam set already meets both the
    degree budget and the power floor; beams serving nobody drop, and the
    two rules iterate to a fixed point. The result may still fail the
    exact check, so callers gate it through _evaluate.
    """
    g = instance.graph
    a = g.adjacency.astype(np.int64)
    w = g.weights
    x = (np.asarray(x_vals, dtype=float) >= 0.5).astype(np.int8)
    y = np.zeros(g.num_users, dtype=np.int8)
    for _ in range(g.num_beams + g.num_users):
        deg = x.astype(np.int64) @ a
        cap = x.astype(float) @ w
        y_new = ((deg <= instance.t_dl) & (cap >= instance.p0)).astype(np.int8)
        x_new = (x.astype(bool) & (a @ y_new > 0)).astype(np.int8)
        if np.array_equal(x_new, x) and np.array_equal(y_new, y):
            break
        x, y = x_new, y_new
    return x, y


def _greedy_incumbent(instance):
    """Insert users by descending total weight, funding each with its
    heaviest beams until the power floor holds; a user that cannot be
    funded inside everyone's degree budget is skipped (its trial beams
    are discarded)."""
    g = instance.graph
    a = g.adjacency.astype(np.int64)
    w = g.weights
    m, k = a.shape
    t_dl, p0 = instance.t_dl, instance.p0
    x = np.zeros(m, dtype=np.int8)
    y = np.zeros(k, dtype=np.int8)
    for kk in np.argsort(-w.sum(axis=0), kind="stable"):
        trial_x = x.copy()
        trial_y = y.copy()
        trial_y[kk] = 1
        deg = trial_x.astype(np.int64) @ a
        if deg[kk] > t_dl:
            continue
        cap = float(w[:, kk] @ trial_x)
        for mm in np.argsort(-w[:, kk], kind="stable"):
            if cap >= p0:
                break
            if trial_x[mm] or w[mm, kk] <= 0.0:
                continue
            if np.any((trial_y == 1) & (deg + a[mm] > t_dl)):
                continue
            if a[mm] @ trial_y == 0:
                continue  # beam would serve nobody
            trial_x[mm] = 1
            deg = deg + a[mm]
            cap += w[mm, kk]
        if cap >= p0:
            x, y = trial_x, trial_y
    return x, y


# ---------------------------------------------------------------------------
# plain-text fixtures


def write_instance(path, instance):
    """Header ``M K T_dl P0 eps`` then M rows of K weights.

    ``eps`` is the adjacency cutoff, so the format only represents graphs
    with a uniform (scalar) threshold.
    """
    g = instance.graph
    thr = g.threshold
    if not np.all(thr == thr[0]):
        raise ValueError("text format requires a uniform threshold")
    with open(path, "w") as fh:
        fh.write(f"{g.num_beams} {g.num_users} {instance.t_dl} {float(instance.p0)!r} {float(thr[0])!r}\n")
        for row in g.weights:
            fh.write(" ".join(repr(float(v)) for v in row) + "\n")


def read_instance(path):
    """Parse the plain-text instance format written by write_instance."""
    with open(path) as fh:
        tokens = fh.readline().split()
        if len(tokens) != 5:
            raise ValueError("instance header must be: M K T_dl P0 eps")
        m, k, t_dl = int(tokens[0]), int(tokens[1]), int(tokens[2])
        p0, eps = float(tokens[3]), float(tokens[4])
        w = np.loadtxt(fh, ndmin=2)
    if w.shape != (m, k):
        raise ValueError(f"expected a {m}x{k} weight block, got {w.shape}")
    return MilpInstance(graph=BeamGraph.from_weights(w, eps), t_dl=t_dl, p0=p0)


def write_solution(path, solution):
    with open(path, "w") as fh:
        fh.write(f"objective {float(solution.objective)!r}\n")
        fh.write(f"proven_optimal {int(solution.proven_optimal)}\n")
        fh.write(f"gap {float(solution.gap)!r}\n")
        fh.write("beams " + " ".join(str(i) for i in solution.selected_beams) + "\n")
        fh.write("users " + " ".join(str(i) for i in solution.selected_users) + "\n")


def read_solution(path):
    """Parse a solution file into a plain dict."""
    out = {}
    with open(path) as fh:
        for line in fh:
            key, *vals = line.split()
            if key == "objective":
                out[key] = float(vals[0])
            elif key == "proven_optimal":
                out[key] = bool(int(vals[0]))
            elif key == "gap":
                out[key] = float(vals[0])
            else:
                out[key] = [int(v) for v in vals]
    return out
