"""Internal revised simplex for the local-weight decomposition program.

Solves  max sum(q_j)  s.t.  sum_j q_j D_j <= p  entrywise,  q >= 0,
where D_j runs over all deterministic local strategies of a box with the
given dimensions.  Strategy columns are 0/1 with one nonzero per input pair,
so the dual has one variable per box entry and one covering constraint per
strategy; pricing a strategy amounts to summing duals over its support.

Two modes share one pivot loop:

* dense-dual: every dual constraint is priced each iteration, evaluated
  through the per-party decomposition (for a fixed Alice function the best
  Bob function splits across Bob inputs), never by materializing the matrix.
* cutting-plane: a growing pool of strategy columns is solved to optimality,
  then the same decomposition separates the most violated constraints.

This is not a general LP interface; it exists only for this program family.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

DEGENERATE_TOL = 1e-12


class SolverConvergenceError(RuntimeError):
    """Iteration cap hit; carries the best primal/dual bounds reached."""

    def __init__(self, message: str, local_weight_low: float, local_weight_high: float,
                 iterations: int):
        super().__init__(
            f"{message} (local weight in [{local_weight_low:.12g}, "
            f"{local_weight_high:.12g}] after {iterations} iterations)"
        )
        self.local_weight_low = local_weight_low
        self.local_weight_high = local_weight_high
        self.iterations = iterations


@dataclass
class StrategyProblem:
    """Precomputed tables for one box's strategy LP."""

    dims: tuple[int, int, int, int]
    p_flat: np.ndarray

    def __post_init__(self):
        xc, yc, ac, bc = self.dims
        self.m = xc * yc * ac * bc
        self.n_alice = ac**xc
        self.n_bob = bc**yc
        self.n_strat = self.n_alice * self.n_bob
        self.fa = _digit_table(self.n_alice, xc, ac)
        self.fb = _digit_table(self.n_bob, yc, bc)
        self.pow_b = np.array([bc**y for y in range(yc)], dtype=np.int64)
        # flat entry index = ((x*yc + y)*ac + a)*bc + b
        x_grid, y_grid = np.meshgrid(np.arange(xc), np.arange(yc), indexing="ij")
        self.base_xy = ((x_grid * yc + y_grid) * ac * bc).ravel()
        self._x_of_pair = x_grid.ravel()
        self._y_of_pair = y_grid.ravel()

    def support(self, j: int) -> np.ndarray:
        """Flat entry indices hit by strategy j (one per input pair)."""
        ja, jb = divmod(j, self.n_bob)
        bc = self.dims[3]
        return (
            self.base_xy
            + self.fa[ja][self._x_of_pair] * bc
            + self.fb[jb][self._y_of_pair]
        ).astype(np.int64)

    def supports(self, ids: np.ndarray) -> np.ndarray:
        """(len(ids), x_card*y_card) support index matrix."""
        ids = np.asarray(ids, dtype=np.int64)
        ja, jb = np.divmod(ids, self.n_bob)
        bc = self.dims[3]
        return (
            self.base_xy[None, :]
            + self.fa[ja][:, self._x_of_pair] * bc
            + self.fb[jb][:, self._y_of_pair]
        ).astype(np.int64)


def _digit_table(count: int, positions: int, base: int) -> np.ndarray:
    j = np.arange(count, dtype=np.int64)
    table = np.empty((count, positions), dtype=np.int16)
    for pos in range(positions):
        table[:, pos] = (j // base**pos) % base
    return table


def _alice_masses(prob: StrategyProblem, lam: np.ndarray, ja_slice: slice):
    """For each Alice function in the slice: the Bob-minimized dual mass.

    Returns (mass, g) where g[ja, y, b] is the dual weight collected on Bob
    input y / output b, so mass[ja] = sum_y min_b g[ja, y, b].
    """
    xc, yc, ac, bc = prob.dims
    lam4 = lam.reshape(prob.dims)
    fa = prob.fa[ja_slice]
    g = np.zeros((fa.shape[0], yc, bc))
    for x in range(xc):
        g += lam4[x][:, fa[:, x], :].transpose(1, 0, 2)
    mass = g.min(axis=2).sum(axis=1)
    return mass, g


def _best_bob(prob: StrategyProblem, g_row: np.ndarray) -> int:
    """Smallest Bob function index attaining the per-input minima."""
    return int((g_row.argmin(axis=1) * prob.pow_b).sum())


def _smallest_violated_bob(prob: StrategyProblem, g_row: np.ndarray,
                           threshold: float) -> int | None:
    """Smallest jb with sum_y g_row[y, fb(y)] < threshold, or None."""
    yc, bc = g_row.shape
    mins = g_row.min(axis=1)
    if mins.sum() >= threshold:
        return None
    # Choose digits from the highest weight down, greedily taking the
    # smallest output that still admits a completion below the threshold.
    suffix = np.concatenate(([0.0], np.cumsum(mins)))  # suffix[y] = sum of mins below y
    jb = 0
    acc = 0.0
    for y in range(yc - 1, -1, -1):
        for b in range(bc):
            if acc + g_row[y, b] + suffix[y] < threshold:
                acc += g_row[y, b]
                jb += b * int(prob.pow_b[y])
                break
        else:  # pragma: no cover - guarded by the mins.sum() check
            raise AssertionError("violated Bob digit search failed")
    return jb


@dataclass
class SimplexResult:
    objective: float
    basis: np.ndarray
    basic_values: np.ndarray
    duals: np.ndarray
    iterations: int
    separation_rounds: int
    pool_size: int
    max_reduced_cost: float
    dual_min_mass: float
    bland_pivots: int
    refactorizations: int


class RevisedSimplex:
    """One solve of the strategy LP; state is confined to the instance."""

    def __init__(self, prob: StrategyProblem, mode: str, tol: float,
                 iter_cap: int, batch: int = 64, refactor_every: int = 128,
                 stall_limit: int = 200):
        if mode not in ("dense-dual", "cutting-plane"):
            raise ValueError(f"unknown solver mode {mode!r}")
        self.prob = prob
        self.mode = mode
        self.tol = tol
        self.iter_cap = iter_cap
        self.batch = batch
        self.refactor_every = refactor_every
        self.stall_limit = stall_limit
        m = prob.m
        self.basis = prob.n_strat + np.arange(m, dtype=np.int64)
        self.binv = np.eye(m)
        self.xb = prob.p_flat.copy()
        self.cb = np.zeros(m)
        self.pool: list[int] = []
        self.pool_set: set[int] = set()
        self.pool_sup = np.empty((0, len(prob.base_xy)), dtype=np.int64)
        self.iterations = 0
        self.bland_pivots = 0
        self.refactorizations = 0
        self.since_refactor = 0
        self.degenerate_run = 0
        self.bland = False

    # -- basis linear algebra ------------------------------------------------

    def _column(self, col_id: int) -> np.ndarray:
        m = self.prob.m
        col = np.zeros(m)
        if col_id >= self.prob.n_strat:
            col[col_id - self.prob.n_strat] = 1.0
        else:
            col[self.prob.support(col_id)] = 1.0
        return col

    def _refactorize(self):
        m = self.prob.m
        b_mat = np.column_stack([self._column(c) for c in self.basis])
        self.binv = np.linalg.solve(b_mat, np.eye(m))
        self.xb = self.binv @ self.prob.p_flat
        np.clip(self.xb, 0.0, None, out=self.xb)
        self.refactorizations += 1
        self.since_refactor = 0

    def _duals(self) -> np.ndarray:
        return self.cb @ self.binv

    # -- pricing -------------------------------------------------------------

    def _price_pool(self, lam: np.ndarray):
        """Best reduced cost among pool strategies and slacks."""
        best_rc, best_id = -np.inf, -1
        if self.pool:
            mass = lam[self.pool_sup].sum(axis=1)
            rc = 1.0 - mass
            k = int(np.argmax(rc))
            best_rc, best_id = float(rc[k]), self.pool[k]
        slack_rc = -lam
        k = int(np.argmax(slack_rc))
        if slack_rc[k] > best_rc:
            best_rc, best_id = float(slack_rc[k]), self.prob.n_strat + k
        return best_rc, best_id

    def _price_pool_bland(self, lam: np.ndarray):
        if self.pool:
            mass = lam[self.pool_sup].sum(axis=1)
            violated = [self.pool[i] for i in range(len(self.pool))
                        if 1.0 - mass[i] > self.tol]
            if violated:
                j = min(violated)
                return 1.0 - float(lam[self.prob.support(j)].sum()), j
        slack_viol = np.flatnonzero(-lam > self.tol)
        if slack_viol.size:
            k = int(slack_viol[0])
            return float(-lam[k]), self.prob.n_strat + k
        return 0.0, -1

    def _price_full(self, lam: np.ndarray):
        """Most violated strategy over the whole set (dense-dual pricing)."""
        prob = self.prob
        best_mass, best_ja = np.inf, -1
        chunk = 4096
        for start in range(0, prob.n_alice, chunk):
            sl = slice(start, min(start + chunk, prob.n_alice))
            mass, g = _alice_masses(prob, lam, sl)
            k = int(np.argmin(mass))
            if mass[k] < best_mass - 0.0:
                best_mass, best_ja = float(mass[k]), start + k
                best_g = g[k]
        jb = _best_bob(prob, best_g)
        return best_mass, best_ja * prob.n_bob + jb

    def _price_full_bland(self, lam: np.ndarray):
        """Smallest strategy id with reduced cost above tol, else None."""
        prob = self.prob
        threshold = 1.0 - self.tol
        chunk = 4096
        for start in range(0, prob.n_alice, chunk):
            sl = slice(start, min(start + chunk, prob.n_alice))
            mass, g = _alice_masses(prob, lam, sl)
            hits = np.flatnonzero(mass < threshold)
            if hits.size:
                ja = start + int(hits[0])
                jb = _smallest_violated_bob(prob, g[int(hits[0])], threshold)
                return ja * prob.n_bob + jb
        return None

    def _entering(self, lam: np.ndarray):
        if self.bland:
            if self.mode == "dense-dual":
                j = self._price_full_bland(lam)
                if j is not None:
                    return 1.0 - float(lam[self.prob.support(j)].sum()), j
                slack_viol = np.flatnonzero(-lam > self.tol)
                if slack_viol.size:
                    k = int(slack_viol[0])
                    return float(-lam[k]), self.prob.n_strat + k
                return 0.0, -1
            return self._price_pool_bland(lam)
        if self.mode == "dense-dual":
            mass, j = self._price_full(lam)
            best_rc, best_id = 1.0 - mass, j
            slack_rc = -lam
            k = int(np.argmax(slack_rc))
            if slack_rc[k] > best_rc:
                best_rc, best_id = float(slack_rc[k]), self.prob.n_strat + k
            return best_rc, best_id
        return self._price_pool(lam)

    # -- pivoting ------------------------------------------------------------

    def _pivot(self, enter_id: int):
        w = self.binv @ self._column(enter_id)
        cand = np.flatnonzero(w > 1e-11)
        if cand.size == 0:
            raise SolverConvergenceError(
                "unbounded direction in strategy LP (malformed problem)",
                float(self.cb @ self.xb), 1.0, self.iterations,
            )
        ratios = np.maximum(self.xb[cand], 0.0) / w[cand]
        theta = ratios.min()
        ties = cand[ratios <= theta + 1e-12 * (1.0 + abs(theta))]
        if self.bland:
            row = int(ties[np.argmin(self.basis[ties])])
        else:
            row = int(ties[np.argmax(w[ties])])
        theta = max(self.xb[row], 0.0) / w[row]
        # update basic values and the inverse
        self.xb -= theta * w
        self.xb[row] = theta
        np.clip(self.xb, 0.0, None, out=self.xb)
        pivot_row = self.binv[row] / w[row]
        self.binv -= np.outer(w, pivot_row)
        self.binv[row] = pivot_row
        self.basis[row] = enter_id
        self.cb[row] = 1.0 if enter_id < self.prob.n_strat else 0.0
        self.iterations += 1
        self.since_refactor += 1
        if self.bland:
            self.bland_pivots += 1
        if theta > DEGENERATE_TOL:
            self.degenerate_run = 0
            self.bland = False
        else:
            self.degenerate_run += 1
            if self.degenerate_run >= self.stall_limit:
                self.bland = True
        if self.since_refactor >= self.refactor_every:
            self._refactorize()

    def _solve_current(self) -> np.ndarray:
        """Pivot until the current column set prices out; returns duals."""
        while True:
            lam = self._duals()
            rc, enter_id = self._entering(lam)
            if enter_id < 0 or rc <= self.tol:
                return lam
            if self.iterations >= self.iter_cap:
                low = float(self.cb @ self.xb)
                lam_pos = np.maximum(lam, 0.0)
                mass = self._global_min_mass(lam_pos)
                high = float(lam_pos @ self.prob.p_flat) / mass if mass > 0 else 1.0
                raise SolverConvergenceError(
                    "iteration cap exceeded", low, min(1.0, high), self.iterations
                )
            self._pivot(enter_id)

    def _global_min_mass(self, lam: np.ndarray) -> float:
        best = np.inf
        for start in range(0, self.prob.n_alice, 4096):
            sl = slice(start, min(start + 4096, self.prob.n_alice))
            mass, _ = _alice_masses(self.prob, lam, sl)
            best = min(best, float(mass.min()))
        return best

    def _separate(self, lam: np.ndarray) -> list[int]:
        """Strategy ids violating the dual cover, most violated first."""
        prob = self.prob
        found: list[tuple[float, int]] = []
        threshold = 1.0 - self.tol
        for start in range(0, prob.n_alice, 4096):
            sl = slice(start, min(start + 4096, prob.n_alice))
            mass, g = _alice_masses(prob, lam, sl)
            hits = np.flatnonzero(mass < threshold)
            for k in hits:
                found.append((float(mass[k]), start + int(k), g[int(k)]))
        found.sort(key=lambda t: (t[0], t[1]))
        ids = []
        for _, ja, g_row in found[: self.batch]:
            j = ja * prob.n_bob + _best_bob(prob, g_row)
            if j not in self.pool_set:
                ids.append(j)
        return ids

    def _add_to_pool(self, ids: list[int]):
        self.pool.extend(ids)
        self.pool_set.update(ids)
        new_rows = self.prob.supports(np.array(ids, dtype=np.int64))
        self.pool_sup = np.vstack([self.pool_sup, new_rows])

    # -- driver ----------------------------------------------------------------

    def solve(self) -> SimplexResult:
        rounds = 0
        if self.mode == "dense-dual":
            lam = self._solve_current()
        else:
            while True:
                lam = self._solve_current()
                violated = self._separate(lam)
                if not violated:
                    break
                self._add_to_pool(violated)
                rounds += 1
                if rounds > self.prob.n_strat:
                    raise SolverConvergenceError(
                        "separation failed to converge",
                        float(self.cb @ self.xb), 1.0, self.iterations,
                    )
        # clean finish: refactorize and confirm optimality on fresh numbers
        self._refactorize()
        lam = self._duals()
        min_mass = self._global_min_mass(lam)
        max_rc = max(1.0 - min_mass, float(np.max(-lam)))
        if max_rc > self.tol:
            # resume pivoting once on the refreshed factorization
            if self.mode == "cutting-plane" and 1.0 - min_mass > self.tol:
                self._add_to_pool([j for j in [self._price_full(lam)[1]]
                                   if j not in self.pool_set])
            lam = self._solve_current()
            if self.mode == "cutting-plane":
                for _ in range(self.prob.n_strat):
                    violated = self._separate(lam)
                    if not violated:
                        break
                    self._add_to_pool(violated)
                    lam = self._solve_current()
            min_mass = self._global_min_mass(lam)
            max_rc = max(1.0 - min_mass, float(np.max(-lam)))
        return SimplexResult(
            objective=float(self.cb @ self.xb),
            basis=self.basis.copy(),
            basic_values=self.xb.copy(),
            duals=lam,
            iterations=self.iterations,
            separation_rounds=rounds,
            pool_size=len(self.pool),
            max_reduced_cost=float(max_rc),
            dual_min_mass=float(min_mass),
            bland_pivots=self.bland_pivots,
            refactorizations=self.refactorizations,
        )
