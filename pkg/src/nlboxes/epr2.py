"""Non-local cost via the decomposition linear program.

Splits a behavior box into the heaviest possible mixture of deterministic
local strategies plus a residual; the cost is one minus the optimal local
weight.  The optimum is found with the specialized revised simplex in
``_simplex`` (dense-dual or cutting-plane mode), and an optional
exact-rational pass re-certifies feasibility, dual covering and the duality
gap after rationalizing the box and the solution.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterator

import numpy as np

from ._simplex import RevisedSimplex, SolverConvergenceError, StrategyProblem
from .boxes import BehaviorBox, BoxError, BoxDiagnostics, tensor_product, validate

STRATEGY_COUNT_LIMIT = 2**62


@dataclass(frozen=True)
class DeterministicStrategy:
    """A local strategy: output functions f_a(x) and f_b(y), with index j.

    The index packs Alice's outputs as base-a_card digits (input 0 the least
    significant) above Bob's base-b_card digits: j = j_alice * b_card**y_card
    + j_bob.  Strategy 0 outputs 0 everywhere on both sides.
    """

    j: int
    f_a: tuple[int, ...]
    f_b: tuple[int, ...]

    def induced_box(self, dims: tuple[int, int, int, int]) -> BehaviorBox:
        xc, yc, ac, bc = dims
        p = np.zeros(dims)
        for x in range(xc):
            for y in range(yc):
                p[x, y, self.f_a[x], self.f_b[y]] = 1.0
        return BehaviorBox(p)


def strategy_count(dims: tuple[int, int, int, int]) -> int:
    xc, yc, ac, bc = dims
    count = ac**xc * bc**yc
    if count > STRATEGY_COUNT_LIMIT:
        raise BoxError(f"strategy count {count} overflows the supported range")
    return count


def strategy_from_index(j: int, dims: tuple[int, int, int, int]) -> DeterministicStrategy:
    xc, yc, ac, bc = dims
    n_bob = bc**yc
    ja, jb = divmod(j, n_bob)
    if not 0 <= ja < ac**xc:
        raise BoxError(f"strategy index {j} out of range for dims {dims}")
    f_a = tuple((ja // ac**x) % ac for x in range(xc))
    f_b = tuple((jb // bc**y) % bc for y in range(yc))
    return DeterministicStrategy(j, f_a, f_b)


def enumerate_strategies(dims: tuple[int, int, int, int]) -> Iterator[DeterministicStrategy]:
    """Stream all deterministic strategies in increasing index order."""
    total = strategy_count(dims)
    for j in range(total):
        yield strategy_from_index(j, dims)


@dataclass
class SolverOptions:
    """Knobs shared by the CLI and the library entry points."""

    mode: str = "cutting-plane"  # or "dense-dual"
    tol: float = 1e-9
    iter_cap: int = 50_000
    strategy_cap: int = 2**20
    batch: int = 64
    certify: bool = False
    certify_denominator: int = 10**9


@dataclass
class CertifiedBounds:
    """Exact-rational cost interval for the rationalized box."""

    lower: float
    upper: float
    certified: bool
    primal_violation: Fraction
    rationalization_error: float
    lower_exact: Fraction
    upper_exact: Fraction

    @property
    def width(self) -> float:
        return self.upper - self.lower


@dataclass
class SolverStatus:
    mode: str
    iterations: int
    separation_rounds: int
    pool_size: int
    max_reduced_cost: float
    dual_min_mass: float
    duality_gap: float
    primal_violation: float
    residual_diag: BoxDiagnostics | None
    elapsed: float
    certified: bool = False

    def as_dict(self) -> dict:
        d = {
            "mode": self.mode,
            "iterations": self.iterations,
            "separation_rounds": self.separation_rounds,
            "pool_size": self.pool_size,
            "max_reduced_cost": self.max_reduced_cost,
            "dual_min_mass": self.dual_min_mass,
            "duality_gap": self.duality_gap,
            "primal_violation": self.primal_violation,
            "elapsed": self.elapsed,
            "certified": self.certified,
        }
        if self.residual_diag is not None:
            d["residual_norm"] = self.residual_diag.norm_residual
            d["residual_no_signaling"] = self.residual_diag.no_signaling_residual
        return d


@dataclass
class Epr2Result:
    """Optimal decomposition summary.

    ``mixture`` maps strategy indices to weights (the local part),
    ``dual_certificate`` is the nonnegative entrywise dual vector whose mass
    on every strategy's support is at least 1 - tol.
    """

    local_weight: float
    cost: float
    mixture: dict[int, float]
    dual_certificate: np.ndarray
    status: SolverStatus
    dims: tuple[int, int, int, int]
    certified_bounds: CertifiedBounds | None = None


def _assemble(box: BehaviorBox, prob: StrategyProblem, raw, elapsed: float,
              mode: str) -> Epr2Result:
    mixture = {}
    row_sum = np.zeros(prob.m)
    for col, value in zip(raw.basis, raw.basic_values):
        if col < prob.n_strat and value > 0.0:
            mixture[int(col)] = mixture.get(int(col), 0.0) + float(value)
            row_sum[prob.support(int(col))] += value
    local_weight = float(sum(mixture.values()))
    cost = min(1.0, max(0.0, 1.0 - local_weight))
    duals = np.maximum(raw.duals, 0.0)
    gap = float(duals @ prob.p_flat - local_weight)
    primal_violation = float(np.max(row_sum - prob.p_flat, initial=0.0))

    residual_diag = None
    if 1e-12 < local_weight < 1.0 - 1e-12:
        residual = np.maximum(prob.p_flat - row_sum, 0.0) / (1.0 - local_weight)
        residual_diag = validate(residual.reshape(box.dims))

    status = SolverStatus(
        mode=mode,
        iterations=raw.iterations,
        separation_rounds=raw.separation_rounds,
        pool_size=raw.pool_size,
        max_reduced_cost=raw.max_reduced_cost,
        dual_min_mass=raw.dual_min_mass,
        duality_gap=gap,
        primal_violation=primal_violation,
        residual_diag=residual_diag,
        elapsed=elapsed,
    )
    return Epr2Result(
        local_weight=local_weight,
        cost=cost,
        mixture=mixture,
        dual_certificate=duals,
        status=status,
        dims=box.dims,
    )


def epr2_cost(box: BehaviorBox, opts: SolverOptions | None = None) -> Epr2Result:
    """Minimal non-local weight over all local/no-signaling decompositions.

    Raises :class:`BoxError` for invalid boxes or strategy counts beyond
    ``opts.strategy_cap``; raises :class:`SolverConvergenceError` (with best
    bounds attached) if the pivot cap is exhausted.
    """
    opts = opts or SolverOptions()
    diag = validate(box)
    if not diag.ok:
        raise BoxError(f"box fails validation: {diag}")
    n = strategy_count(box.dims)
    if n > opts.strategy_cap:
        raise BoxError(
            f"strategy count {n} exceeds the configured cap {opts.strategy_cap}"
        )
    prob = StrategyProblem(box.dims, box.p.ravel().copy())
    start = time.perf_counter()
    simplex = RevisedSimplex(
        prob, mode=opts.mode, tol=opts.tol, iter_cap=opts.iter_cap, batch=opts.batch
    )
    raw = simplex.solve()
    elapsed = time.perf_counter() - start
    result = _assemble(box, prob, raw, elapsed, opts.mode)
    if opts.certify:
        result.certified_bounds = certify(
            box, result, max_denominator=opts.certify_denominator
        )
        result.status.certified = result.certified_bounds.certified
    return result


def epr2_cost_two_copies(p1: BehaviorBox, p2: BehaviorBox,
                         opts: SolverOptions | None = None) -> Epr2Result:
    """Cost of the ordered product of two binary boxes (the 65536-strategy LP)."""
    for b in (p1, p2):
        if not b.is_binary:
            raise BoxError(f"two-copy cost needs 2x2x2x2 boxes, got {b.dims}")
    return epr2_cost(tensor_product(p1, p2), opts)


# ---------------------------------------------------------------------------
# Exact-rational certification
# ---------------------------------------------------------------------------


def _rationalize(values, max_den: int) -> list[Fraction]:
    return [Fraction(float(v)).limit_denominator(max_den) for v in values]


def _exact_min_mass(dims, y_frac: list[Fraction]) -> Fraction:
    """Exact minimum, over all strategies, of the dual mass on the support."""
    xc, yc, ac, bc = dims

    def ent(x, y, a, b):
        return y_frac[((x * yc + y) * ac + a) * bc + b]

    best = None
    for ja in range(ac**xc):
        f_a = [(ja // ac**x) % ac for x in range(xc)]
        mass = Fraction(0)
        for y in range(yc):
            mass += min(
                sum(ent(x, y, f_a[x], b) for x in range(xc)) for b in range(bc)
            )
        if best is None or mass < best:
            best = mass
    return best


def certify(box: BehaviorBox, result: Epr2Result,
            max_denominator: int = 10**9,
            entry_max_denominator: int = 10**12) -> CertifiedBounds:
    """Exact-rational cost interval for ``result`` on the rationalized box.

    The float box entries are snapped to nearby small-denominator rationals;
    the primal mixture is scaled down until exactly feasible (its weight is a
    true lower bound on the local part) and the dual vector is scaled up
    until it exactly covers every strategy (an upper bound).  If any entry's
    rationalization sits further than 1e-12 from its float, the bounds are
    still returned but flagged uncertified.
    """
    dims = result.dims
    xc, yc, ac, bc = dims
    prob = StrategyProblem(dims, box.p.ravel().copy())

    p_frac = _rationalize(box.p.ravel(), entry_max_denominator)
    rat_err = max(
        (abs(float(f) - v) for f, v in zip(p_frac, box.p.ravel())), default=0.0
    )
    certified = rat_err <= 1e-12

    # Primal side: exact feasibility repair by uniform scaling.
    row_sum = [Fraction(0)] * prob.m
    total = Fraction(0)
    for j, w in sorted(result.mixture.items()):
        wf = Fraction(float(w)).limit_denominator(max_denominator)
        if wf <= 0:
            continue
        total += wf
        for v in prob.support(j):
            row_sum[int(v)] += wf
    violation = max(
        (rs - pv for rs, pv in zip(row_sum, p_frac)), default=Fraction(0)
    )
    violation = max(violation, Fraction(0))
    scale = Fraction(1)
    for rs, pv in zip(row_sum, p_frac):
        if rs > pv:
            scale = min(scale, pv / rs if rs > 0 else Fraction(0))
    local_low = total * scale
    upper_exact = Fraction(1) - min(local_low, Fraction(1))

    # Dual side: exact covering repair by uniform scaling.
    y_frac = _rationalize(np.maximum(result.dual_certificate, 0.0), max_denominator)
    min_mass = _exact_min_mass(dims, y_frac)
    if min_mass > 0:
        local_high = sum(pv * yv for pv, yv in zip(p_frac, y_frac)) / min_mass
        local_high = min(local_high, Fraction(1))
    else:
        local_high = Fraction(1)
    lower_exact = max(Fraction(0), Fraction(1) - local_high)

    return CertifiedBounds(
        lower=float(lower_exact),
        upper=float(upper_exact),
        certified=certified,
        primal_violation=violation,
        rationalization_error=float(rat_err),
        lower_exact=lower_exact,
        upper_exact=upper_exact,
    )


__all__ = [
    "DeterministicStrategy",
    "SolverOptions",
    "SolverStatus",
    "CertifiedBounds",
    "Epr2Result",
    "SolverConvergenceError",
    "enumerate_strategies",
    "strategy_count",
    "strategy_from_index",
    "epr2_cost",
    "epr2_cost_two_copies",
    "certify",
]
