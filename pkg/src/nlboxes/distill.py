"""Two-copy distillable non-locality by exhaustive wiring search.

The distillable non-locality of an ordered box pair is the maximal non-local
cost over all deduped wiring pairs applied to it.  Evaluating that maximum
naively means 36864^2 ordered tensor pairs; instead the search factors every
tensor into an input side (144 per party: which box inputs are chosen as a
function of the external input and the earlier answer) and an output function
(256 per party), precomputes for each placement and input-side pair an 8x8
reduced kernel, and maximizes the bilinear form over all +-1 output sign
vectors with max_alpha ||R^T alpha||_1.  This covers exactly the same pair
space as a blocked sweep over the 64x64 kernels exposed by
:func:`fast_eval_kernel`, against which it is cross-checked.

Region classification compares the single-copy cost, the two-copy LP cost and
the searched distillable value at a margin delta, labelling each family point
I (distillable), II (bound: undistillable yet costlier in pairs), III
(pair cost equals single cost) or AMBIGUOUS.
"""

from __future__ import annotations

import hashlib
import time
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .boxes import BehaviorBox, BoxError, FamilyPoint, closed_form_cost, family_box
from .epr2 import Epr2Result, SolverOptions, epr2_cost_two_copies
from .wiring import StrategyTensor, enumerate_party_wirings

REGION_DELTA = 1e-7

_U_BITS = np.arange(8)


@lru_cache(maxsize=1)
def _tables():
    """Search tables derived from the deduped tensor catalog.

    Returns (keys, in_id, out_fn, in_sides, tid_lookup, ja_table) where
    in_sides has shape (n_in, 8, 2) giving (x1, x2) per (x, a1, a2) slot and
    ja_table[i, u] packs (x1, a1, x2, a2) into a 0..15 joint index.
    """
    tensors = enumerate_party_wirings()
    keys = np.array([t.key for t in tensors], dtype=np.int64)  # (n, 8)
    x1 = (keys >> 2) & 1
    x2 = (keys >> 1) & 1
    a_out = keys & 1
    out_fn = (a_out << _U_BITS).sum(axis=1)
    in_key = ((2 * x1 + x2) << (2 * _U_BITS)).sum(axis=1)
    uniq, in_id = np.unique(in_key, return_inverse=True)
    n_in = uniq.size
    in_sides = np.empty((n_in, 8, 2), dtype=np.int64)
    for pos, code in enumerate(uniq):
        duo = (code >> (2 * _U_BITS)) & 3
        in_sides[pos, :, 0] = duo >> 1
        in_sides[pos, :, 1] = duo & 1
    tid_lookup = np.full((n_in, 256), -1, dtype=np.int64)
    tid_lookup[in_id, out_fn] = np.arange(len(tensors))
    a1 = (_U_BITS >> 1) & 1
    a2 = _U_BITS & 1
    ja_table = (2 * in_sides[:, :, 0] + a1) * 4 + (2 * in_sides[:, :, 1] + a2)
    return keys, in_id, out_fn, in_sides, tid_lookup, ja_table


@lru_cache(maxsize=1)
def _sign_tables():
    # alpha_signs[o, u] = +-1 from bit u of the output function o
    o = np.arange(256)[:, None]
    alpha_signs = 1.0 - 2.0 * ((o >> _U_BITS) & 1)
    # placement[k, x, y] = (-1)^(xy + alpha*x + beta*y + gamma), k = 4a+2b+g
    placement = np.empty((8, 2, 2))
    for k in range(8):
        al, be, ga = (k >> 2) & 1, (k >> 1) & 1, k & 1
        for x in range(2):
            for y in range(2):
                placement[k, x, y] = (-1.0) ** ((x * y) ^ (al * x) ^ (be * y) ^ ga)
    x_of_u = _U_BITS >> 2
    sgn = placement[:, x_of_u][:, :, x_of_u]  # (8, 8u, 8v)
    return alpha_signs, sgn


def _reduced_kernel_base(p1: BehaviorBox, p2: BehaviorBox) -> np.ndarray:
    """R0[i, j, u, v]: unsigned bilinear weight for input-side pair (i, j)."""
    _, _, _, _, _, ja_table = _tables()
    m1 = p1.p.transpose(0, 2, 1, 3).reshape(4, 4)  # [(2x1+a1), (2y1+b1)]
    m2 = p2.p.transpose(0, 2, 1, 3).reshape(4, 4)
    ia = np.arange(16)
    w = m1[np.ix_(ia >> 2, ia >> 2)] * m2[np.ix_(ia & 3, ia & 3)]  # (16, 16)
    return w[ja_table[:, None, :, None], ja_table[None, :, None, :]]


# ---------------------------------------------------------------------------
# The 64x64 kernels (reference fast path, spec'd surface)
# ---------------------------------------------------------------------------


def fast_eval_kernel(p1: BehaviorBox, p2: BehaviorBox, placement: int) -> np.ndarray:
    """64x64 kernel K for one CHSH sign placement.

    Coordinates pack (x, a1, a2, x1, x2, a) as 8*(4x+2a1+a2) + (4x1+2x2+a);
    contracting K over the 8 active coordinates of an Alice and a Bob tensor
    yields the placement's CHSH value of the wired box.
    """
    if not 0 <= placement < 8:
        raise BoxError(f"placement must be 0..7, got {placement}")
    return _all_kernels(p1, p2)[placement]


def _all_kernels(p1: BehaviorBox, p2: BehaviorBox) -> np.ndarray:
    al, be, ga = np.arange(8) >> 2 & 1, np.arange(8) >> 1 & 1, np.arange(8) & 1
    coord = np.arange(64)
    u, ta = coord >> 3, coord & 7
    x, a1, a2 = u >> 2 & 1, u >> 1 & 1, u & 1
    x1, x2, a = ta >> 2 & 1, ta >> 1 & 1, ta & 1
    k = np.empty((8, 64, 64))
    sign_out = np.where((a[:, None] ^ a[None, :]) == 1, -1.0, 1.0)  # (a, b) parity
    # row coordinates decode Alice's (x, a1, a2, x1, x2, a), columns Bob's
    pk1 = p1.p[x1[:, None], x1[None, :], a1[:, None], a1[None, :]]
    pk2 = p2.p[x2[:, None], x2[None, :], a2[:, None], a2[None, :]]
    base = pk1 * pk2 * sign_out
    for kk in range(8):
        t = (-1.0) ** (
            (x[:, None] & x[None, :])
            ^ (al[kk] * x[:, None])
            ^ (be[kk] * x[None, :])
            ^ ga[kk]
        )
        k[kk] = t * base
    return k


def tensor_active_coords(t: StrategyTensor) -> np.ndarray:
    """The 8 active kernel coordinates of a tensor."""
    key = np.asarray(t.key, dtype=np.int64)
    return _U_BITS * 8 + key


def kernel_pair_values(kernels: np.ndarray, ta: StrategyTensor,
                       tb: StrategyTensor) -> np.ndarray:
    """All 8 placement values of the wired box, by kernel contraction."""
    ca, cb = tensor_active_coords(ta), tensor_active_coords(tb)
    return kernels[:, ca][:, :, cb].sum(axis=(1, 2))


def kernel_pair_cost(kernels: np.ndarray, ta: StrategyTensor,
                     tb: StrategyTensor) -> float:
    return max(0.0, (float(kernel_pair_values(kernels, ta, tb).max()) - 2.0) / 2.0)


# ---------------------------------------------------------------------------
# Search
# ---------------------------------------------------------------------------


@dataclass
class SearchOptions:
    tie_tol: float = 1e-12
    max_ties: int = 64
    chunk: int = 2048
    tensor_ids: Sequence[int] | None = None
    progress: Callable[[str], None] | None = None
    checkpoint: str | Path | None = None


@dataclass
class SearchResult:
    """Outcome of one exhaustive (or subset) wiring-pair search."""

    d_value: float
    argmax_ids: list[tuple[int, int]]
    evaluated_pairs: int
    elapsed: float
    s_max: float
    ties_truncated: bool
    blocks: int


def _emit(opts: SearchOptions, line: str) -> None:
    if opts.progress is not None:
        opts.progress(line)


def _search_key(p1: BehaviorBox, p2: BehaviorBox, opts: SearchOptions) -> str:
    h = hashlib.sha256()
    h.update(p1.p.tobytes())
    h.update(p2.p.tobytes())
    h.update(str(opts.chunk).encode())
    return h.hexdigest()


def _block_maxima(p1: BehaviorBox, p2: BehaviorBox, opts: SearchOptions,
                  r0_flat: np.ndarray):
    """Max CHSH value per (placement, input-side block chunk); resumable."""
    alpha_signs, sgn = _sign_tables()
    n_blocks = r0_flat.shape[0]
    chunk = opts.chunk
    starts = list(range(0, n_blocks, chunk))
    bm = np.full((8, n_blocks), -np.inf)
    done = np.zeros((8, len(starts)), dtype=bool)

    ckpt = Path(opts.checkpoint) if opts.checkpoint else None
    key = _search_key(p1, p2, opts) if ckpt else None
    if ckpt and ckpt.exists():
        with np.load(ckpt, allow_pickle=False) as data:
            if (
                str(data["key"]) == key
                and data["bm"].shape == bm.shape
                and data["done"].shape == done.shape
            ):
                bm = data["bm"]
                done = data["done"]

    partial = float(bm[np.isfinite(bm)].max()) if np.isfinite(bm).any() else -np.inf
    for k in range(8):
        for ci, start in enumerate(starts):
            if done[k, ci]:
                continue
            stop = min(start + chunk, n_blocks)
            rc = r0_flat[start:stop] * sgn[k]
            # one GEMM per chunk: (256, 8) @ (8, c*8)
            z = alpha_signs @ rc.transpose(1, 0, 2).reshape(8, -1)
            z = np.abs(z.reshape(256, stop - start, 8))
            v = z.sum(axis=2)
            bm[k, start:stop] = v.max(axis=0)
            done[k, ci] = True
            partial = max(partial, float(bm[k, start:stop].max()))
            _emit(opts, f"block={k}:{ci} partial_max={partial:.17g}")
            if ckpt:
                tmp = ckpt.with_suffix(".tmp.npz")
                np.savez(tmp, key=key, bm=bm, done=done)
                tmp.replace(ckpt)
    return bm


def _beta_fanout(z: np.ndarray, budget: float, cap: int) -> list[int]:
    """Output-function codes whose sign pattern loses at most ``budget``.

    The base pattern follows sign(z); flipping coordinate v costs 2|z_v|.
    """
    base = 0
    for v in range(8):
        if z[v] < 0.0:
            base |= 1 << v
    costs = 2.0 * np.abs(z)
    order = np.argsort(costs, kind="stable")
    found: list[int] = []

    def rec(idx: int, used: float, code: int):
        if len(found) >= cap:
            return
        if idx == 8:
            found.append(code)
            return
        rec(idx + 1, used, code)
        v = int(order[idx])
        c = used + costs[v]
        if c <= budget and len(found) < cap:
            rec(idx + 1, c, code ^ (1 << v))

    rec(0, 0.0, base)
    return found


def _recover_ties(r0: np.ndarray, bm: np.ndarray, s_thr: float,
                  max_ties: int) -> tuple[list[tuple[int, int]], bool]:
    """Smallest argmax pair ids, in lexicographic order, capped at max_ties."""
    keys, in_id, out_fn, _, tid_lookup, _ = _tables()
    alpha_signs, sgn = _sign_tables()
    n_in = r0.shape[0]
    n_tensors = len(keys)

    # Stage 1: the smallest candidate Alice tensor ids over qualifying blocks.
    cand = np.empty(0, dtype=np.int64)
    overflowed = False
    for k in range(8):
        hits = np.flatnonzero(bm[k] >= s_thr)
        for start in range(0, hits.size, 1024):
            blk = hits[start:start + 1024]
            rc = r0.reshape(-1, 8, 8)[blk] * sgn[k]
            z = alpha_signs @ rc.transpose(1, 0, 2).reshape(8, -1)
            v = np.abs(z.reshape(256, blk.size, 8)).sum(axis=2)  # (256, nb)
            o_idx, b_idx = np.nonzero(v >= s_thr)
            ids = tid_lookup[blk[b_idx] // n_in, o_idx]
            merged = np.unique(np.concatenate([cand, ids]))
            if merged.size > max_ties:
                overflowed = True
                merged = merged[:max_ties]
            cand = merged

    pairs: list[tuple[int, int]] = []
    truncated = overflowed
    for pos, id_a in enumerate(cand.tolist()):
        i = int(in_id[id_a])
        alpha = alpha_signs[int(out_fn[id_a])]
        row = r0[i]  # (n_in, 8, 8)
        partners: set[int] = set()
        for k in range(8):
            z_all = np.einsum("u,juv->jv", alpha, row * sgn[k])
            best = np.abs(z_all).sum(axis=1)
            for j in np.flatnonzero(best >= s_thr):
                budget = float(best[j]) - s_thr
                for code in _beta_fanout(z_all[j], budget, 4 * max_ties):
                    partners.add(int(tid_lookup[j, code]))
        for id_b in sorted(partners):
            if len(pairs) >= max_ties:
                truncated = True
                break
            pairs.append((id_a, id_b))
        if len(pairs) >= max_ties:
            if pos + 1 < len(cand):
                truncated = True
            break
    return pairs[:max_ties], truncated


def _dense_search(p1: BehaviorBox, p2: BehaviorBox, ids: Sequence[int],
                  opts: SearchOptions) -> SearchResult:
    """Direct kernel-contraction sweep over an explicit tensor subset."""
    start_t = time.perf_counter()
    tensors = enumerate_party_wirings()
    ids = sorted(int(i) for i in ids)
    if any(not 0 <= i < len(tensors) for i in ids):
        raise BoxError("tensor id out of range")
    kernels = _all_kernels(p1, p2)
    coords = np.stack([tensor_active_coords(tensors[i]) for i in ids])
    hot = np.zeros((len(ids), 64))
    hot[np.arange(len(ids))[:, None], coords] = 1.0
    s = np.full((len(ids), len(ids)), -np.inf)
    for k in range(8):
        s = np.maximum(s, hot @ kernels[k] @ hot.T)
    s_max = float(s.max())
    d = max(0.0, (s_max - 2.0) / 2.0)
    thr = s_max - 2.0 * opts.tie_tol if d > 0.0 else -np.inf
    ai, bi = np.nonzero(s >= thr)
    order = np.lexsort((bi, ai))
    pairs = [(ids[int(ai[t])], ids[int(bi[t])]) for t in order[: opts.max_ties]]
    return SearchResult(
        d_value=d,
        argmax_ids=pairs,
        evaluated_pairs=len(ids) ** 2,
        elapsed=time.perf_counter() - start_t,
        s_max=s_max,
        ties_truncated=order.size > opts.max_ties,
        blocks=8,
    )


def distillable_2copy(p1: BehaviorBox, p2: BehaviorBox,
                      opts: SearchOptions | None = None) -> SearchResult:
    """Maximal non-local cost over all deduped ordered wiring pairs.

    Ties within ``opts.tie_tol`` of the maximum are reported as the smallest
    ``opts.max_ties`` (alice id, bob id) pairs in lexicographic order.
    """
    opts = opts or SearchOptions()
    for b in (p1, p2):
        if not b.is_binary:
            raise BoxError(f"search needs 2x2x2x2 boxes, got {b.dims}")
    if opts.tensor_ids is not None:
        return _dense_search(p1, p2, opts.tensor_ids, opts)

    start_t = time.perf_counter()
    n_tensors = len(enumerate_party_wirings())
    r0 = _reduced_kernel_base(p1, p2)  # (n_in, n_in, 8, 8)
    n_in = r0.shape[0]
    r0_flat = r0.reshape(-1, 8, 8)
    bm = _block_maxima(p1, p2, opts, r0_flat)
    s_max = float(bm.max())
    d = max(0.0, (s_max - 2.0) / 2.0)
    if d > 0.0:
        s_thr = s_max - 2.0 * opts.tie_tol
        pairs, truncated = _recover_ties(r0, bm, s_thr, opts.max_ties)
    else:
        take = min(opts.max_ties, n_tensors * n_tensors)
        pairs = [(t // n_tensors, t % n_tensors) for t in range(take)]
        truncated = n_tensors * n_tensors > take
    n_chunks = (r0_flat.shape[0] + opts.chunk - 1) // opts.chunk
    return SearchResult(
        d_value=d,
        argmax_ids=pairs,
        evaluated_pairs=n_tensors * n_tensors,
        elapsed=time.perf_counter() - start_t,
        s_max=s_max,
        ties_truncated=truncated,
        blocks=8 * n_chunks,
    )


# ---------------------------------------------------------------------------
# Region classification
# ---------------------------------------------------------------------------

REGION_LABELS = ("I", "II", "III", "AMBIGUOUS")


@dataclass
class RegionClassification:
    """Per-point record: costs, distillable value and the region label."""

    xi: float
    gamma: float
    c1: float
    c2: float
    d2: float
    label: str
    delta: float
    best_pair: tuple[int, int] | None
    margin_d2_c1: float
    margin_c2_c1: float
    lp_iterations: int = 0
    search_elapsed: float = 0.0


def _label(c1: float, c2: float, d2: float, delta: float) -> str:
    distillable = d2 > c1 + delta
    cost_stable = abs(c2 - c1) <= delta
    if distillable and cost_stable:
        return "AMBIGUOUS"
    if distillable:
        return "I"
    if cost_stable:
        return "III"
    if c2 > c1 + delta:
        return "II"
    return "AMBIGUOUS"


def classify_point(pt: FamilyPoint, lp_opts: SolverOptions | None = None,
                   search_opts: SearchOptions | None = None,
                   delta: float = REGION_DELTA) -> RegionClassification:
    """Single-copy cost, two-copy cost and distillable value with a label."""
    box = family_box(pt)
    c1 = closed_form_cost(box)
    lp: Epr2Result = epr2_cost_two_copies(box, box, lp_opts)
    search = distillable_2copy(box, box, search_opts)
    c2, d2 = lp.cost, search.d_value
    return RegionClassification(
        xi=pt.xi,
        gamma=pt.gamma,
        c1=c1,
        c2=c2,
        d2=d2,
        label=_label(c1, c2, d2, delta),
        delta=delta,
        best_pair=search.argmax_ids[0] if search.argmax_ids else None,
        margin_d2_c1=d2 - c1,
        margin_c2_c1=c2 - c1,
        lp_iterations=lp.status.iterations,
        search_elapsed=search.elapsed,
    )
