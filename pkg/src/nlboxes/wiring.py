"""Deterministic adaptive 2->1 wirings of binary boxes.

One party's wiring decides, per external input x, which of its two boxes to
query first, what to feed it, what to feed the second box as a function of
the first answer, and how to combine both answers into the final output.
Applying an Alice wiring and a Bob wiring to an ordered pair of boxes yields
a new binary box.

The canonical form of a wiring is its :class:`StrategyTensor`: the map
(x, a1, a2) -> (x1, x2, a) it induces, where a1/a2 are the answers of box 1
and box 2.  Two wirings acting identically on every box pair have equal
tensors, so the tensor is both the dedup key and the fast-evaluation
representation used by the exhaustive search.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .boxes import BehaviorBox, BoxError, DimensionError

BOX1_FIRST = 0
BOX2_FIRST = 1

NAMED_WIRINGS = ("TRIVIAL_1", "TRIVIAL_2", "FWW", "BS")


def _check_bit(v: int, what: str) -> None:
    if v not in (0, 1):
        raise BoxError(f"{what} must be 0 or 1, got {v!r}")


@dataclass(frozen=True)
class PartyWiring:
    """One party's deterministic adaptive protocol over two boxes.

    Per external input x in {0,1}:
      order[x]         -- 0 queries box 1 first, 1 queries box 2 first
      first_input[x]   -- input fed to the first-queried box
      second_input[x]  -- pair (input when first answer is 0, when it is 1)
      final_output[x]  -- 4-tuple indexed by 2*first_answer + second_answer
    """

    order: tuple[int, int]
    first_input: tuple[int, int]
    second_input: tuple[tuple[int, int], tuple[int, int]]
    final_output: tuple[tuple[int, int, int, int], tuple[int, int, int, int]]

    def __post_init__(self):
        for x in range(2):
            _check_bit(self.order[x], "order")
            _check_bit(self.first_input[x], "first_input")
            for v in self.second_input[x]:
                _check_bit(v, "second_input")
            if len(self.final_output[x]) != 4:
                raise BoxError("final_output rows must have 4 entries")
            for v in self.final_output[x]:
                _check_bit(v, "final_output")


@dataclass(frozen=True)
class StrategyTensor:
    """Canonical wiring form: key[4*x + 2*a1 + a2] = 4*x1 + 2*x2 + a."""

    key: tuple[int, ...]

    def __post_init__(self):
        if len(self.key) != 8 or any(not 0 <= v < 8 for v in self.key):
            raise BoxError("tensor key must be 8 values in 0..7")

    def triple(self, x: int, a1: int, a2: int) -> tuple[int, int, int]:
        v = self.key[4 * x + 2 * a1 + a2]
        return (v >> 2) & 1, (v >> 1) & 1, v & 1

    @property
    def tables(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(x1, x2, a) lookup arrays of shape (2, 2, 2) indexed [x, a1, a2]."""
        k = np.asarray(self.key, dtype=np.int64).reshape(2, 2, 2)
        return (k >> 2) & 1, (k >> 1) & 1, k & 1


def to_tensor(w: PartyWiring) -> StrategyTensor:
    """Collapse a wiring to its (x, a1, a2) -> (x1, x2, a) map."""
    key = []
    for x in range(2):
        for a1 in range(2):
            for a2 in range(2):
                if w.order[x] == BOX1_FIRST:
                    x1 = w.first_input[x]
                    x2 = w.second_input[x][a1]
                    a = w.final_output[x][2 * a1 + a2]
                else:
                    x2 = w.first_input[x]
                    x1 = w.second_input[x][a2]
                    a = w.final_output[x][2 * a2 + a1]
                key.append(4 * x1 + 2 * x2 + a)
    return StrategyTensor(tuple(key))


def named_wiring(name: str) -> PartyWiring:
    """The named protocols.

    TRIVIAL_1 / TRIVIAL_2 forward the external input to that box and ignore
    the other (which is fed 0).  FWW feeds x to both boxes and outputs the
    XOR of the answers.  BS feeds x to box 1 and x*a1 to box 2, outputting
    the XOR; its reconstruction is pinned by the activation-formula checks.
    """
    name = name.upper()
    xor_out = (0, 1, 1, 0)
    if name == "TRIVIAL_1":
        return PartyWiring(
            order=(BOX1_FIRST, BOX1_FIRST),
            first_input=(0, 1),
            second_input=((0, 0), (0, 0)),
            final_output=((0, 0, 1, 1), (0, 0, 1, 1)),  # a = a1
        )
    if name == "TRIVIAL_2":
        return PartyWiring(
            order=(BOX2_FIRST, BOX2_FIRST),
            first_input=(0, 1),
            second_input=((0, 0), (0, 0)),
            final_output=((0, 0, 1, 1), (0, 0, 1, 1)),  # a = a2 (queried first)
        )
    if name == "FWW":
        return PartyWiring(
            order=(BOX1_FIRST, BOX1_FIRST),
            first_input=(0, 1),
            second_input=((0, 0), (1, 1)),
            final_output=(xor_out, xor_out),
        )
    if name == "BS":
        return PartyWiring(
            order=(BOX1_FIRST, BOX1_FIRST),
            first_input=(0, 1),
            second_input=((0, 0), (0, 1)),  # x2 = x * a1
            final_output=(xor_out, xor_out),
        )
    raise BoxError(f"unknown wiring name {name!r}; expected one of {NAMED_WIRINGS}")


def _require_wirable(box: BehaviorBox) -> None:
    if not box.is_binary:
        raise DimensionError(f"wirings act on 2x2x2x2 boxes, got {box.dims}")


def apply_wiring(
    wa: "PartyWiring | StrategyTensor",
    wb: "PartyWiring | StrategyTensor",
    p1: BehaviorBox,
    p2: BehaviorBox,
) -> BehaviorBox:
    """Wire an ordered pair of binary boxes into a single binary box.

    P'(ab|xy) sums P1(a1 b1|x1 y1) * P2(a2 b2|x2 y2) over all answer tuples
    consistent with the two tensors; every term fixes all four box inputs,
    so the formula is well-defined for any combination of query orders.
    """
    _require_wirable(p1)
    _require_wirable(p2)
    ta = wa if isinstance(wa, StrategyTensor) else to_tensor(wa)
    tb = wb if isinstance(wb, StrategyTensor) else to_tensor(wb)
    out = np.zeros((2, 2, 2, 2))
    q1, q2 = p1.p, p2.p
    for x in range(2):
        for a1 in range(2):
            for a2 in range(2):
                x1, x2, a = ta.triple(x, a1, a2)
                for y in range(2):
                    for b1 in range(2):
                        for b2 in range(2):
                            y1, y2, b = tb.triple(y, b1, b2)
                            out[x, y, a, b] += q1[x1, y1, a1, b1] * q2[x2, y2, a2, b2]
    return BehaviorBox(out)


# ---------------------------------------------------------------------------
# Enumeration of all party wirings, deduped by tensor
# ---------------------------------------------------------------------------

RAW_WIRINGS_PER_INPUT = 2 * 2 * 4 * 16  # order, first input, second table, output table
RAW_WIRINGS_PER_PARTY = RAW_WIRINGS_PER_INPUT**2


def _per_input_options():
    opts = []
    for order in range(2):
        for first in range(2):
            for s0 in range(2):
                for s1 in range(2):
                    for out_bits in range(16):
                        out = tuple((out_bits >> i) & 1 for i in range(4))
                        opts.append((order, first, (s0, s1), out))
    return opts


def iter_raw_wirings():
    """All 65536 raw party wirings (before tensor dedup), in a fixed order."""
    opts = _per_input_options()
    for o0, f0, s0, t0 in opts:
        for o1, f1, s1, t1 in opts:
            yield PartyWiring(
                order=(o0, o1),
                first_input=(f0, f1),
                second_input=(s0, s1),
                final_output=(t0, t1),
            )


@lru_cache(maxsize=1)
def _catalog() -> tuple[tuple[StrategyTensor, ...], dict, tuple[PartyWiring, ...]]:
    by_key: dict[tuple[int, ...], PartyWiring] = {}
    for w in iter_raw_wirings():
        key = to_tensor(w).key
        if key not in by_key:
            by_key[key] = w
    keys = sorted(by_key)
    tensors = tuple(StrategyTensor(k) for k in keys)
    ids = {k: i for i, k in enumerate(keys)}
    reps = tuple(by_key[k] for k in keys)
    return tensors, ids, reps


def enumerate_party_wirings() -> list[StrategyTensor]:
    """Deduped, sorted list of all distinct strategy tensors (stable ids)."""
    return list(_catalog()[0])


def tensor_id(t: "StrategyTensor | PartyWiring") -> int:
    """Canonical id: index in the deduped sorted tensor list."""
    if isinstance(t, PartyWiring):
        t = to_tensor(t)
    try:
        return _catalog()[1][t.key]
    except KeyError:
        raise BoxError(f"tensor {t.key} is not realizable by any party wiring") from None


def representative_wiring(tid: int) -> PartyWiring:
    """A wiring realizing the tensor with the given canonical id."""
    reps = _catalog()[2]
    if not 0 <= tid < len(reps):
        raise BoxError(f"tensor id {tid} out of range 0..{len(reps) - 1}")
    return reps[tid]


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------


def wiring_to_text(w: PartyWiring) -> str:
    """Compact one-line record, e.g.
    'x0 order=1 first=0 second=01 out=0110 ; x1 order=1 first=1 second=01 out=0110'.
    """
    parts = []
    for x in range(2):
        second = "".join(str(v) for v in w.second_input[x])
        out = "".join(str(v) for v in w.final_output[x])
        parts.append(
            f"x{x} order={w.order[x] + 1} first={w.first_input[x]} "
            f"second={second} out={out}"
        )
    return " ; ".join(parts)


def wiring_from_text(text: str) -> PartyWiring:
    parts = text.strip().split(";")
    if len(parts) != 2:
        raise BoxError("wiring record must have two per-input sections")
    order, first, second, final = [], [], [], []
    for x, part in enumerate(parts):
        fields = dict(tok.split("=", 1) for tok in part.split() if "=" in tok)
        try:
            order.append(int(fields["order"]) - 1)
            first.append(int(fields["first"]))
            second.append(tuple(int(c) for c in fields["second"]))
            final.append(tuple(int(c) for c in fields["out"]))
        except (KeyError, ValueError) as exc:
            raise BoxError(f"malformed wiring record near {part!r}: {exc}") from exc
    return PartyWiring(
        order=tuple(order),
        first_input=tuple(first),
        second_input=tuple(second),
        final_output=tuple(final),
    )
