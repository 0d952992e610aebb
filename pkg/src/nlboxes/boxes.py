"""Two-party no-signaling behavior boxes.

A behavior box is the joint conditional distribution P(ab|xy) of a bipartite
device: Alice feeds in x and reads a, Bob feeds in y and reads b.  This module
builds and validates such boxes, provides the standard binary-box family
(PR / correlated / facet mixtures), tensor products, relabelings, the
shared-randomness twirl to isotropic form, and the closed-form CHSH-based
non-local cost for binary boxes.

Probability arrays are float64 with shape (x_card, y_card, a_card, b_card)
and are frozen (read-only) after construction.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

# Tolerance ledger: construction-time checks.
NORMALIZATION_TOL = 1e-12
NO_SIGNALING_TOL = 1e-12
NEGATIVITY_TOL = 1e-15

NAMED_BOXES = ("PR", "PC", "PF", "WHITE_NOISE", "TSIRELSON_ISO")

TSIRELSON_XI = math.sqrt(2.0) - 1.0


class BoxError(ValueError):
    """Rejected input: malformed or non-physical box data."""


class DimensionError(BoxError):
    """Box dimensions do not match an operation's requirements."""


@dataclass(frozen=True)
class BoxDiagnostics:
    """Residual report from :func:`validate` (a pure report, never raises)."""

    norm_residual: float
    no_signaling_residual: float
    min_entry: float

    @property
    def ok(self) -> bool:
        return (
            self.norm_residual <= NORMALIZATION_TOL
            and self.no_signaling_residual <= NO_SIGNALING_TOL
            and self.min_entry >= -NEGATIVITY_TOL
        )


def _residuals(p: np.ndarray) -> BoxDiagnostics:
    norms = p.sum(axis=(2, 3))
    norm_res = float(np.abs(norms - 1.0).max())
    # Alice marginal must not depend on y, Bob marginal not on x.
    ma = p.sum(axis=3)  # (x, y, a)
    mb = p.sum(axis=2)  # (x, y, b)
    res_a = float((ma.max(axis=1) - ma.min(axis=1)).max())
    res_b = float((mb.max(axis=0) - mb.min(axis=0)).max())
    return BoxDiagnostics(
        norm_residual=norm_res,
        no_signaling_residual=max(res_a, res_b),
        min_entry=float(p.min()),
    )


class BehaviorBox:
    """An immutable no-signaling behavior P(ab|xy).

    Construction validates normalization, non-negativity (entries in
    [-1e-15, 0) are clamped to 0) and no-signaling at the tolerances above;
    anything worse raises :class:`BoxError`.
    """

    __slots__ = ("p",)

    def __init__(self, p: np.ndarray):
        arr = np.array(p, dtype=np.float64)
        if arr.ndim != 4:
            raise DimensionError(f"box array must be 4-d, got shape {arr.shape}")
        if arr.min() < -NEGATIVITY_TOL:
            raise BoxError(f"negative probability {arr.min():.3e}")
        np.clip(arr, 0.0, None, out=arr)
        diag = _residuals(arr)
        if diag.norm_residual > NORMALIZATION_TOL:
            raise BoxError(f"normalization residual {diag.norm_residual:.3e}")
        if diag.no_signaling_residual > NO_SIGNALING_TOL:
            raise BoxError(f"no-signaling residual {diag.no_signaling_residual:.3e}")
        arr.flags.writeable = False
        object.__setattr__(self, "p", arr)

    def __setattr__(self, name, value):
        raise AttributeError("BehaviorBox is immutable")

    @property
    def x_card(self) -> int:
        return self.p.shape[0]

    @property
    def y_card(self) -> int:
        return self.p.shape[1]

    @property
    def a_card(self) -> int:
        return self.p.shape[2]

    @property
    def b_card(self) -> int:
        return self.p.shape[3]

    @property
    def dims(self) -> tuple[int, int, int, int]:
        return self.p.shape

    @property
    def is_binary(self) -> bool:
        return self.dims == (2, 2, 2, 2)

    def allclose(self, other: "BehaviorBox", atol: float = 1e-12) -> bool:
        return self.dims == other.dims and bool(
            np.allclose(self.p, other.p, rtol=0.0, atol=atol)
        )

    def __repr__(self) -> str:
        return f"BehaviorBox(dims={self.dims})"


def validate(p: "BehaviorBox | np.ndarray") -> BoxDiagnostics:
    """Report residuals for a box or raw probability array.

    Unlike the :class:`BehaviorBox` constructor this never raises, so it can
    diagnose deliberately broken arrays.
    """
    arr = p.p if isinstance(p, BehaviorBox) else np.asarray(p, dtype=np.float64)
    if arr.ndim != 4:
        raise DimensionError(f"expected a 4-d array, got shape {arr.shape}")
    return _residuals(arr)


def _require_binary(box: BehaviorBox) -> None:
    if not box.is_binary:
        raise DimensionError(f"operation requires a 2x2x2x2 box, got {box.dims}")


# ---------------------------------------------------------------------------
# The binary box family
# ---------------------------------------------------------------------------


def _binary_box(entry) -> BehaviorBox:
    p = np.empty((2, 2, 2, 2))
    for x in range(2):
        for y in range(2):
            for a in range(2):
                for b in range(2):
                    p[x, y, a, b] = entry(x, y, a, b)
    return BehaviorBox(p)


def pr_box() -> BehaviorBox:
    """Extremal box with a xor b = xy and uniform marginals (CHSH value 4)."""
    return _binary_box(lambda x, y, a, b: 0.25 * (1 + (-1) ** (a ^ b ^ (x * y))))


def pc_box() -> BehaviorBox:
    """Local box with unbiased, perfectly correlated outputs."""
    return _binary_box(lambda x, y, a, b: 0.25 * (1 + (-1) ** (a ^ b)))


def pf_box() -> BehaviorBox:
    """Isotropic local box on the CHSH facet (PR box mixed with white noise)."""
    return _binary_box(lambda x, y, a, b: 0.125 * (2 + (-1) ** (a ^ b ^ (x * y))))


def white_noise_box() -> BehaviorBox:
    return BehaviorBox(np.full((2, 2, 2, 2), 0.25))


@dataclass(frozen=True)
class FamilyPoint:
    """A point (xi, gamma) of the two-parameter binary family.

    xi weighs the PR component, gamma the perfectly correlated component, and
    the remainder 1 - xi - gamma the facet box; requires xi, gamma >= 0 and
    xi + gamma <= 1.
    """

    xi: float
    gamma: float = 0.0

    def __post_init__(self):
        if not (self.xi >= 0.0 and self.gamma >= 0.0):
            raise BoxError(f"family point needs xi, gamma >= 0, got {self}")
        if self.xi + self.gamma > 1.0 + 1e-15:
            raise BoxError(f"family point needs xi + gamma <= 1, got {self}")


def family_box(pt: "FamilyPoint | float", gamma: float | None = None) -> BehaviorBox:
    """Convex mixture xi*PR + gamma*PC + (1-xi-gamma)*PF.

    Accepts a :class:`FamilyPoint` or the pair of floats directly.
    """
    if not isinstance(pt, FamilyPoint):
        pt = FamilyPoint(float(pt), 0.0 if gamma is None else float(gamma))
    w_f = 1.0 - pt.xi - pt.gamma
    p = pt.xi * pr_box().p + pt.gamma * pc_box().p + w_f * pf_box().p
    return BehaviorBox(p)


def iso_box(xi: float) -> BehaviorBox:
    """Isotropic box: PR mixed with the facet box (gamma = 0)."""
    return family_box(FamilyPoint(xi, 0.0))


def nlc_box(xi: float) -> BehaviorBox:
    """Correlated non-local box: PR mixed with the correlated box (gamma = 1 - xi)."""
    return family_box(FamilyPoint(xi, 1.0 - xi))


def make_named_box(name: str) -> BehaviorBox:
    """Build one of the named 2x2x2x2 boxes (see NAMED_BOXES)."""
    builders = {
        "PR": pr_box,
        "PC": pc_box,
        "PF": pf_box,
        "WHITE_NOISE": white_noise_box,
        "TSIRELSON_ISO": lambda: iso_box(TSIRELSON_XI),
    }
    try:
        return builders[name.upper()]()
    except KeyError:
        raise BoxError(f"unknown box name {name!r}; expected one of {NAMED_BOXES}") from None


# ---------------------------------------------------------------------------
# Algebra
# ---------------------------------------------------------------------------


def tensor_product(p1: BehaviorBox, p2: BehaviorBox) -> BehaviorBox:
    """Product box with copy 1 as the high-order digit of every packed index.

    Packed index contract (shared with the strategy LP and file I/O):
    x = x1 * x_card2 + x2, and likewise for y, a, b.
    """
    big = np.einsum("ijab,klcd->ikjlacbd", p1.p, p2.p)
    d1, d2 = p1.dims, p2.dims
    shape = tuple(d1[i] * d2[i] for i in range(4))
    return BehaviorBox(big.reshape(shape))


def chsh_values(box: BehaviorBox) -> np.ndarray:
    """All 8 CHSH sign-placement values of a binary box.

    Placement k = 4*alpha + 2*beta + gamma evaluates
    (-1)^gamma * sum_xy (-1)^(xy + alpha*x + beta*y) E_xy, with
    E_xy = sum_ab (-1)^(a+b) P(ab|xy).  k = 0 is the canonical
    E00 + E01 + E10 - E11.
    """
    _require_binary(box)
    sign_ab = np.array([[1.0, -1.0], [-1.0, 1.0]])
    corr = np.einsum("xyab,ab->xy", box.p, sign_ab)
    out = np.empty(8)
    for alpha in range(2):
        for beta in range(2):
            s = 0.0
            for x in range(2):
                for y in range(2):
                    s += (-1.0) ** ((x * y) ^ (alpha * x) ^ (beta * y)) * corr[x, y]
            out[4 * alpha + 2 * beta] = s
            out[4 * alpha + 2 * beta + 1] = -s
    return out


def chsh_max(box: BehaviorBox) -> float:
    return float(chsh_values(box).max())


def canonical_placement(box: BehaviorBox) -> int:
    """Index of the lexicographically first sign placement attaining S_max."""
    vals = chsh_values(box)
    return int(np.argmax(vals))  # argmax returns the first maximizer


def closed_form_cost(box: BehaviorBox) -> float:
    """Non-local cost of a binary no-signaling box, max(0, (S_max - 2) / 2).

    For the binary no-signaling polytope this CHSH-based expression equals
    the optimal local-weight decomposition cost computed by the LP module.
    """
    _require_binary(box)
    return max(0.0, (chsh_max(box) - 2.0) / 2.0)


# ---------------------------------------------------------------------------
# Relabelings and twirling
# ---------------------------------------------------------------------------


def _check_perm(perm: tuple[int, ...], n: int, what: str) -> None:
    if sorted(perm) != list(range(n)):
        raise BoxError(f"{what} {perm} is not a permutation of 0..{n - 1}")


@dataclass(frozen=True)
class Relabeling:
    """Local relabeling: input permutations plus input-conditioned output ones.

    x_perm[x] is the original input queried when the relabeled box receives x;
    a_perm[x][a_old] is the relabeled output.  Same convention for Bob.
    """

    x_perm: tuple[int, ...]
    y_perm: tuple[int, ...]
    a_perm: tuple[tuple[int, ...], ...]
    b_perm: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        _check_perm(self.x_perm, len(self.x_perm), "x_perm")
        _check_perm(self.y_perm, len(self.y_perm), "y_perm")
        if len(self.a_perm) != len(self.x_perm) or len(self.b_perm) != len(self.y_perm):
            raise BoxError("output permutation tables must have one row per input")
        for row in self.a_perm:
            _check_perm(row, len(row), "a_perm row")
        for row in self.b_perm:
            _check_perm(row, len(row), "b_perm row")

    @staticmethod
    def identity(dims: tuple[int, int, int, int]) -> "Relabeling":
        xc, yc, ac, bc = dims
        return Relabeling(
            tuple(range(xc)),
            tuple(range(yc)),
            tuple(tuple(range(ac)) for _ in range(xc)),
            tuple(tuple(range(bc)) for _ in range(yc)),
        )

    @staticmethod
    def random(rng: np.random.Generator, dims: tuple[int, int, int, int]) -> "Relabeling":
        xc, yc, ac, bc = dims
        return Relabeling(
            tuple(rng.permutation(xc).tolist()),
            tuple(rng.permutation(yc).tolist()),
            tuple(tuple(rng.permutation(ac).tolist()) for _ in range(xc)),
            tuple(tuple(rng.permutation(bc).tolist()) for _ in range(yc)),
        )


def relabel(box: BehaviorBox, r: Relabeling) -> BehaviorBox:
    """Apply a relabeling; no-signaling is preserved."""
    xc, yc, ac, bc = box.dims
    if (len(r.x_perm), len(r.y_perm)) != (xc, yc) or any(
        len(row) != ac for row in r.a_perm
    ) or any(len(row) != bc for row in r.b_perm):
        raise DimensionError("relabeling dimensions do not match box")
    out = np.empty_like(box.p)
    for x in range(xc):
        inv_a = np.argsort(np.asarray(r.a_perm[x]))
        for y in range(yc):
            inv_b = np.argsort(np.asarray(r.b_perm[y]))
            out[x, y] = box.p[r.x_perm[x], r.y_perm[y]][np.ix_(inv_a, inv_b)]
    return BehaviorBox(out)


def _flip_relabeling(alpha: int, beta: int, gamma: int) -> Relabeling:
    """x -> x + alpha, y -> y + beta, a -> a + gamma (mod 2)."""
    flip = (1, 0)
    ident = (0, 1)
    a_row = flip if gamma else ident
    return Relabeling(
        x_perm=(alpha, 1 - alpha),
        y_perm=(beta, 1 - beta),
        a_perm=(a_row, a_row),
        b_perm=(ident, ident),
    )


def _group_element(box_p: np.ndarray, alpha: int, beta: int, gamma: int) -> np.ndarray:
    """One PR-preserving relabeling: query (x+alpha, y+beta), correct outputs."""
    out = np.empty_like(box_p)
    for x in range(2):
        for y in range(2):
            for a in range(2):
                for b in range(2):
                    ap = a ^ (beta * x) ^ (alpha * beta) ^ gamma
                    bp = b ^ (alpha * y) ^ gamma
                    out[x, y, a, b] = box_p[x ^ alpha, y ^ beta, ap, bp]
    return out


def twirl(box: BehaviorBox) -> BehaviorBox:
    """Shared-randomness relabeling average onto the isotropic axis.

    First a relabeling moves the maximal CHSH placement to the canonical one,
    then the 8 PR-preserving group elements are averaged.  The result has all
    four correlators equal in magnitude with signs (+,+,+,-) and canonical
    CHSH value equal to the input's S_max, hence the same non-local cost.
    """
    _require_binary(box)
    k = canonical_placement(box)
    a_star, b_star, g_star = (k >> 2) & 1, (k >> 1) & 1, k & 1
    # Input flips by (beta*, alpha*) move placement (alpha*, beta*, gamma*)
    # to canonical; the output flip absorbs the sign.
    canon = relabel(box, _flip_relabeling(b_star, a_star, g_star ^ (a_star & b_star)))
    acc = np.zeros((2, 2, 2, 2))
    for alpha in range(2):
        for beta in range(2):
            for gamma in range(2):
                acc += _group_element(canon.p, alpha, beta, gamma)
    return BehaviorBox(acc / 8.0)


# ---------------------------------------------------------------------------
# Extremal boxes of the binary no-signaling polytope, random sampling
# ---------------------------------------------------------------------------


def local_deterministic_boxes() -> list[BehaviorBox]:
    """The 16 deterministic binary boxes a = f(x), b = g(y)."""
    boxes = []
    for fa0 in range(2):
        for fa1 in range(2):
            for fb0 in range(2):
                for fb1 in range(2):
                    p = np.zeros((2, 2, 2, 2))
                    fa, fb = (fa0, fa1), (fb0, fb1)
                    for x in range(2):
                        for y in range(2):
                            p[x, y, fa[x], fb[y]] = 1.0
                    boxes.append(BehaviorBox(p))
    return boxes


def pr_variant_boxes() -> list[BehaviorBox]:
    """The 8 extremal non-local boxes a + b = xy + alpha*x + beta*y + gamma."""
    boxes = []
    for alpha in range(2):
        for beta in range(2):
            for gamma in range(2):
                p = np.zeros((2, 2, 2, 2))
                for x in range(2):
                    for y in range(2):
                        for a in range(2):
                            b = a ^ (x * y) ^ (alpha * x) ^ (beta * y) ^ gamma
                            p[x, y, a, b] = 0.5
                boxes.append(BehaviorBox(p))
    return boxes


def extremal_boxes() -> list[BehaviorBox]:
    """All 24 vertices of the binary no-signaling polytope."""
    return local_deterministic_boxes() + pr_variant_boxes()


def random_ns_box(rng: np.random.Generator, concentration: float = 1.0) -> BehaviorBox:
    """Dirichlet mixture of the 24 extremal boxes (exactly no-signaling)."""
    verts = extremal_boxes()
    w = rng.dirichlet(np.full(len(verts), concentration))
    p = sum(wi * v.p for wi, v in zip(w, verts))
    return BehaviorBox(p)


# ---------------------------------------------------------------------------
# Box file format
# ---------------------------------------------------------------------------


def box_dumps(box: BehaviorBox) -> str:
    """Serialize to the JSON box format with round-trip-exact floats."""
    entries = ", ".join(format(v, ".17g") for v in box.p.ravel(order="C"))
    return (
        "{\n"
        f'  "x_card": {box.x_card},\n'
        f'  "y_card": {box.y_card},\n'
        f'  "a_card": {box.a_card},\n'
        f'  "b_card": {box.b_card},\n'
        f'  "p": [{entries}]\n'
        "}\n"
    )


def box_loads(text: str) -> BehaviorBox:
    obj = json.loads(text)
    try:
        dims = tuple(int(obj[k]) for k in ("x_card", "y_card", "a_card", "b_card"))
        flat = np.asarray(obj["p"], dtype=np.float64)
    except (KeyError, TypeError) as exc:
        raise BoxError(f"malformed box file: {exc}") from exc
    if flat.size != int(np.prod(dims)):
        raise BoxError(
            f"box file has {flat.size} entries, dims {dims} need {int(np.prod(dims))}"
        )
    return BehaviorBox(flat.reshape(dims))


def write_box(box: BehaviorBox, path: "str | Path") -> None:
    Path(path).write_text(box_dumps(box), encoding="utf-8")


def read_box(path: "str | Path") -> BehaviorBox:
    return box_loads(Path(path).read_text(encoding="utf-8"))
