"""Contraction / anti-contraction decomposition of coupling products.

An order-l term sums products of l strictly off-diagonal coupling elements
over index tuples (g_1 .. g_{l+1}).  Decomposing each non-adjacent index pair
into an equal (delta, "c") and an unequal (eta, "n") part splits the term into
pieces whose apparent energy-denominator singularities cancel by construction.
Stage j of the decomposition works on pairs (g_k, g_{k+1+j}); a pair whose
relation is already forced by earlier constraints (or by the off-diagonal
coupling, which keeps adjacent indices distinct) is marked "k" and not split.
This reproduces exactly 2 / 5 / 15 / 52 / 203 nontrivial pieces for orders
2 through 6.

Pieces are evaluated with the same confluent divided-difference machinery as
the propagator, so repeated nodes (the delta-contracted indices) are handled
as limits rather than 0/0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .coeff import dd_exp_batch
from .model import RedividedHamiltonian, SplitHamiltonian, StateVector
from .propagator import series_order_matrix

MIN_PATTERN_ORDER = 2
MAX_PATTERN_ORDER = 6

_TIME_CLASSES = ("e", "te", "t2e", "t3e")


@dataclass(frozen=True)
class ContractionPattern:
    """One nontrivial term of the staged decomposition at a given order.

    ``groups[j-1]`` is the stage-j string over {c, n, k} (length order - j);
    ``classes`` are the equal-index groups and ``ne_pairs`` the explicitly
    unequal index pairs implied by the c/n decisions (indices run 0..order
    for the tuple positions g_1..g_{l+1}).
    """

    order: int
    groups: tuple[str, ...]
    classes: tuple[tuple[int, ...], ...]
    ne_pairs: tuple[tuple[int, int], ...]

    def __post_init__(self):
        if len(self.groups) != self.order - 1:
            raise ValueError("one group per decomposition stage expected")
        for j, s in enumerate(self.groups, start=1):
            if len(s) != self.order - j or set(s) - {"c", "n", "k"}:
                raise ValueError(f"bad stage-{j} group {s!r}")

    def __str__(self):
        shown = [s for s in self.groups if set(s) != {"k"}]
        return ",".join(shown) if shown else "k" * (self.order - 1)

    @property
    def diag_class(self) -> str:
        c0 = next(c for c in self.classes if 0 in c)
        return "D" if self.order in c0 else "N"

    @property
    def time_class(self) -> str:
        power = max(len(c) for c in self.classes) - 1
        return _TIME_CLASSES[power]


@dataclass(frozen=True)
class TermPiece:
    label: str
    matrix: np.ndarray
    time_class: str
    diag_class: str | None
    pattern: ContractionPattern | None = None

    def __post_init__(self):
        if self.time_class not in _TIME_CLASSES:
            raise ValueError(f"unknown time class {self.time_class!r}")
        if self.diag_class not in ("D", "N", None):
            raise ValueError(f"unknown diagonal class {self.diag_class!r}")
        off = self.matrix - np.diag(np.diag(self.matrix))
        if self.diag_class == "D" and np.any(off != 0):
            raise ValueError("D piece must be diagonal")
        if self.diag_class == "N" and np.any(np.diag(self.matrix) != 0):
            raise ValueError("N piece must have zero diagonal")


class _Constraints:
    """Union-find over tuple positions plus known-unequal root pairs."""

    def __init__(self, n: int):
        self.parent = list(range(n))
        # adjacent positions always carry distinct indices (coupling is
        # strictly off-diagonal)
        self.unequal = {frozenset((i, i + 1)) for i in range(n - 1)}

    def find(self, i: int) -> int:
        while self.parent[i] != i:
            self.parent[i] = self.parent[self.parent[i]]
            i = self.parent[i]
        return i

    def copy(self) -> "_Constraints":
        c = _Constraints.__new__(_Constraints)
        c.parent = list(self.parent)
        c.unequal = set(self.unequal)
        return c

    def relation(self, a: int, b: int) -> str | None:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return "eq"
        if frozenset((ra, rb)) in self.unequal:
            return "ne"
        return None

    def merge(self, a: int, b: int) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return
        self.parent[rb] = ra
        renamed = set()
        for pair in self.unequal:
            renamed.add(frozenset(self.find(x) for x in pair))
        self.unequal = renamed

    def forbid(self, a: int, b: int) -> None:
        self.unequal.add(frozenset((self.find(a), self.find(b))))


def _stage_pairs(l: int):
    for j in range(1, l):
        yield [(k, k + 1 + j) for k in range(l - j)]


def enumerate_patterns(l: int) -> list[ContractionPattern]:
    """All nontrivial contraction / anti-contraction patterns of order l."""
    if not MIN_PATTERN_ORDER <= l <= MAX_PATTERN_ORDER:
        raise ValueError(
            f"unsupported order {l}: patterns are defined for "
            f"{MIN_PATTERN_ORDER} <= l <= {MAX_PATTERN_ORDER}"
        )
    stages = list(_stage_pairs(l))
    flat_pairs = [p for stage in stages for p in stage]
    out: list[ContractionPattern] = []

    def rec(pos: int, cons: _Constraints, letters: list[str], ne_pairs: list):
        if pos == len(flat_pairs):
            groups, k = [], 0
            for stage in stages:
                groups.append("".join(letters[k : k + len(stage)]))
                k += len(stage)
            roots = {}
            for i in range(l + 1):
                roots.setdefault(cons.find(i), []).append(i)
            out.append(
                ContractionPattern(
                    order=l,
                    groups=tuple(groups),
                    classes=tuple(tuple(v) for v in roots.values()),
                    ne_pairs=tuple(ne_pairs),
                )
            )
            return
        a, b = flat_pairs[pos]
        rel = cons.relation(a, b)
        if rel is not None:
            letters.append("k")
            rec(pos + 1, cons, letters, ne_pairs)
            letters.pop()
            return
        eq = cons.copy()
        eq.merge(a, b)
        letters.append("c")
        rec(pos + 1, eq, letters, ne_pairs)
        letters.pop()
        ne = cons.copy()
        ne.forbid(a, b)
        letters.append("n")
        rec(pos + 1, ne, letters, ne_pairs + [(a, b)])
        letters.pop()

    rec(0, _Constraints(l + 1), [], [])
    return out


# ---------------------------------------------------------------------------
# piece evaluation
# ---------------------------------------------------------------------------


def _constrained_sum(energies, coupling, idx_template, free_axes, ne_checks, t):
    """Sum dd * coupling product over tuples from an index template.

    idx_template : (l+1,) int array with -1 at positions indexed by free_axes;
    free positions run over all levels, then rows failing ``ne_checks``
    (pairs of tuple positions required unequal) are dropped.
    """
    dim = energies.size
    l = idx_template.size - 1
    n_free = len(free_axes)
    if n_free:
        grid = np.indices((dim,) * n_free).reshape(n_free, -1).T
    else:
        grid = np.zeros((1, 0), dtype=np.intp)
    idx = np.tile(idx_template, (grid.shape[0], 1))
    for col, pos in enumerate(free_axes):
        for p in pos:
            idx[:, p] = grid[:, col]
    keep = np.ones(idx.shape[0], dtype=bool)
    for i, j in ne_checks:
        keep &= idx[:, i] != idx[:, j]
    idx = idx[keep]
    if idx.shape[0] == 0:
        return 0.0 + 0.0j
    weights = np.ones(idx.shape[0], dtype=complex)
    for j in range(l):
        weights *= coupling[idx[:, j], idx[:, j + 1]]
    nz = weights != 0
    if not np.any(nz):
        return 0.0 + 0.0j
    idx, weights = idx[nz], weights[nz]
    vals, _, _ = dd_exp_batch(energies[idx], t)
    return complex(np.sum(weights * vals))


def pattern_piece_matrix(
    energies, coupling, pattern: ContractionPattern, t: float
) -> np.ndarray:
    """Matrix of one decomposition piece on a raw (energies, coupling) split."""
    energies = np.asarray(energies, dtype=float)
    coupling = np.asarray(coupling, dtype=complex)
    dim = energies.size
    l = pattern.order
    class_of = np.empty(l + 1, dtype=int)
    for cid, members in enumerate(pattern.classes):
        for m in members:
            class_of[m] = cid
    c_first = class_of[0]
    c_last = class_of[l]
    interior = [
        tuple(members)
        for cid, members in enumerate(pattern.classes)
        if cid not in (c_first, c_last)
    ]
    out = np.zeros((dim, dim), dtype=complex)
    diagonal = pattern.diag_class == "D"
    for g in range(dim):
        gps = [g] if diagonal else [x for x in range(dim) if x != g]
        for gp in gps:
            template = np.full(l + 1, -1, dtype=np.intp)
            for p in pattern.classes[c_first]:
                template[p] = g
            for p in pattern.classes[c_last]:
                template[p] = gp
            out[g, gp] = _constrained_sum(
                energies, coupling, template, interior, pattern.ne_pairs, t
            )
    return out


def second_order_pieces(m: RedividedHamiltonian, t: float) -> tuple[TermPiece, TermPiece]:
    """Contraction and anti-contraction pieces of the order-2 term.

    The contraction piece carries the secular (-i t) part and the squared
    denominators; their sum equals the plain order-2 series term.
    """
    pieces = [
        TermPiece(
            label=str(p),
            matrix=pattern_piece_matrix(m.shifted_energies, m.offdiagonal, p, t),
            time_class=p.time_class,
            diag_class=p.diag_class,
            pattern=p,
        )
        for p in enumerate_patterns(2)
    ]
    return pieces[0], pieces[1]


def third_order_pieces(m: RedividedHamiltonian, t: float) -> list[TermPiece]:
    """The five order-3 pieces (cc, cn, nc, nn-c, nn-n), summing to the term."""
    return [
        TermPiece(
            label=str(p),
            matrix=pattern_piece_matrix(m.shifted_energies, m.offdiagonal, p, t),
            time_class=p.time_class,
            diag_class=p.diag_class,
            pattern=p,
        )
        for p in enumerate_patterns(3)
    ]


def mixed_second_order_pieces(m: SplitHamiltonian, t: float) -> list[TermPiece]:
    """Order-2 pieces of the un-redivided split by diagonal/off-diagonal factors.

    Splitting each coupling factor into its diagonal part h and off-diagonal
    part g yields four pieces (hh, hg, gh, gg) whose sum is the order-2 term
    of the original split.
    """
    e = np.asarray(m.energies, dtype=float)
    v = m.perturbation
    h = np.diag(v).real
    g = v.copy()
    np.fill_diagonal(g, 0.0)
    dim = e.size

    hh = np.zeros((dim, dim), dtype=complex)
    hg = np.zeros((dim, dim), dtype=complex)
    gh = np.zeros((dim, dim), dtype=complex)
    gg = np.zeros((dim, dim), dtype=complex)
    for a in range(dim):
        vals, _, _ = dd_exp_batch(np.array([[e[a]] * 3]), t)
        hh[a, a] = h[a] * h[a] * vals[0]
        for b in range(dim):
            if b == a:
                continue
            vals, _, _ = dd_exp_batch(np.array([[e[a], e[a], e[b]]]), t)
            hg[a, b] = h[a] * g[a, b] * vals[0]
            vals, _, _ = dd_exp_batch(np.array([[e[a], e[b], e[b]]]), t)
            gh[a, b] = g[a, b] * h[b] * vals[0]
    for a in range(dim):
        for b in range(dim):
            nodes = np.stack(
                [np.full(dim, e[a]), e, np.full(dim, e[b])], axis=1
            )
            vals, _, _ = dd_exp_batch(nodes, t)
            gg[a, b] = np.sum(g[a, :] * g[:, b] * vals)
    return [
        TermPiece(label="hh", matrix=hh, time_class="t2e", diag_class="D"),
        TermPiece(label="hg", matrix=hg, time_class="te", diag_class="N"),
        TermPiece(label="gh", matrix=gh, time_class="te", diag_class="N"),
        TermPiece(label="gg", matrix=gg, time_class="te", diag_class=None),
    ]


def redivided_closed_form_order2(
    m: SplitHamiltonian, t: float, psi0: StateVector
) -> np.ndarray:
    """Second-order amplitudes with every level replaced by its shifted value.

    Direct evaluation of the closed shifted-level form (diagonal terms via the
    explicit confluent limits), independent of the series engine; must agree
    with evolving the redivided model truncated at order 2.
    """
    e = np.asarray(m.energies, dtype=float) + np.diag(m.perturbation).real
    g = m.perturbation.copy()
    np.fill_diagonal(g, 0.0)
    dim = e.size
    if psi0.dim != dim:
        raise ValueError("state dimension does not match model")
    ph = np.exp(-1j * e * t)
    K = np.diag(ph).astype(complex)
    for a in range(dim):
        for b in range(dim):
            if a != b:
                K[a, b] += (ph[a] - ph[b]) / (e[a] - e[b]) * g[a, b]
            for c in range(dim):
                w = g[a, c] * g[c, b]
                if w == 0:
                    continue
                if a == b:
                    # confluent bracket over (e_a, e_c, e_a)
                    d = e[a] - e[c]
                    K[a, b] += w * (
                        (-ph[a] + ph[c]) / d**2 + (-1j * t) * ph[a] / d
                    )
                else:
                    dab = e[a] - e[b]
                    dac = e[a] - e[c]
                    dcb = e[c] - e[b]
                    if c == a:
                        K[a, b] += w * ((-1j * t) * ph[a] / dab - (ph[a] - ph[b]) / dab**2)
                    elif c == b:
                        K[a, b] += w * ((-1j * t) * ph[b] / dab + (ph[a] - ph[b]) / dab**2)
                    else:
                        K[a, b] += w * (
                            ph[a] / (dac * dab) - ph[c] / (dac * dcb) + ph[b] / (dab * dcb)
                        )
    return K @ psi0.amplitudes


# ---------------------------------------------------------------------------
# secular coefficient extraction and resummed aggregates
# ---------------------------------------------------------------------------


def extract_secular_coefficients(
    sample_fn,
    energies,
    max_power: int,
    oversample: int = 4,
    t_scale: float | None = None,
) -> np.ndarray:
    """Fit matrices to sum_{j,a} c[.., j, a] t^a exp(-i E_j t) on a t stencil.

    sample_fn(t) must return a (D, D) matrix analytic in t.  The stencil must
    span several oscillation periods of the smallest level gap or the basis
    functions are numerically collinear; the default window is 8 pi over that
    gap, and the (oversampled, column-normalized) generalized Vandermonde
    system is solved by least squares.  Returns the coefficient array of
    shape (D, D, D, max_power + 1) indexed (row, col, frequency, power).
    """
    e = np.asarray(energies, dtype=float)
    dim = e.size
    if t_scale is None:
        if dim > 1:
            gaps = np.abs(e[:, None] - e[None, :]) + np.diag(np.full(dim, np.inf))
            min_gap = float(gaps.min())
        else:
            min_gap = 1.0
        if min_gap <= 0.0:
            raise ValueError("coefficient extraction needs distinct level energies")
        t_scale = 8.0 * math.pi / min_gap
    n_basis = dim * (max_power + 1)
    n_samples = max(oversample * n_basis, n_basis + 4)
    ts = t_scale * np.arange(1, n_samples + 1) / n_samples
    phases = np.exp(-1j * np.outer(ts, e))  # (N, D)
    powers = ts[:, None] ** np.arange(max_power + 1)[None, :]
    design = (phases[:, :, None] * powers[:, None, :]).reshape(n_samples, n_basis)
    col_scale = np.linalg.norm(design, axis=0)
    design = design / col_scale
    rhs = np.stack([np.asarray(sample_fn(t), dtype=complex).ravel() for t in ts])
    coef, *_ = np.linalg.lstsq(design, rhs, rcond=None)
    coef = coef / col_scale[:, None]
    coef = coef.reshape(dim, max_power + 1, dim, dim)
    return np.transpose(coef, (2, 3, 0, 1))


def _e_class_arrays(m: RedividedHamiltonian, upto: int) -> list[np.ndarray]:
    """t^0 coefficient arrays c_m[row, col, freq] of the order-m terms, m <= upto."""
    e = m.shifted_energies
    g = m.offdiagonal
    dim = m.dim
    c0 = np.zeros((dim, dim, dim), dtype=complex)
    for i in range(dim):
        c0[i, i, i] = 1.0
    arrays = [c0]
    for order in range(1, upto + 1):
        coef = extract_secular_coefficients(
            lambda t, o=order: series_order_matrix(e, g, o, t),
            e,
            max_power=max(order // 2, 1),
        )
        arrays.append(coef[:, :, :, 0])
    return arrays


def _ordered_g_tuples(total: int, count: int):
    """Ordered tuples of revision orders (each 2..5) with the given sum."""
    if count == 0:
        if total == 0:
            yield ()
        return
    for b in range(2, 6):
        rest = total - b
        if 2 * (count - 1) <= rest <= 5 * (count - 1):
            for tail in _ordered_g_tuples(rest, count - 1):
                yield (b,) + tail


def secular_classes_for_order(l: int) -> tuple[int, ...]:
    """Secular powers with closed resummed forms at order l."""
    if l in (4, 5):
        return (1, 2)
    if l == 6:
        return (2, 3)
    raise ValueError("resummed aggregates are defined for l in {4, 5, 6}")


def secular_aggregate_coefficients(
    m: RedividedHamiltonian, l: int
) -> dict[int, np.ndarray]:
    """Predicted coefficient arrays of t^a exp(-i E_j t) classes at order l.

    The resummation rule: the t^a class of the order-l term is
    (-i)^a / a! * sum over ordered revision-order tuples (b_1..b_a) and a
    lower order m with b_1 + .. + b_a + m = l of prod_i G^(b_i) at the
    frequency level times the t^0 class of the order-m term.  Requires a
    nondegenerate shifted spectrum.
    """
    from .improved import revision_energies

    rev = revision_energies(m, max_order=5)
    gvals = {2: rev.g2, 3: rev.g3, 4: rev.g4, 5: rev.g5}
    powers = secular_classes_for_order(l)
    e_class = _e_class_arrays(m, upto=max(l - 2 * min(powers), 0))
    out = {}
    for a in powers:
        pred = np.zeros((m.dim, m.dim, m.dim), dtype=complex)
        for m_low in range(0, l - 2 * a + 1):
            for btuple in _ordered_g_tuples(l - m_low, a):
                gprod = np.ones(m.dim)
                for b in btuple:
                    gprod = gprod * gvals[b]
                pred += e_class[m_low] * gprod[None, None, :]
        out[a] = pred * (-1j) ** a / math.factorial(a)
    return out


def secular_aggregates(m: RedividedHamiltonian, t: float, l: int) -> list[TermPiece]:
    """Resummed t^a exp classes of the order-l term as diagonal/off-diagonal pieces."""
    coeffs = secular_aggregate_coefficients(m, l)
    phases = np.exp(-1j * m.shifted_energies * t)
    pieces = []
    for a, coef in sorted(coeffs.items()):
        mat = (coef * phases[None, None, :]).sum(axis=2) * (t**a)
        diag = np.diag(np.diag(mat))
        pieces.append(
            TermPiece(
                label=f"t{a}e-D",
                matrix=diag,
                time_class=_TIME_CLASSES[a],
                diag_class="D",
            )
        )
        pieces.append(
            TermPiece(
                label=f"t{a}e-N",
                matrix=mat - diag,
                time_class=_TIME_CLASSES[a],
                diag_class="N",
            )
        )
    return pieces
