"""Series terms of the propagator, truncation, evolution, and oracles.

The order-l contribution to <g| exp(-i H t) |g'> is a sum over index tuples
(g_1 .. g_{l+1}) of the exponential divided difference over the corresponding
energy tuple times the product of coupling matrix elements along the tuple.
Two evaluation paths are provided: direct tuple enumeration (cost ~ D^(l-1)
divided differences) and the block-bidiagonal matrix exponential whose
top block row carries every order at once (cost ~ ((L+1) D)^3).  Three
independent oracles (exact eigensolve, integrated interaction-picture
recurrence, block exponential) cross-check the assembly.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.integrate

from .coeff import dd_exp_batch
from .model import RedividedHamiltonian, SplitHamiltonian, StateVector
from .util import spectral_norm, thread_count

DEFAULT_TUPLE_BUDGET = 200_000
DEFAULT_BLOCK_BUDGET = 2048
MAX_AUTO_ORDER = 16


class BudgetExceededError(RuntimeError):
    """Requested evaluation exceeds the configured cost budget."""


class EigensolveError(RuntimeError):
    """Dense eigendecomposition failed or lost unitarity."""


class QuadratureError(RuntimeError):
    """Integration of the order-l recurrence did not converge."""


@dataclass(frozen=True)
class SeriesTerm:
    order: int
    matrix: np.ndarray
    t: float

    def __post_init__(self):
        if self.order < 1:
            raise ValueError("order must be >= 1")
        if not np.all(np.isfinite(self.matrix)):
            raise ValueError("series term is not finite")


@dataclass(frozen=True)
class TruncatedPropagator:
    t: float
    order_cap: int
    matrix: np.ndarray
    tail_bound: float


@dataclass(frozen=True)
class EvolutionResult:
    times: np.ndarray
    amplitudes: np.ndarray  # (n_times, D)
    order_cap: int
    tail_bounds: np.ndarray
    norm_drift: np.ndarray


# ---------------------------------------------------------------------------
# core engine on raw (energies, coupling) arrays
# ---------------------------------------------------------------------------


def _tuples_cost(dim: int, l: int) -> float:
    return float(dim) ** max(l - 1, 0)


def _select_method(dim: int, l: int, method: str, tuple_budget: int, block_budget: int) -> str:
    if method not in ("auto", "tuples", "block"):
        raise ValueError(f"unknown method {method!r}")
    tuples_ok = _tuples_cost(dim, l) <= tuple_budget
    block_ok = (l + 1) * dim <= block_budget
    if method == "tuples":
        if not tuples_ok:
            raise BudgetExceededError(
                f"tuple enumeration needs {_tuples_cost(dim, l):.3g} interior tuples "
                f"(budget {tuple_budget}); the block method is suggested"
            )
        return "tuples"
    if method == "block":
        if not block_ok:
            raise BudgetExceededError(
                f"block matrix of side {(l + 1) * dim} exceeds budget {block_budget}"
            )
        return "block"
    # auto: prefer the cheaper path by a rough flop model
    cost_t = _tuples_cost(dim, l) * dim * dim * (l + 1)
    cost_b = float((l + 1) * dim) ** 3
    if tuples_ok and (cost_t <= cost_b or not block_ok):
        return "tuples"
    if block_ok:
        return "block"
    raise BudgetExceededError(
        f"no evaluation path within budget for dim={dim}, l={l}"
    )


def _order_matrix_tuples(energies, coupling, l, t):
    dim = energies.size
    out = np.zeros((dim, dim), dtype=complex)
    if l == 1:
        nodes = np.stack(
            [np.repeat(energies, dim), np.tile(energies, dim)], axis=1
        )
        vals, _, _ = dd_exp_batch(nodes, t)
        return vals.reshape(dim, dim) * coupling

    interior = np.indices((dim,) * (l - 1)).reshape(l - 1, -1).T  # (N, l-1)
    n_rows = interior.shape[0]
    for g in range(dim):
        for gp in range(dim):
            idx = np.empty((n_rows, l + 1), dtype=np.intp)
            idx[:, 0] = g
            idx[:, 1:l] = interior
            idx[:, l] = gp
            weights = np.ones(n_rows, dtype=complex)
            for j in range(l):
                weights *= coupling[idx[:, j], idx[:, j + 1]]
            keep = weights != 0
            if not np.any(keep):
                continue
            idx = idx[keep]
            weights = weights[keep]
            # one divided difference per distinct node multiset
            key = np.sort(idx, axis=1)
            uniq, inv = np.unique(key, axis=0, return_inverse=True)
            vals, _, _ = dd_exp_batch(energies[uniq], t)
            out[g, gp] = np.sum(weights * vals[inv])
    return out


def _block_top_row(energies, coupling, L, t):
    """Top block row of the stacked bidiagonal exponential: orders 0..L."""
    dim = energies.size
    side = (L + 1) * dim
    M = np.zeros((side, side), dtype=complex)
    h0 = -1j * t * np.diag(energies.astype(complex))
    v = -1j * t * coupling
    for j in range(L + 1):
        M[j * dim : (j + 1) * dim, j * dim : (j + 1) * dim] = h0
        if j < L:
            M[j * dim : (j + 1) * dim, (j + 1) * dim : (j + 2) * dim] = v
    E = scipy.linalg.expm(M)
    return [E[0:dim, j * dim : (j + 1) * dim] for j in range(L + 1)]


def series_order_matrix(
    energies,
    coupling,
    l: int,
    t: float,
    method: str = "auto",
    tuple_budget: int = DEFAULT_TUPLE_BUDGET,
    block_budget: int = DEFAULT_BLOCK_BUDGET,
) -> np.ndarray:
    """Order-l term matrix for arbitrary split (coupling may carry a diagonal)."""
    energies = np.asarray(energies, dtype=float)
    coupling = np.asarray(coupling, dtype=complex)
    if l < 1:
        raise ValueError("order must be >= 1")
    chosen = _select_method(energies.size, l, method, tuple_budget, block_budget)
    if chosen == "tuples":
        return _order_matrix_tuples(energies, coupling, l, float(t))
    return _block_top_row(energies, coupling, l, float(t))[l]


def series_term(
    m: RedividedHamiltonian,
    l: int,
    t: float,
    method: str = "auto",
    tuple_budget: int = DEFAULT_TUPLE_BUDGET,
    block_budget: int = DEFAULT_BLOCK_BUDGET,
) -> SeriesTerm:
    """Order-l series term on the redivided split (strictly off-diagonal coupling)."""
    mat = series_order_matrix(
        m.shifted_energies, m.offdiagonal, l, t, method, tuple_budget, block_budget
    )
    return SeriesTerm(order=l, matrix=mat, t=float(t))


def _tail_bound(x: float, L: int) -> float:
    """(x^(L+1) / (L+1)!) * e^x, evaluated in logs to avoid overflow."""
    if x <= 0.0:
        return 0.0
    return math.exp((L + 1) * math.log(x) - math.lgamma(L + 2) + x)


def coupling_strength(m: RedividedHamiltonian, tol: float = 1e-6) -> float:
    """Spectral norm of the off-diagonal coupling (power iteration)."""
    return spectral_norm(m.offdiagonal, tol=tol)


def truncated_propagator(
    m: RedividedHamiltonian,
    L: int,
    t: float,
    method: str = "auto",
    tuple_budget: int = DEFAULT_TUPLE_BUDGET,
    block_budget: int = DEFAULT_BLOCK_BUDGET,
    _norm_g: float | None = None,
) -> TruncatedPropagator:
    """diag(exp(-i E' t)) plus all series terms through order L."""
    if L < 0:
        raise ValueError("order cap must be >= 0")
    e = m.shifted_energies
    U = np.diag(np.exp(-1j * e * t)).astype(complex)
    if L > 0 and np.any(m.offdiagonal):
        chosen = _select_method(e.size, L, method, tuple_budget, block_budget)
        if chosen == "block":
            row = _block_top_row(e, m.offdiagonal, L, t)
            for l in range(1, L + 1):
                U = U + row[l]
        else:
            for l in range(1, L + 1):
                U = U + _order_matrix_tuples(e, m.offdiagonal, l, t)
    ng = coupling_strength(m) if _norm_g is None else _norm_g
    return TruncatedPropagator(
        t=float(t), order_cap=L, matrix=U, tail_bound=_tail_bound(ng * abs(t), L)
    )


def auto_order(m: RedividedHamiltonian, t_max: float, tol: float) -> int:
    """Smallest order cap whose tail bound beats tol, capped at MAX_AUTO_ORDER."""
    x = coupling_strength(m) * abs(t_max)
    for L in range(MAX_AUTO_ORDER + 1):
        if _tail_bound(x, L) < tol:
            return L
    return MAX_AUTO_ORDER


def evolve(
    m: RedividedHamiltonian,
    psi0: StateVector,
    times,
    L: int,
    method: str = "auto",
) -> EvolutionResult:
    """Amplitudes of the truncated evolution at each requested time."""
    times = np.asarray(times, dtype=float).reshape(-1)
    if times.size < 1 or not np.all(np.isfinite(times)):
        raise ValueError("times must be a finite non-empty sequence")
    if psi0.dim != m.dim:
        raise ValueError("state dimension does not match model")
    ng = coupling_strength(m)

    def one(t):
        U = truncated_propagator(m, L, t, method=method, _norm_g=ng)
        c = U.matrix @ psi0.amplitudes
        return c, U.tail_bound

    workers = min(thread_count(), times.size)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(one, times))
    else:
        results = [one(t) for t in times]
    amps = np.array([c for c, _ in results])
    tails = np.array([b for _, b in results])
    drift = np.abs(np.linalg.norm(amps, axis=1) - 1.0)
    return EvolutionResult(
        times=times, amplitudes=amps, order_cap=L, tail_bounds=tails, norm_drift=drift
    )


# ---------------------------------------------------------------------------
# oracles
# ---------------------------------------------------------------------------


def _total_matrix(m) -> np.ndarray:
    if isinstance(m, RedividedHamiltonian):
        return m.total()
    if isinstance(m, SplitHamiltonian):
        return m.total()
    return np.asarray(m, dtype=complex)


def oracle_eigensolve(m, t: float) -> np.ndarray:
    """exp(-i H t) through the unitary eigendecomposition of the total H."""
    H = _total_matrix(m)
    try:
        w, V = np.linalg.eigh(H)
    except np.linalg.LinAlgError as exc:
        raise EigensolveError(f"eigensolver failure: {exc}") from exc
    U = (V * np.exp(-1j * w * t)) @ V.conj().T
    drift = np.max(np.abs(U @ U.conj().T - np.eye(H.shape[0])))
    if drift > 1e-12 * max(1.0, H.shape[0]):
        raise EigensolveError(f"propagator unitarity drift {drift:.3e}")
    return U


def oracle_dyson_order(
    m: RedividedHamiltonian, l: int, t: float, quad_tol: float = 1e-8
) -> np.ndarray:
    """Order-l term by adaptive integration of the interaction-picture recurrence.

    The recurrence d b^(j) / d tau = -i V_I(tau) b^(j-1) with constant coupling
    is integrated as one stacked non-stiff system; the order-l coefficient
    matrix is exp(-i H0' t) b^(l)(t).
    """
    if not 1 <= l <= 4:
        raise ValueError("integration oracle supports 1 <= l <= 4")
    dim = m.dim
    e = m.shifted_energies
    g = m.offdiagonal
    if not np.any(g):
        return np.zeros((dim, dim), dtype=complex)
    n = dim * dim

    def rhs(tau, y):
        phase = np.exp(1j * e * tau)
        v_i = (phase[:, None] * g) * phase.conj()[None, :]
        blocks = y.view(complex).reshape(l, dim, dim)
        out = np.empty_like(blocks)
        prev = np.eye(dim, dtype=complex)
        for j in range(l):
            out[j] = -1j * (v_i @ prev)
            prev = blocks[j]
        return out.reshape(-1).view(float)

    y0 = np.zeros(2 * l * n)
    sol = scipy.integrate.solve_ivp(
        rhs,
        (0.0, float(t)),
        y0,
        method="DOP853",
        rtol=max(quad_tol, 1e-12),
        atol=max(quad_tol * 1e-2, 1e-14),
        dense_output=False,
    )
    if not sol.success:
        raise QuadratureError(f"quadrature non-convergence: {sol.message}")
    b_l = sol.y[:, -1].view(complex).reshape(l, dim, dim)[l - 1]
    return np.exp(-1j * e * t)[:, None] * b_l


def oracle_block_order(
    m: RedividedHamiltonian,
    l: int,
    t: float,
    block_budget: int = DEFAULT_BLOCK_BUDGET,
) -> np.ndarray:
    """Order-l term as the top-right block of the stacked bidiagonal exponential."""
    if l < 1:
        raise ValueError("order must be >= 1")
    if (l + 1) * m.dim > block_budget:
        raise BudgetExceededError(
            f"block matrix of side {(l + 1) * m.dim} exceeds budget {block_budget}"
        )
    return _block_top_row(m.shifted_energies, m.offdiagonal, l, float(t))[l]


def derivative_coefficients(m: RedividedHamiltonian, l: int, K: int) -> np.ndarray:
    """Coefficient matrix B_l(K): the part of (H0' + g)^K with exactly l coupling factors.

    Equals the tuple sum of power coefficients C_l^K times coupling products;
    here accumulated by splitting each length-K operator word on its last
    factor.  Zero whenever l > K.
    """
    if l < 1 or K < 0:
        raise ValueError("need l >= 1 and K >= 0")
    dim = m.dim
    if l > K:
        return np.zeros((dim, dim), dtype=complex)
    e = m.shifted_energies
    g = m.offdiagonal
    # rows[j] = B_j(k) as k advances from 0 to K
    rows = [np.eye(dim, dtype=complex)] + [
        np.zeros((dim, dim), dtype=complex) for _ in range(l)
    ]
    for _ in range(K):
        new = [rows[0] * e[None, :]]
        for j in range(1, l + 1):
            new.append(rows[j] * e[None, :] + rows[j - 1] @ g)
        rows = new
    return rows[l]
