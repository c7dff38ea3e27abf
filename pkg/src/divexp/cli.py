"""Command-line front door.

Subcommands: propagate, transition, energy, decompose, verify-identity,
demo, bench.  Outputs are deterministic given (inputs, seed): CSV uses '.'
decimals, '\\n' line endings and a header row; JSON is emitted with sorted
keys.  Failures exit nonzero with a machine-readable error record on stderr.
"""

from __future__ import annotations

import argparse
import json
import sys
import time

import numpy as np

from . import contraction, improved, propagator, reference
from .coeff import NodeList, c_closed
from .model import (
    DegeneracyError,
    ModelError,
    StateVector,
    basis_state,
    load_model_path,
    redivide,
)


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


def _write_csv(path, header, rows):
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_fmt(x) if not isinstance(x, str) else x for x in row))
    text = "\n".join(lines) + "\n"
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(path, "w", newline="") as fh:
            fh.write(text)


def _write_json(path, doc):
    text = json.dumps(doc, sort_keys=True, indent=2) + "\n"
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(path, "w", newline="") as fh:
            fh.write(text)


def _times(args) -> np.ndarray:
    if args.t_count < 1:
        raise ValueError("--t-count must be >= 1")
    return np.linspace(args.t_start, args.t_stop, args.t_count)


def _load(args):
    return redivide(load_model_path(args.model))


def cmd_propagate(args) -> int:
    m = _load(args)
    times = _times(args)
    if args.state is not None:
        amps = json.loads(args.state)
        psi0 = StateVector([complex(re, im) for re, im in amps])
    else:
        psi0 = basis_state(m.dim, args.initial)
    L = args.order
    if L is None:
        L = propagator.auto_order(m, float(np.max(np.abs(times))), args.tol)
    res = propagator.evolve(m, psi0, times, L, method=args.method)
    rows = []
    for k, t in enumerate(res.times):
        for g in range(m.dim):
            c = res.amplitudes[k, g]
            rows.append((t, g, c.real, c.imag, abs(c) ** 2, res.tail_bounds[k]))
    if args.format == "csv":
        _write_csv(args.out, ["t", "gamma", "re_c", "im_c", "prob", "tail_bound"], rows)
    else:
        doc = {
            "order_cap": int(L),
            "times": [float(t) for t in res.times],
            "amplitudes": [
                [[float(c.real), float(c.imag)] for c in row] for row in res.amplitudes
            ],
            "tail_bounds": [float(b) for b in res.tail_bounds],
        }
        _write_json(args.out, doc)
    return 0


def cmd_transition(args) -> int:
    m = _load(args)
    times = _times(args)
    rep = improved.improved_transition(m, args.from_level, args.to_level, times)
    if args.format == "csv":
        rows = list(zip(rep.times, rep.p_usual, rep.p_improved, rep.delta))
        _write_csv(args.out, ["t", "p_usual", "p_improved", "delta"], rows)
    else:
        _write_json(
            args.out,
            {
                "from": args.from_level,
                "to": args.to_level,
                "times": [float(t) for t in rep.times],
                "p_usual": [float(p) for p in rep.p_usual],
                "p_improved": [float(p) for p in rep.p_improved],
                "delta": [float(p) for p in rep.delta],
            },
        )
    return 0


def cmd_energy(args) -> int:
    model = load_model_path(args.model)
    doc = {
        "level": args.level,
        "max_order": args.max_order,
        "improved_energy": improved.improved_energy(model, args.level, args.max_order),
    }
    if args.format == "csv":
        _write_csv(
            args.out,
            ["level", "max_order", "improved_energy"],
            [(doc["level"], doc["max_order"], doc["improved_energy"])],
        )
    else:
        _write_json(args.out, doc)
    return 0


def cmd_decompose(args) -> int:
    m = _load(args)
    t = args.t
    if args.decompose_order == 2:
        pieces = list(contraction.second_order_pieces(m, t))
    elif args.decompose_order == 3:
        pieces = contraction.third_order_pieces(m, t)
    else:
        raise ValueError("decompose supports --order 2 or 3")
    term = propagator.series_term(m, args.decompose_order, t, method=args.method)
    total = sum(p.matrix for p in pieces)
    residual = float(np.linalg.norm(total - term.matrix))
    doc = {
        "order": args.decompose_order,
        "t": t,
        "residual_vs_series_term": residual,
        "pieces": [
            {
                "label": p.label,
                "time_class": p.time_class,
                "diag_class": p.diag_class,
                "matrix": [
                    [[float(z.real), float(z.imag)] for z in row] for row in p.matrix
                ],
            }
            for p in pieces
        ],
    }
    _write_json(args.out, doc)
    return 0


def cmd_verify_identity(args) -> int:
    rng = np.random.default_rng(args.seed)
    worst_zero = 0.0
    worst_one = 0.0
    trials = 0
    while trials < args.trials:
        l = int(rng.integers(1, args.l_max + 1))
        nodes = rng.uniform(-1.0, 1.0, size=l + 1)
        if np.min(np.abs(nodes[:, None] - nodes[None, :]) + np.eye(l + 1)) < args.min_gap:
            continue
        trials += 1
        nl = NodeList(tuple(nodes))
        for K in range(l):
            worst_zero = max(worst_zero, abs(c_closed(nl, K)))
        worst_one = max(worst_one, abs(c_closed(nl, l) - 1.0))
    doc = {
        "trials": trials,
        "l_max": args.l_max,
        "min_gap": args.min_gap,
        "seed": args.seed,
        "max_abs_below_order": worst_zero,
        "max_abs_at_order_minus_one": worst_one,
        "pass": bool(worst_zero < args.tol and worst_one < args.tol),
    }
    _write_json(args.out, doc)
    return 0 if doc["pass"] else 3


def cmd_demo(args) -> int:
    if args.system != "two-state":
        raise ValueError("demo knows only the 'two-state' system")
    ts = reference.TwoStateExact(e1=args.e1, e2=args.e2, v=args.v)
    model = ts.to_split_hamiltonian()
    usual = reference.usual_pt_quantities(ts)
    e1_t, e2_t = ts.eigvals
    e1_i = improved.improved_energy(model, 0, max_order=4)
    e2_i = improved.improved_energy(model, 1, max_order=4)
    rows = [
        ("E1", ts.e1, usual.e1_p, e1_i, e1_t),
        ("E2", ts.e2, usual.e2_p, e2_i, e2_t),
    ]
    lines = [
        f"two-state demo: E=({ts.e1:g},{ts.e2:g}), |V|={abs(ts.v):g}",
        f"{'level':<8}{'bare':>14}{'usual':>14}{'improved':>14}{'exact':>14}",
    ]
    for name, bare, us, imp, exact in rows:
        lines.append(f"{name:<8}{bare:>14.8f}{us:>14.8f}{imp:>14.8f}{exact:>14.8f}")
    w = ts.omega
    wt = ts.omega_total
    rev = improved.revision_energies(redivide(model), max_order=4)
    w_i = float(rev.shifted[1] - rev.shifted[0])
    lines.append(
        f"{'omega21':<8}{w:>14.8f}{w:>14.8f}{w_i:>14.8f}{wt:>14.8f}"
    )
    t_peak = np.pi / wt
    lines.append(
        "peak transition probability at t=pi/omega_T: "
        f"usual={float(usual.probability(t_peak)):.8f} "
        f"exact={reference.exact_transition(ts, t_peak):.8f}"
    )
    text = "\n".join(lines) + "\n"
    if args.out in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(args.out, "w", newline="") as fh:
            fh.write(text)
    return 0


def cmd_bench(args) -> int:
    rng = np.random.default_rng(args.seed)
    dims = [int(x) for x in args.dims.split(",")]
    orders = [int(x) for x in args.orders.split(",")]
    rows = []
    for dim in dims:
        h1 = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
        h1 = (h1 + h1.conj().T) / 2.0
        np.fill_diagonal(h1, 0.0)
        from .model import SplitHamiltonian

        model = SplitHamiltonian(energies=np.arange(dim, dtype=float), perturbation=h1)
        m = redivide(model)
        scale = propagator.coupling_strength(m)
        t = args.t / max(scale, 1e-12)
        exact = propagator.oracle_eigensolve(model, t)
        for L in orders:
            for method in ("tuples", "block"):
                try:
                    t0 = time.perf_counter()
                    U = propagator.truncated_propagator(m, L, t, method=method)
                    wall = time.perf_counter() - t0
                except propagator.BudgetExceededError:
                    continue
                err = float(np.linalg.norm(U.matrix - exact))
                rows.append((dim, L, method, wall, err, U.tail_bound))
    _write_csv(
        args.out,
        ["dim", "order_cap", "method", "wall_time_s", "error_vs_oracle", "tail_bound"],
        rows,
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="divexp",
        description="order-by-order propagators, contraction decompositions, "
        "and the improved perturbation scheme for split Hamiltonians",
    )
    sub = p.add_subparsers(dest="command", required=True)

    def add_common(q, model=True, times=False):
        if model:
            q.add_argument("--model", required=True, help="path to a JSON model file")
        if times:
            q.add_argument("--t-start", type=float, default=0.0)
            q.add_argument("--t-stop", type=float, default=1.0)
            q.add_argument("--t-count", type=int, default=11)
        q.add_argument("--out", default=None, help="output path (default stdout)")
        q.add_argument("--format", choices=("csv", "json"), default="csv")
        q.add_argument("--seed", type=int, default=0)
        q.add_argument("--tol", type=float, default=1e-10)
        q.add_argument(
            "--method", choices=("tuples", "block", "auto"), default="auto"
        )

    q = sub.add_parser("propagate", help="evolve a state on a time grid")
    add_common(q, times=True)
    q.add_argument("--order", type=int, default=None, help="order cap (default: auto)")
    q.add_argument("--initial", type=int, default=0, help="initial basis level")
    q.add_argument(
        "--state", default=None, help="initial amplitudes as JSON [[re,im],...]"
    )
    q.set_defaults(func=cmd_propagate)

    q = sub.add_parser("transition", help="usual vs improved transition probability")
    add_common(q, times=True)
    q.add_argument("--from", dest="from_level", type=int, required=True)
    q.add_argument("--to", dest="to_level", type=int, required=True)
    q.set_defaults(func=cmd_transition)

    q = sub.add_parser("energy", help="improved perturbed energy of one level")
    add_common(q)
    q.add_argument("--level", type=int, required=True)
    q.add_argument("--max-order", type=int, default=5, choices=(2, 3, 4, 5))
    q.set_defaults(func=cmd_energy)

    q = sub.add_parser("decompose", help="contraction pieces of one series order")
    add_common(q)
    q.add_argument("--order", dest="decompose_order", type=int, default=2)
    q.add_argument("--t", type=float, default=1.0)
    q.set_defaults(func=cmd_decompose)

    q = sub.add_parser("verify-identity", help="randomized power-sum identity suite")
    q.add_argument("--l-max", type=int, default=8)
    q.add_argument("--trials", type=int, default=1000)
    q.add_argument("--min-gap", type=float, default=1e-3)
    q.add_argument("--tol", type=float, default=1e-9)
    q.add_argument("--seed", type=int, default=0)
    q.add_argument("--out", default=None)
    q.set_defaults(func=cmd_verify_identity)

    q = sub.add_parser("demo", help="closed-form reference system tables")
    q.add_argument("system", choices=("two-state",))
    q.add_argument("--e1", type=float, default=0.0)
    q.add_argument("--e2", type=float, default=1.0)
    q.add_argument("--v", type=float, default=0.1)
    q.add_argument("--out", default=None)
    q.set_defaults(func=cmd_demo)

    q = sub.add_parser("bench", help="timing and error sweep of both term paths")
    q.add_argument("--dims", default="4,8,16")
    q.add_argument("--orders", default="2,4,8")
    q.add_argument("--t", type=float, default=1.0, help="time in units of 1/|g|")
    q.add_argument("--seed", type=int, default=0)
    q.add_argument("--out", default=None)
    q.set_defaults(func=cmd_bench)

    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ModelError, DegeneracyError, ValueError, IndexError, OSError) as exc:
        record = {"error": type(exc).__name__, "message": str(exc)}
        print(json.dumps(record, sort_keys=True), file=sys.stderr)
        return 2
    except (
        propagator.BudgetExceededError,
        propagator.EigensolveError,
        propagator.QuadratureError,
        improved.GoldenRuleError,
    ) as exc:
        record = {"error": type(exc).__name__, "message": str(exc)}
        print(json.dumps(record, sort_keys=True), file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
