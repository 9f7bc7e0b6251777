"""Command-line front end.

Exit codes: 0 success or pass, 1 verification failure, 2 usage, parse or
applicability error.
"""

from __future__ import annotations

import argparse
import json
import secrets
import sys
import time
import warnings
from pathlib import Path

import numpy as np

from .engine import CapExhausted, new_walk, write_trace
from .experiments import (
    EXPERIMENTS,
    ExperimentConfig,
    moment_check,
    verify_identities,
    write_report,
)
from .generator import (
    Generator,
    GeneratorError,
    adjacency,
    dump_generator,
    is_palindromic,
    load_generator,
    parse_generator,
)
from .mbp import (
    Classification,
    PreconditionError,
    RotorLaw,
    analyze,
    palindromic_first_moment_identity,
)
from .spectral import gamma_closed_form, gamma_matrix, spectral_radius, to_exact

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


# -- argument helpers -----------------------------------------------------------
def _u64(text: str) -> int:
    try:
        v = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be in [0, 2^64)")
    return v


def _positive(text: str) -> int:
    try:
        v = int(float(text)) if "e" in text.lower() else int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def _load(args) -> tuple[Generator, RotorLaw]:
    try:
        g = load_generator(args.generator)
    except OSError as exc:
        raise UsageError(f"cannot read generator {args.generator}: {exc.strerror or exc}") from None
    law_arg = getattr(args, "law", None)
    if law_arg is None:
        law = RotorLaw.for_generator(g)
    elif law_arg == "uniform":
        law = RotorLaw.uniform(g)
    else:
        try:
            text = Path(law_arg).read_text(encoding="utf-8")
        except OSError as exc:
            raise UsageError(f"cannot read law file {law_arg}: {exc.strerror or exc}") from None
        # borrow the generator parser so law files get the same diagnostics
        bare = Generator(g.words)
        law = RotorLaw.for_generator(parse_generator(dump_generator(bare) + text))
    try:
        law.check(g)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    root = getattr(args, "root", 1)
    if not 1 <= root <= g.n_types:
        raise UsageError(f"--root {root} outside 1..{g.n_types}")
    return g, law


def _seed(args) -> int:
    if args.seed is None:
        args.seed = secrets.randbits(63)
        print(f"seed = {args.seed}", file=sys.stderr)
    return args.seed


def _quiet_analyze(g, law):
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        data = analyze(g, law)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    return data


def _matrix_lines(name, a) -> list[str]:
    rows = ["[" + ", ".join(str(v) for v in row) + "]" for row in np.asarray(a)]
    return [f"{name} = [" + ", ".join(rows) + "]"]


def _emit(doc: dict, as_json: bool):
    if as_json:
        print(json.dumps(doc, indent=2, default=str))
    else:
        for k, v in doc.items():
            print(f"{k} = {json.dumps(v, default=str)}")


# -- subcommands ----------------------------------------------------------------
def cmd_analyze(args) -> int:
    g, law = _load(args)
    data = _quiet_analyze(g, law)
    if args.json:
        print(json.dumps(data.to_dict(), indent=2, default=str))
        return EXIT_OK
    lines = [f"n_types = {g.n_types}"]
    lines += _matrix_lines("D", data.D)
    lines += _matrix_lines("M", data.M)
    lines.append(f"rho_M = {data.rho_M:.12g}")
    lines.append(f"classification = {data.classification.value} (rho_M = {data.rho_M!r})")
    if data.classification is Classification.POSITIVE_RECURRENT:
        lines += _matrix_lines("V", data.V)
        lines += _matrix_lines("gamma_matrix", data.gamma_matrix)
        lines.append(f"gamma = {data.gamma:.12g}")
        if data.predicted_limit is not None:
            lines.append(f"predicted_limit = {data.predicted_limit:.12g}")
    for note in data.notes:
        lines.append(f"note = {note}")
    print("\n".join(lines))
    return EXIT_OK


def cmd_simulate(args) -> int:
    g, law = _load(args)
    seed = _seed(args)
    data = _quiet_analyze(g, law)
    if data.classification is Classification.TRANSIENT:
        print("warning: transient walk, sink returns are not guaranteed", file=sys.stderr)
    walk = new_walk(g, law, args.root - 1, seed, max_vertices=args.max_vertices)
    stride = args.stride or max(1, args.steps // 1000)
    exhausted = None
    try:
        if args.trace:
            with open(args.trace, "w", encoding="utf-8", newline="") as fh:
                write_trace(walk, min(args.trace_steps, args.steps), fh)
            if walk.n % stride == 0:
                walk.range_log.append((walk.n, walk.range_size))
        if args.returns:
            while walk.returns < args.returns and walk.n < args.steps:
                walk.advance(min(stride - walk.n % stride, args.steps - walk.n))
                if walk.n % stride == 0:
                    walk.range_log.append((walk.n, walk.range_size))
        else:
            walk.run(args.steps - walk.n, stride=stride)
    except CapExhausted as exc:
        exhausted = str(exc)
    if not walk.range_log or walk.range_log[-1][0] != walk.n:
        walk.range_log.append((walk.n, walk.range_size))

    violations = [v for r in walk.records for v in r.violations]
    doc = {
        "generator": args.generator,
        "root": args.root,
        "seed": seed,
        "steps": walk.n,
        "range": walk.range_size,
        "range_density": walk.range_size / walk.n if walk.n else 0.0,
        "range_by_type": walk.range_by_type.tolist(),
        "traversals_by_type": walk.psi.tolist(),
        "returns": walk.returns,
        "return_times": [r.tau for r in walk.records],
        "predicted_limit": data.predicted_limit,
        "classification": data.classification.value,
        "violations": len(violations),
        "cap_exhausted": exhausted,
    }
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        with (out / "series.csv").open("w", encoding="utf-8") as fh:
            fh.write("n,range\n")
            for n, size in walk.range_log:
                fh.write(f"{n},{size}\n")
        with (out / "returns.csv").open("w", encoding="utf-8") as fh:
            fh.write("k,tau,range,leaves\n")
            for r in walk.records:
                fh.write(f"{r.k},{r.tau},{r.range_size},{sum(r.leaves_by_type)}\n")
        with (out / "summary.txt").open("w", encoding="utf-8") as fh:
            for k, v in doc.items():
                fh.write(f"{k} = {json.dumps(v)}\n")
    if exhausted:
        print(f"notice: vertex cap exhausted after {walk.n} steps; partial series kept",
              file=sys.stderr)
    _emit(doc, args.json)
    if violations:
        for v in violations:
            print(f"violation: {v}", file=sys.stderr)
        return EXIT_FAIL
    return EXIT_OK


def _config(args, g, law, **overrides) -> ExperimentConfig:
    fields = dict(
        generator=g,
        law=law,
        root_type=args.root - 1,
        replicas=args.replicas,
        steps=args.steps,
        returns=args.returns,
        seed=args.seed,
        stride=args.stride or max(1, args.steps // 1000),
        tolerance=getattr(args, "tolerance", None),
        samples=args.samples,
        step_cap=args.step_cap,
        workers=getattr(args, "workers", 1),
        time_budget=getattr(args, "time_budget", None),
        label=str(args.generator),
    )
    fields.update(overrides)
    return ExperimentConfig(**fields)


def _palindromic_lines(g) -> tuple[list[str], bool]:
    """``2M = D`` and the closed-form gamma, for palindromic words under uniform rotors."""
    lines, ok = [], True
    if palindromic_first_moment_identity(g):
        lines.append("2M=D: exact pass")
    else:
        lines.append("2M=D: FAIL")
        ok = False
    d = to_exact(adjacency(g))
    psi = spectral_radius(d.astype(float))
    lines.append(f"psi = rho(D) = {psi:.12g}")
    if psi < 2:
        g_mat = gamma_matrix(d, d / 2)
        gamma = spectral_radius(g_mat.astype(float))
        closed = gamma_closed_form(psi, 2.0)
        match = abs(gamma - closed) <= 1e-9 * max(1.0, closed)
        limit = 0.5 * (1 - 1 / gamma)
        limit_match = abs(limit - (psi - 1) / psi) <= 1e-9
        ok = ok and match and limit_match
        lines.append(
            f"gamma = {gamma:.12g}, closed form psi/(2 - psi) = {closed:.12g}: "
            f"{'pass' if match else 'FAIL'}"
        )
        lines.append(
            f"limit = {limit:.12g}, (psi - 1)/psi = {(psi - 1) / psi:.12g}: "
            f"{'pass' if limit_match else 'FAIL'}"
        )
    else:
        lines.append("psi >= 2: walk is not positive recurrent, no closed-form gamma")
    return lines, ok


def cmd_palindromic(args) -> int:
    g, law = _load(args)
    if not is_palindromic(g):
        raise UsageError("generator is not palindromic")
    lines, ok = _palindromic_lines(g)
    print("\n".join(lines))
    return EXIT_OK if ok else EXIT_FAIL


def cmd_verify(args) -> int:
    g, law = _load(args)
    seed = _seed(args)
    cfg = _config(args, g, law, seed=seed)
    ok = True
    for fn in (verify_identities, lambda c: moment_check(c, gate_second=False)):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            rep = fn(cfg)
        if rep.verdict == "not-applicable":
            print(f"{rep.name}: skipped ({rep.details['reason']})")
            continue
        ok = ok and rep.verdict == "pass"
        d = rep.details
        if rep.name == "verify_identities":
            msg = (f"{d['returns_checked']} returns checked over {cfg.replicas} seeds, "
                   f"{rep.violations} violations")
            if d["first_counterexample"]:
                c = d["first_counterexample"]
                msg += f"; first: seed {c['seed']}, {c['violation']}"
        else:
            msg = (f"{cfg.samples} samples per root type, "
                   f"{len(d['first_moment_misses'])} mean entries outside 3 s.e.; "
                   f"{len(d['second_moment_misses'])} second-moment entries outside 3 s.e., "
                   "reported only")
        print(f"{rep.name}: {rep.verdict} ({msg})")
    if is_palindromic(g) and law.is_uniform():
        lines, pal_ok = _palindromic_lines(g)
        print("\n".join(lines))
        ok = ok and pal_ok
    return EXIT_OK if ok else EXIT_FAIL


def cmd_experiment(args) -> int:
    g, law = _load(args)
    seed = _seed(args)
    cfg = _config(args, g, law, seed=seed)
    t0 = time.perf_counter()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        rep = EXPERIMENTS[args.name](cfg)
    if args.out:
        write_report(rep, args.out)
    doc = rep.summary()
    doc.pop("config")
    _emit(doc, args.json)
    print(f"runtime_seconds = {time.perf_counter() - t0:.2f}", file=sys.stderr)
    if rep.verdict == "not-applicable":
        return EXIT_USAGE
    return EXIT_OK if rep.passed else EXIT_FAIL


# -- parser -----------------------------------------------------------------------
def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="rotortree", description="Rotor walks on periodic trees: analysis and simulation."
    )
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, walk=True):
        sp.add_argument("generator", help="generator TOML file or bundled name (e.g. appendix)")
        sp.add_argument("--law", help="'uniform' or a TOML file of rotor.<i> arrays")
        sp.add_argument("--json", action="store_true", help="structured output")
        if walk:
            sp.add_argument("--root", type=int, default=1, help="root type (1-based)")
            sp.add_argument("--seed", type=_u64, help="u64 seed (random and printed if omitted)")
            sp.add_argument("--stride", type=_positive, help="series stride in steps")

    sp = sub.add_parser("analyze", help="moment matrices, classification, predicted limit")
    common(sp, walk=False)
    sp.set_defaults(func=cmd_analyze)

    sp = sub.add_parser("simulate", help="run one walk and write its range series")
    common(sp)
    sp.add_argument("--steps", type=_positive, default=10**6)
    sp.add_argument("--returns", type=_positive, help="stop at this many sink returns")
    sp.add_argument("--out", help="directory for series.csv, returns.csv, summary.txt")
    sp.add_argument("--trace", help="CSV file for a per-step trace")
    sp.add_argument("--trace-steps", type=_positive, default=1000)
    sp.add_argument("--max-vertices", type=_positive, default=10**7)
    sp.set_defaults(func=cmd_simulate)

    def suite(sp, replicas, returns, samples, step_cap):
        sp.add_argument("--steps", type=_positive, default=10**6)
        sp.add_argument("--returns", type=_positive, default=returns)
        sp.add_argument("--replicas", type=_positive, default=replicas)
        sp.add_argument("--samples", type=_positive, default=samples)
        sp.add_argument("--step-cap", type=_positive, default=step_cap)
        sp.add_argument("--time-budget", type=float, help="seconds; later replicas are skipped")

    sp = sub.add_parser("verify", help="exact identities, moment checks, palindromic checks")
    common(sp)
    suite(sp, replicas=10, returns=20, samples=10**5, step_cap=10**7)
    sp.set_defaults(func=cmd_verify)

    sp = sub.add_parser("experiment", help="run one Monte-Carlo experiment")
    sp.add_argument("name", choices=sorted(EXPERIMENTS))
    common(sp)
    suite(sp, replicas=20, returns=20, samples=10**5, step_cap=10**7)
    sp.add_argument("--out", help="directory for series.csv and summary.txt")
    sp.add_argument("--tolerance", type=float)
    sp.add_argument("--workers", type=_positive, default=1)
    sp.set_defaults(func=cmd_experiment)

    sp = sub.add_parser("palindromic", help="2M = D and closed-form gamma checks")
    common(sp, walk=False)
    sp.set_defaults(func=cmd_palindromic)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    try:
        return args.func(args)
    except (GeneratorError, UsageError, PreconditionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
