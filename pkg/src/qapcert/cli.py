"""Command-line front end.

Exit codes: 0 success or certified, 1 refuted, 2 budget exhausted,
3 file not found / unreadable, 4 malformed input, 5 any other qapcert error.

Every run writes a JSON manifest (command line, input hashes, resolved
configuration, tool version, wall time, report reference). Reports
themselves carry no timing so reruns can be compared byte for byte.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import sys
import time
import warnings
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import __version__
from .bb import BbConfig, certify, score_node_average
from .bounding import BounderSpec, available_bounders
from .estimator import EstimatorConfig, estimate
from .exceptions import BudgetExhaustedError, NotSelectorStructure, QapcertError
from .instance import (
    CardBqop,
    QapInstance,
    bqop_objective,
    format_solution,
    parse_bqop,
    parse_qaplib,
    parse_solution,
    qap_objective,
    serialize_bqop,
)
from .reduction import (
    binary_to_permutation,
    emit_general_model,
    find_clones,
    permutation_to_binary,
    reduce_to_bqop,
    serialize_general_model,
)
from .subproblem import NodeKey, default_lambda, reduce, serialize_qubo, to_qubo
from .symmetry import PermutationGroup, discover_automorphisms, expand_solution, orbits, setwise_stabilizer

EXIT_OK, EXIT_REFUTED, EXIT_BUDGET, EXIT_IO, EXIT_FORMAT, EXIT_ERROR = range(6)
# published distinct-image counts for the tai256c best-known solution; they disagree
EXPANSION_REFERENCE = (1028, 1024)

log = logging.getLogger("qapcert")


# ---------------------------------------------------------------------------
# loading
# ---------------------------------------------------------------------------


class Problem:
    """A loaded input: the BQOP plus, for QAPLIB files, the original QAP and its clone classes."""

    def __init__(self, path: Path, bqop: CardBqop, qap: QapInstance | None = None, classes=None):
        self.path, self.bqop, self.qap, self.classes = path, bqop, qap, classes


def _is_bqop_text(text: str) -> bool:
    head = text.lstrip().split("\n", 1)[0].split()
    return len(head) == 4 and not head[3].lstrip("-").isdigit()


def read_input(path: str | Path) -> str:
    return Path(path).read_text()


def load_problem(path) -> Problem:
    path = Path(path)
    text = read_input(path)
    if _is_bqop_text(text):
        return Problem(path, parse_bqop(text, name=path.stem))
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        qap = parse_qaplib(text, name=path.stem)
    for w in caught:
        log.warning("%s", w.message)
    classes = find_clones(qap.A)
    return Problem(path, reduce_to_bqop(qap, classes), qap, classes)


def _sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _index_list(text: str | None) -> list[int]:
    """``"1,5,9"`` or ``"3-7"`` (1-based, inclusive ranges) to 0-based indices."""
    if not text:
        return []
    out = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        lo, sep, hi = part.partition("-")
        if sep:
            out.extend(range(int(lo) - 1, int(hi)))
        else:
            out.append(int(part) - 1)
    return sorted(set(out))


def _one_based(idx) -> list[int]:
    return [int(i) + 1 for i in idx]


def _json_text(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _emit(payload_text: str, report_path: str | None) -> None:
    if report_path:
        Path(report_path).write_text(payload_text)
    else:
        sys.stdout.write(payload_text)


# ---------------------------------------------------------------------------
# subcommands; each returns (exit code, report dict or None, config dict)
# ---------------------------------------------------------------------------


def cmd_convert(args):
    path = Path(args.instance)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        qap = parse_qaplib(read_input(path), name=path.stem, strict=args.strict)
    for w in caught:
        log.warning("%s", w.message)
    classes = find_clones(qap.A)
    report = {
        "instance": str(path),
        "n": qap.n,
        "classes": [_one_based(c) for c in classes.classes],
        "class_sizes": classes.sizes.tolist(),
        "reduced_A": classes.reduced_A.tolist(),
        "selector": None,
    }
    out = Path(args.output)
    try:
        bqop = reduce_to_bqop(qap, classes)
    except NotSelectorStructure as exc:
        out.write_text(serialize_general_model(emit_general_model(qap, classes)))
        report["output"] = {"kind": "general-model", "path": str(out)}
        report["notice"] = f"NotSelectorStructure: {exc}"
        print(f"not a selector instance ({exc}); wrote the class-assignment model to {out}", file=sys.stderr)
    else:
        out.write_text(serialize_bqop(bqop))
        u = classes.selector_class
        report["selector"] = {"class": u + 1, "m": bqop.m, "scale": bqop.scale}
        report["output"] = {"kind": "bqop", "path": str(out)}
        if args.general_model:
            Path(args.general_model).write_text(serialize_general_model(emit_general_model(qap, classes)))
    if args.format == "text":
        lines = [f"n = {qap.n}", f"clone classes = {classes.n_classes}"]
        for c in report["classes"]:
            lines.append(f"  size {len(c):4d}: {_ranges(c)}")
        lines.append(f"reduced A = {report['reduced_A']}")
        if report["selector"]:
            s = report["selector"]
            lines.append(f"selector class {s['class']}: m = {s['m']}, scale = {s['scale']}")
        _emit("\n".join(lines) + "\n", args.report)
    else:
        _emit(_json_text(report), args.report)
    return EXIT_OK, report, {"strict": args.strict, "output": str(out)}


def _ranges(idx: list[int]) -> str:
    """Compress sorted integers into ``a..b`` runs."""
    runs, start = [], None
    for k, v in enumerate(idx):
        if start is None:
            start = v
        if k + 1 == len(idx) or idx[k + 1] != v + 1:
            runs.append(str(start) if start == v else f"{start}..{v}")
            start = None
    return ", ".join(runs)


def _group(problem: Problem, args) -> PermutationGroup:
    if getattr(args, "no_symmetry", False):
        return PermutationGroup.trivial(problem.bqop.n)
    return discover_automorphisms(problem.bqop.B, args.max_group)


def cmd_symmetry(args):
    prob = load_problem(args.instance)
    G = _group(prob, args)
    I1, I0 = _index_list(args.fix), _index_list(args.zero)
    report = {"instance": str(prob.path), "n": G.n, "group_order": G.order}
    lines = [f"|G| = {G.order}"]
    if args.fix or args.zero:
        key = NodeKey(G.n, tuple(I0), tuple(I1))
        stab = setwise_stabilizer(G, I0, I1)
        orb = orbits(stab, key.F)
        rows = []
        for o in orb:
            child = key.with_ones([int(o[0])])
            score = score_node_average(prob.bqop, child, args.score) if child.I1 and len(child.I1) <= prob.bqop.m else None
            rows.append({"size": len(o), "members": _one_based(o),
                         "score": None if score is None else float(score)})
        report.update({
            "I0": _one_based(I0), "I1": _one_based(I1), "stabilizer_order": stab.order,
            "n_orbits": len(orb),
            "size_profile": {str(k): v for k, v in orb.size_profile().items()},
            "orbits": rows,
        })
        lines.append(f"stabilizer of I0={_one_based(I0)} I1={_one_based(I1)}: order {stab.order}, {len(orb)} orbits")
        lines.append("profile " + ", ".join(f"{k}:{v}" for k, v in report["size_profile"].items()))
        for i, r in enumerate(rows, 1):
            score = "" if r["score"] is None else f"{r['score']:.1f}"
            lines.append(f"{i:4d}  {r['size']:4d}  {score:>14}  {' '.join(map(str, r['members']))}")
    if args.solution:
        kind, sol = parse_solution(read_input(args.solution), G.n)
        x = sol if kind == "binary" else _perm_to_x(prob, sol)
        images = expand_solution(G, x, prob.bqop)
        count = int(len(images))
        report["expansion"] = {
            "count": count,
            "value": bqop_objective(prob.bqop, x),
            "reference_counts": list(EXPANSION_REFERENCE),
            "matches_reference": [count == r for r in EXPANSION_REFERENCE],
        }
        lines.append(f"distinct images of the solution: {count}")
        lines.append(f"note: published counts disagree ({EXPANSION_REFERENCE[0]} vs {EXPANSION_REFERENCE[1]}); "
                     f"computed value {count} "
                     + ("matches " + str(count) if count in EXPANSION_REFERENCE else "matches neither"))
    if args.dump_elements:
        with open(args.dump_elements, "w") as fh:
            for perm in G.elements:
                fh.write(format_solution(perm))
    if args.format == "json":
        _emit(_json_text(report), args.report)
    else:
        _emit("\n".join(lines) + "\n", args.report)
    return EXIT_OK, report, {"fix": _one_based(I1), "zero": _one_based(I0), "max_group": args.max_group,
                             "score": args.score}


def _perm_to_x(prob: Problem, perm) -> np.ndarray:
    if prob.classes is None:
        raise QapcertError("a permutation needs a QAPLIB instance (clone classes unknown for .bqop input)")
    return permutation_to_binary(perm, prob.classes)


def _bounder(args) -> BounderSpec:
    return BounderSpec.parse(args.bounder)


def _target(text: str):
    """Integer targets stay exact; anything else becomes a float."""
    try:
        return int(text)
    except ValueError:
        return float(Fraction(text))


def cmd_certify(args):
    prob = load_problem(args.instance)
    G = _group(prob, args)
    cfg = BbConfig(target=_target(args.target), bounder=_bounder(args), max_nodes=args.max_nodes,
                   max_depth=args.max_depth, workers=args.workers, score=args.score,
                   collect_traces=bool(args.trace_csv))
    rep = certify(prob.bqop, cfg, G)
    payload = rep.to_dict()
    payload["instance"] = str(prob.path)
    payload["group_order"] = G.order
    code = {"certified": EXIT_OK, "refuted": EXIT_REFUTED, "budget": EXIT_BUDGET}[rep.outcome]
    if rep.outcome == "refuted":
        wpath = Path(args.witness or (str(args.report) + ".witness" if args.report else "witness.sol"))
        wpath.write_text(format_solution(rep.witness))
        payload["witness_file"] = str(wpath)
        if prob.classes is not None:
            ppath = wpath.with_name(wpath.name + ".perm")
            ppath.write_text(format_solution(binary_to_permutation(rep.witness, prob.classes)))
            payload["witness_permutation_file"] = str(ppath)
    if args.trace_csv:
        with open(args.trace_csv, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["depth", "node", "status", "p", "a", "b"])
            for depth, node, status, p, a, b in rep.traces:
                w.writerow([depth, node, status, p, repr(a), repr(b)])
    if args.format == "json":
        _emit(_json_text(payload), args.report)
    elif args.format == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["depth", "nodes", "size2_orbits"])
        for k, (t, s2) in enumerate(zip(rep.nodes_per_depth, rep.size2_per_depth)):
            w.writerow([k, t, s2])
        _emit(buf.getvalue(), args.report)
    else:
        lines = [f"outcome: {rep.outcome}", f"target: {rep.target}", f"|G| = {G.order}",
                 f"nodes: {rep.total_nodes}",
                 "counts: " + ", ".join(f"{k}={v}" for k, v in rep.counts.items()),
                 "nodes per depth: " + " ".join(map(str, rep.nodes_per_depth))]
        if rep.outcome == "refuted":
            lines.append(f"witness value {rep.witness_value} written to {payload['witness_file']}")
        if rep.budget_reason:
            lines.append(f"stopped: {rep.budget_reason}")
        _emit("\n".join(lines) + "\n", args.report)
    print(f"certify: {rep.outcome} ({rep.total_nodes} nodes, {rep.wall_time:.2f}s)", file=sys.stderr)
    config = cfg.to_dict()
    config.update(workers=args.workers, no_symmetry=args.no_symmetry)
    return code, payload, config


def cmd_estimate(args):
    prob = load_problem(args.instance)
    G = _group(prob, args)
    cfg = EstimatorConfig(target=_target(args.target), bounder=_bounder(args),
                          full_width_threshold=args.threshold, sample_size=args.sample_size,
                          sample_cutoff=args.sample_cutoff, seed=args.seed, score=args.score,
                          max_nodes=args.max_nodes, workers=args.workers)
    try:
        rep = estimate(prob.bqop, G, cfg)
    except BudgetExhaustedError as exc:
        print(f"estimate: {exc}", file=sys.stderr)
        return EXIT_BUDGET, None, cfg.to_dict()
    payload = rep.to_dict()
    payload["instance"] = str(prob.path)
    payload["group_order"] = G.order
    if args.format == "json":
        _emit(_json_text(payload), args.report)
    elif args.format == "csv":
        _emit(rep.to_csv(), args.report)
    else:
        lines = [f"switch depth: {rep.switch_depth}",
                 "exact counts: " + " ".join(map(str, rep.exact_counts))]
        lines += [f"  k={k:3d}  t_bar={tb:6d}  s={s:4d}  r={r:4d}  t_hat={float(th):.6g}"
                  for k, tb, s, r, th in rep.per_depth]
        lines.append(f"estimated nodes: {float(rep.total_estimate):.6g}")
        _emit("\n".join(lines) + "\n", args.report)
    config = cfg.to_dict()
    config.update(workers=args.workers, no_symmetry=args.no_symmetry)
    return EXIT_OK, payload, config


def cmd_evaluate(args):
    prob = load_problem(args.instance)
    kind, sol = parse_solution(read_input(args.solution), prob.bqop.n)
    report = {"instance": str(prob.path), "solution": str(args.solution), "kind": kind}
    if kind == "permutation":
        if prob.qap is None:
            raise QapcertError("a permutation needs a QAPLIB instance")
        report["qap_objective"] = qap_objective(prob.qap, sol)
        x = permutation_to_binary(sol, prob.classes)
    else:
        x = sol
        if prob.classes is not None:
            report["qap_objective"] = qap_objective(prob.qap, binary_to_permutation(x, prob.classes))
    report["bqop_objective"] = bqop_objective(prob.bqop, x)
    if args.format == "json":
        _emit(_json_text(report), args.report)
    else:
        lines = [f"{k} = {report[k]}" for k in ("qap_objective", "bqop_objective") if k in report]
        _emit("\n".join(lines) + "\n", args.report)
    return EXIT_OK, report, {}


def cmd_export_qubo(args):
    prob = load_problem(args.instance)
    key = NodeKey(prob.bqop.n, tuple(_index_list(args.zero)), tuple(_index_list(args.fix)))
    r = reduce(prob.bqop, key)
    lam = Fraction(args.lam) if args.lam else Fraction(default_lambda(r))
    q = to_qubo(r, lam)
    Path(args.output).write_text(serialize_qubo(q))
    report = {"instance": str(prob.path), "output": str(args.output), "f": r.f, "m_res": r.m_res,
              "lambda": float(lam), "lambda_exact": str(lam), "offset": float(q.offset),
              "I0": _one_based(key.I0), "I1": _one_based(key.I1)}
    if args.format == "json":
        _emit(_json_text(report), args.report)
    else:
        _emit(f"wrote QUBO over {r.f} variables (lambda = {float(lam)!r}) to {args.output}\n", args.report)
    return EXIT_OK, report, {"lambda": str(lam), "fix": report["I1"], "zero": report["I0"]}


# ---------------------------------------------------------------------------
# parser / entry point
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qapcert", description=__doc__.split("\n")[0])
    p.add_argument("--version", action="version", version=f"qapcert {__version__}")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, formats=("json", "text")):
        sp.add_argument("instance", help="QAPLIB .dat file or .bqop file")
        sp.add_argument("--report", help="write the report here instead of stdout")
        sp.add_argument("--format", choices=formats, default=formats[0])
        sp.add_argument("--manifest", help="manifest path (default: <report>.manifest.json or ./qapcert-manifest.json)")
        sp.add_argument("--no-manifest", action="store_true")

    def search(sp):
        sp.add_argument("--target", required=True, help="target lower bound")
        sp.add_argument("--bounder", default="spectral",
                        help=f"name[:key=value,...]; available: {', '.join(available_bounders())}")
        sp.add_argument("--workers", type=int, default=1)
        sp.add_argument("--score", choices=("reduced", "fractional", "exact"), default="reduced")
        sp.add_argument("--no-symmetry", action="store_true", help="use the trivial group")
        sp.add_argument("--max-group", type=int, default=1_000_000)

    sp = sub.add_parser("convert", help="clone reduction to a cardinality BQOP (or the general model)")
    sp.add_argument("instance")
    sp.add_argument("-o", "--output", required=True)
    sp.add_argument("--general-model", help="also write the class-assignment model here")
    sp.add_argument("--strict", action="store_true", help="reject any nonzero diagonal")
    sp.add_argument("--report")
    sp.add_argument("--format", choices=("json", "text"), default="json")
    sp.add_argument("--manifest")
    sp.add_argument("--no-manifest", action="store_true")
    sp.set_defaults(func=cmd_convert)

    sp = sub.add_parser("symmetry", help="automorphism group order, orbits, solution expansion")
    common(sp, ("text", "json"))
    sp.add_argument("--fix", help="indices fixed to 1 (1-based, e.g. 1,5 or 3-7)")
    sp.add_argument("--zero", help="indices fixed to 0")
    sp.add_argument("--solution", help="solution file to expand along the group")
    sp.add_argument("--dump-elements", help="write every group element as a 1-based permutation line")
    sp.add_argument("--score", choices=("reduced", "fractional", "exact"), default="reduced")
    sp.add_argument("--max-group", type=int, default=1_000_000)
    sp.set_defaults(func=cmd_symmetry, no_symmetry=False)

    sp = sub.add_parser("certify", help="prove min >= target or find a witness")
    common(sp, ("json", "csv", "text"))
    search(sp)
    sp.add_argument("--max-nodes", type=int, default=1_000_000)
    sp.add_argument("--max-depth", type=int)
    sp.add_argument("--witness", help="witness file path on refutation")
    sp.add_argument("--trace-csv", help="dump every bracket step as CSV")
    sp.set_defaults(func=cmd_certify)

    sp = sub.add_parser("estimate", help="sample-based tree size estimate")
    common(sp, ("json", "csv", "text"))
    search(sp)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--threshold", type=int, default=1000, help="full-width threshold")
    sp.add_argument("--sample-size", type=int, default=100)
    sp.add_argument("--sample-cutoff", type=int, default=500)
    sp.add_argument("--max-nodes", type=int, default=10_000_000)
    sp.set_defaults(func=cmd_estimate)

    sp = sub.add_parser("evaluate", help="objective of a permutation or 0/1 solution")
    common(sp, ("text", "json"))
    sp.add_argument("solution")
    sp.set_defaults(func=cmd_evaluate)

    sp = sub.add_parser("export-qubo", help="write the penalty QUBO of a node")
    common(sp)
    sp.add_argument("-o", "--output", required=True)
    sp.add_argument("--fix")
    sp.add_argument("--zero")
    sp.add_argument("--lambda", dest="lam", help="penalty (default 1e8 / Frobenius norm)")
    sp.set_defaults(func=cmd_export_qubo)
    return p


def _inputs(args) -> list[str]:
    return [getattr(args, a) for a in ("instance", "solution") if getattr(args, a, None)]


def _write_manifest(args, argv, code, config, wall, report):
    if args.no_manifest:
        return
    path = args.manifest or (f"{args.report}.manifest.json" if args.report else "qapcert-manifest.json")
    inputs = []
    for p in _inputs(args):
        try:
            inputs.append({"path": str(p), "sha256": _sha256(p)})
        except OSError:
            inputs.append({"path": str(p), "sha256": None})
    ref = None
    if args.report and Path(args.report).exists():
        ref = {"path": str(args.report), "sha256": _sha256(args.report)}
    manifest = {
        "tool": "qapcert",
        "version": __version__,
        "command": args.command,
        "argv": list(argv),
        "inputs": inputs,
        "config": config,
        "exit_code": code,
        "outcome": (report or {}).get("outcome"),
        "wall_time": wall,
        "report": ref,
        "numpy": np.__version__,
        "python": sys.version.split()[0],
    }
    Path(path).write_text(_json_text(manifest))


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    t0 = time.perf_counter()
    try:
        code, report, config = args.func(args)
    except OSError as exc:
        print(f"qapcert: I/O error: {exc}", file=sys.stderr)
        code, report, config = EXIT_IO, None, {}
    except ValueError as exc:  # format and validation errors (parser errors subclass ValueError)
        print(f"qapcert: invalid input: {exc}", file=sys.stderr)
        code, report, config = EXIT_FORMAT, None, {}
    except QapcertError as exc:
        print(f"qapcert: {type(exc).__name__}: {exc}", file=sys.stderr)
        code, report, config = EXIT_ERROR, None, {}
    try:
        _write_manifest(args, argv, code, config, time.perf_counter() - t0, report)
    except OSError as exc:
        print(f"qapcert: could not write manifest: {exc}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
