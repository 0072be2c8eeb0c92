"""Command-line entry point.

Exit codes: 0 ok, 1 verification failed, 2 input or I/O error, 3 capacity,
4 numerical failure.  Errors are printed to stderr as one JSON object.
Every file written with ``--out`` gets a ``<out>.manifest.json`` sidecar
recording the command, configuration, input hashes and wall time; the main
output itself carries no timestamps, so reruns are byte-identical.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .bits import BitsInstance, bits_feature_matrix, bits_joint, bits_spectrum, feature_sums_on_patterns, parity_functions, ordered_patterns, triangle
from .complexity import error_exponent, monte_carlo_check
from .core import DistributionSet, estimate_distributions, load_csv
from .errors import CommonStructError, DeltaTooLargeError, FormatError
from .linalg import projector_distance
from .mace import MaceConfig, joint_correlation, mace_fit_k
from .mhscore import HTrainConfig, check_mh_identity, mh_score, mh_train, whiten
from .preprocess import PatchGrid, build_patch_dataset, load_images, write_patch_dataset
from .spectral import FeatureSet, build_b, check_lemma1, eigendecompose, features_from_spectrum
from .theory import verify_theorem

EXIT_OK, EXIT_FAIL = 0, 1


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if np.isfinite(x) else str(x)
    return obj


def dumps(obj) -> str:
    return json.dumps(_jsonable(obj), indent=1, sort_keys=True) + "\n"


def _sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


class Run:
    """Collects inputs and writes outputs plus their manifests."""

    def __init__(self, args):
        self.args = args
        self.inputs = {}
        self.start = time.perf_counter()

    def add_input(self, path):
        self.inputs[str(path)] = _sha256(path)

    def config(self) -> dict:
        return {k: v for k, v in vars(self.args).items() if k != "func"}

    def emit(self, payload: dict, out=None):
        text = dumps(payload)
        if out is None:
            sys.stdout.write(text)
            return
        Path(out).write_text(text, encoding="utf-8")
        self.manifest(out)

    def manifest(self, out):
        man = {
            "command": self.args.command,
            "config": self.config(),
            "inputs": self.inputs,
            "seed": getattr(self.args, "seed", None),
            "tool_version": __version__,
            "wall_time_s": time.perf_counter() - self.start,
        }
        Path(str(out) + ".manifest.json").write_text(dumps(man), encoding="utf-8")


def _load_distribution(run: Run, path, full_joint=False) -> DistributionSet:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such file: {path}")
    run.add_input(path)
    if path.suffix.lower() == ".json":
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise FormatError(f"{path}: invalid JSON ({exc})") from exc
        if "index_sets" in data:
            return bits_joint(BitsInstance.from_dict(data))
        dist = DistributionSet.from_dict(data)
        if full_joint and dist.full_joint is None:
            raise FormatError(f"{path}: this command needs a distribution with the full joint")
        return dist
    return estimate_distributions(load_csv(path), with_full_joint=full_joint)


def _bits_from_args(args) -> BitsInstance:
    if args.r is None and args.sets is None:
        return triangle()
    if args.r is None or args.sets is None:
        raise FormatError("--r and --sets must be given together")
    return BitsInstance.parse(args.r, args.sets)


# commands


def cmd_ingest(args):
    run = Run(args)
    path = Path(args.input)
    if not path.exists():
        raise FileNotFoundError(f"no such file: {path}")
    run.add_input(path)
    ds = load_csv(path, delimiter=args.delimiter)
    payload = {
        "schema": "dataset-summary/1",
        "n": ds.n,
        "d": ds.d,
        "names": list(ds.names),
        "alphabets": [list(a.symbols) for a in ds.alphabets],
        "alphabet_order": "first-appearance",
    }
    run.emit(payload, args.out)
    return EXIT_OK


def cmd_estimate(args):
    run = Run(args)
    path = Path(args.input)
    if not path.exists():
        raise FileNotFoundError(f"no such file: {path}")
    run.add_input(path)
    dist = estimate_distributions(load_csv(path), with_full_joint=args.full_joint, alpha=args.alpha)
    run.emit(dist.to_dict(), args.out)
    return EXIT_OK


def cmd_fit(args):
    run = Run(args)
    dist = _load_distribution(run, args.input)
    trace = {"method": args.method, "seed": args.seed, "k": args.k}
    if args.method == "eig":
        fs = features_from_spectrum(eigendecompose(build_b(dist)), dist, args.k)
    elif args.method == "mace":
        cfg = MaceConfig(k=args.k, max_iters=args.max_iters, rel_tol=args.rel_tol, seed=args.seed)
        fs, traces = mace_fit_k(dist, cfg)
        trace["columns"] = [t.to_dict() for t in traces]
        trace["config"] = {"max_iters": cfg.max_iters, "rel_tol": cfg.rel_tol}
    else:
        cfg = HTrainConfig(k=args.k, steps=args.steps, learning_rate=args.learning_rate, seed=args.seed)
        tables, curve = mh_train(dist, cfg)
        fs = whiten(tables, dist)
        trace["curve"] = [{"step": s, "mh_score": v} for s, v in curve]
        trace["config"] = {"steps": cfg.steps, "learning_rate": cfg.learning_rate}
    trace["joint_correlation"] = joint_correlation(fs, dist)
    payload = fs.to_dict()
    payload["joint_correlation"] = joint_correlation(fs, dist)
    run.emit(payload, args.out)
    if args.trace:
        run.emit(trace, args.trace)
    return EXIT_OK


def _verify_features(dist, path, run) -> dict:
    run.add_input(path)
    try:
        fs = FeatureSet.from_json(path)
    except (json.JSONDecodeError, KeyError, ValueError) as exc:
        raise FormatError(f"{path}: not a feature file ({exc})") from exc
    if fs.alphabets is not None and [a.symbols for a in fs.alphabets] != [a.symbols for a in dist.alphabets]:
        return {"name": "alphabets", "passed": False, "note": "feature alphabets differ from the data"}
    if tuple(t.shape[0] for t in fs.tables) != dist.dims:
        return {"name": "shapes", "passed": False, "note": "feature tables do not match the alphabets"}
    report = fs.check(dist)
    return {"name": "featureset", "passed": all(v["passed"] for v in report.values()), "checks": report}


def _suite_bits(args) -> dict:
    inst = _bits_from_args(args)
    dist = bits_joint(inst)
    spec = eigendecompose(build_b(dist))
    analytic = bits_spectrum(inst)
    spec_err = float(np.max(np.abs(spec.eigenvalues - analytic)))
    checks = [{"name": "spectrum", "passed": spec_err <= 1e-9, "residual": spec_err}]
    k = int(np.sum(analytic[1:] > 1e-9))
    if k:
        numeric = feature_sums_on_patterns(inst, features_from_spectrum(spec, dist, k))
        exact = feature_sums_on_patterns(inst, bits_feature_matrix(inst, k))
        dist_sub = projector_distance(numeric, exact)
        checks.append({"name": "feature_subspace", "passed": dist_sub <= 1e-9, "residual": dist_sub})
    return {"instance": inst.to_dict(), "eigenvalues": spec.eigenvalues, "analytic": analytic, "checks": checks}


def cmd_verify(args):
    run = Run(args)
    checks = []
    report = {"suite": args.suite}
    if args.suite == "bits":
        report.update(_suite_bits(args))
        checks = report["checks"]
    else:
        if args.input is None:
            raise FormatError(f"suite {args.suite} needs an input file")
        needs_joint = args.suite in ("theorem1", "theorem2")
        dist = _load_distribution(run, args.input, full_joint=needs_joint)
        if args.suite == "lemma1":
            b = build_b(dist)
            rep = check_lemma1(b, eigendecompose(b), dist)
            checks = rep.to_dict()["checks"]
        elif args.suite in ("theorem1", "theorem2"):
            k = 1 if args.suite == "theorem1" else args.k
            grid = tuple(float(x) for x in args.deltas.split(","))
            try:
                rep = verify_theorem(dist, k=k, delta_grid=grid)
            except DeltaTooLargeError as exc:
                raise DeltaTooLargeError(f"{exc} (max admissible delta {exc.max_delta:.6g})", exc.max_delta) from exc
            report["theorem"] = rep.to_dict()
            checks = [{"name": args.suite, "passed": rep.passed, "residual": rep.final_gap}]
        elif args.suite == "mh-identity":
            rng = np.random.default_rng(args.seed)
            worst = 0.0
            for _ in range(args.trials):
                tables = [rng.standard_normal((s, args.k)) for s in dist.dims]
                worst = max(worst, check_mh_identity(tables, dist))
            checks = [{"name": "mh_identity", "passed": worst <= 1e-9, "residual": worst}]
    if args.features:
        if args.input is None:
            raise FormatError("--features needs the data input as well")
        dist = _load_distribution(run, args.input)
        checks = list(checks) + [_verify_features(dist, args.features, run)]
    passed = all(bool(c["passed"]) for c in checks)
    report["checks"] = checks
    report["passed"] = passed
    run.emit(report, args.out)
    return EXIT_OK if passed else EXIT_FAIL


def cmd_bits(args):
    run = Run(args)
    inst = _bits_from_args(args)
    dist = bits_joint(inst)
    spec = eigendecompose(build_b(dist))
    pats = ordered_patterns(inst)
    k = min(args.k, len(pats) - 1)
    payload = {
        "instance": inst.to_dict(),
        "m": inst.m,
        "analytic_spectrum": bits_spectrum(inst),
        "numeric_spectrum": spec.eigenvalues,
        "patterns": [{"subset": list(s), "w": w} for s, w in pats],
    }
    if k > 0:
        fs = bits_feature_matrix(inst, k)
        payload["features"] = fs.to_dict()
        subsets = [tuple(s) for s in fs.metadata["subsets"]]
        exact = parity_functions(inst, subsets) * np.sqrt([w for _, w in pats[1:k + 1]])[None, :]
        payload["feature_sum_residual"] = float(np.max(np.abs(feature_sums_on_patterns(inst, fs) - exact)))
    run.emit(payload, args.out)
    return EXIT_OK


def cmd_complexity(args):
    run = Run(args)
    if args.input is not None:
        dist = _load_distribution(run, args.input, full_joint=True)
    else:
        dist = bits_joint(_bits_from_args(args))
    res = error_exponent(dist, args.k)
    payload = {"exponent": res.to_dict()}
    if args.trials > 0:
        grid = tuple(int(x) for x in args.n_grid.split(","))
        mc = monte_carlo_check(dist, args.k, grid, args.trials, args.eps, args.seed)
        payload["monte_carlo"] = mc.to_dict()
    run.emit(payload, args.out)
    return EXIT_OK


def cmd_preprocess(args):
    run = Run(args)
    for p in args.images:
        if not Path(p).exists():
            raise FileNotFoundError(f"no such file: {p}")
        run.add_input(p)
    images = load_images(args.images)
    grid = PatchGrid(tuple(np.asarray(images[0]).shape), args.patch, args.stride) if images else None
    pd = build_patch_dataset(images, grid, args.threshold, args.radius)
    summary = {
        "n": pd.dataset.n,
        "d": pd.dataset.d,
        "grid": list(pd.grid.grid),
        "alphabet_sizes": [a.size for a in pd.dataset.alphabets],
    }
    if args.out:
        side = write_patch_dataset(pd, args.out)
        run.manifest(args.out)
        summary["sidecar"] = str(side)
    sys.stdout.write(dumps(summary))
    return EXIT_OK


class _Parser(argparse.ArgumentParser):
    """Argument errors are reported as error JSON like every other failure."""

    def error(self, message):
        _error("usage", f"{self.prog}: {message}", 2)
        sys.exit(2)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="commonstruct", description="Common-structure features for discrete data.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("ingest", help="validate a CSV and summarize its alphabets")
    s.add_argument("input")
    s.add_argument("--delimiter", default=",")
    s.add_argument("--out")
    s.set_defaults(func=cmd_ingest)

    s = sub.add_parser("estimate", help="estimate marginal and pairwise tables from a CSV")
    s.add_argument("input")
    s.add_argument("--full-joint", action="store_true")
    s.add_argument("--alpha", type=float, default=0.0, help="add-alpha smoothing on the full joint")
    s.add_argument("--out")
    s.set_defaults(func=cmd_estimate)

    s = sub.add_parser("fit", help="compute top-k features (eig, mace or mh)")
    s.add_argument("input", help="CSV, distribution JSON or bits instance JSON")
    s.add_argument("--method", choices=("eig", "mace", "mh"), default="eig")
    s.add_argument("--k", type=int, default=1)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--max-iters", type=int, default=5000)
    s.add_argument("--rel-tol", type=float, default=1e-12)
    s.add_argument("--steps", type=int, default=5000)
    s.add_argument("--learning-rate", type=float, default=0.05)
    s.add_argument("--out")
    s.add_argument("--trace", help="write the fit trace JSON here")
    s.set_defaults(func=cmd_fit)

    s = sub.add_parser("verify", help="run a property suite; exit 1 on failure")
    s.add_argument("input", nargs="?")
    s.add_argument("--suite", choices=("lemma1", "theorem1", "theorem2", "mh-identity", "bits"), required=True)
    s.add_argument("--features", help="also check a feature JSON against the data")
    s.add_argument("--k", type=int, default=3)
    s.add_argument("--deltas", default="1e-2,1e-3,1e-4")
    s.add_argument("--trials", type=int, default=100)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--r", type=int)
    s.add_argument("--sets")
    s.add_argument("--out")
    s.set_defaults(func=cmd_verify)

    s = sub.add_parser("bits", help="analytic spectrum and features of a common-bits instance")
    s.add_argument("--r", type=int)
    s.add_argument("--sets", help='index sets such as "1,2;2,3;1,3"')
    s.add_argument("--k", type=int, default=3)
    s.add_argument("--out")
    s.set_defaults(func=cmd_bits)

    s = sub.add_parser("complexity", help="sample-complexity exponent and Monte Carlo check")
    s.add_argument("input", nargs="?", help="CSV, distribution JSON or bits JSON (default: --r/--sets)")
    s.add_argument("--r", type=int)
    s.add_argument("--sets")
    s.add_argument("--k", type=int, default=1)
    s.add_argument("--n-grid", default="100,200,400,800")
    s.add_argument("--trials", type=int, default=0)
    s.add_argument("--eps", type=float, default=0.1)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out")
    s.set_defaults(func=cmd_complexity)

    s = sub.add_parser("preprocess", help="images to a patch dataset")
    s.add_argument("--images", nargs="+", required=True, help="PGM files or raw image stacks")
    s.add_argument("--threshold", type=int, default=40)
    s.add_argument("--radius", type=int, default=3)
    s.add_argument("--patch", type=int, default=6)
    s.add_argument("--stride", type=int, default=3)
    s.add_argument("--out", help="dataset CSV path")
    s.set_defaults(func=cmd_preprocess)
    return p


def _error(kind: str, message: str, code: int, **extra) -> int:
    sys.stderr.write(dumps({"error": dict({"kind": kind, "message": message, "exit_code": code}, **extra)}))
    return code


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except DeltaTooLargeError as exc:
        return _error(exc.kind, str(exc), exc.exit_code, max_delta=exc.max_delta)
    except CommonStructError as exc:
        return _error(exc.kind, str(exc), exc.exit_code)
    except (FileNotFoundError, PermissionError, IsADirectoryError) as exc:
        return _error("io", str(exc), 2)
    except UnicodeDecodeError as exc:
        return _error("format", f"input is not UTF-8 text: {exc}", 2)
    except Exception as exc:  # noqa: BLE001 - keep the JSON contract on unexpected failures
        return _error("internal", f"{type(exc).__name__}: {exc}", 4)


if __name__ == "__main__":
    sys.exit(main())
