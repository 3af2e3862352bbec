"""Command-line surface: model-selection sweeps and validation studies.

Subcommands:

* ``sweep`` — aggregate resample votes for every candidate K, score each with
  the information criterion, and report the best non-degenerate K ≥ 2.
* ``silhouette`` — mean silhouette width of the plain (single-fit) base
  clustering per K, the conventional baseline the criterion is compared to.
* ``agreement`` — compare two crisp solutions, or either against true
  classes, with per-case failure codes when both and truth are given.
* ``validate-null`` — agreement distributions of resample solutions against
  each other, against fixed references, and against a no-structure baseline.
* ``generate`` — write one of the built-in artificial datasets.

Every command is deterministic in (input bytes, flags): reruns emit
byte-identical files, and the worker pool only changes wall time, never a
single emitted byte.  Exit codes: 0 success, 2 configuration error, 3 data
error, 4 every candidate model degenerate.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .cic import cic
from .core import (
    CrispAssignment,
    Dataset,
    _fmt,
    read_assignment_tsv,
    write_assignment_tsv,
)
from .generate import SHAPES, generate
from .matching import LengthMismatch, apply_permutation
from .metrics import (
    NullSimConfig,
    agreement,
    distribution_summary,
    distribution_tsv,
    mean_silhouette,
    reference_agreement,
    resample_pair_agreement,
    simulate_null_agreement,
)
from .mmcc import AllRoundsDegenerate, MmccConfig, MmccResult, majority_assignment, mmcc_fit
from .preprocess import (
    ConstantColumn,
    DivisionByZero,
    NonFiniteValue,
    ParseError,
    PreprocessSpec,
    apply_preprocess,
    load_csv,
)

# stream tag for the single full-sample baseline fit (vs per-round streams)
_BASELINE_STREAM = 0x0B5E


class ConfigError(ValueError):
    """A flag combination the run cannot proceed with (exit code 2)."""


class DataError(ValueError):
    """Input data unusable for reasons beyond CSV syntax (exit code 3)."""


# ------------------------------------------------------------ input loading


def _feature_names(path, label_columns: str | None, exclude_columns: str | None) -> list[str]:
    """Header names that survive label/exclude splitting, in matrix order."""
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip()
    names = [c.strip() for c in header.split(",")]
    dropped = set()
    if label_columns:
        dropped |= {c.strip() for c in label_columns.split(",")}
    if exclude_columns:
        dropped |= {c.strip() for c in exclude_columns.split(",")}
    return [n for n in names if n not in dropped]


def _load_inputs(args) -> tuple[Dataset, CrispAssignment | None, list[str]]:
    """Load the CSV and run the configured preprocessing pipeline."""
    path = Path(args.input)
    if not path.is_file():
        raise DataError(f"no such input file: {path}")
    data, truth = load_csv(
        path, label_columns=args.label_col, exclude_columns=args.exclude_cols
    )
    names = _feature_names(path, args.label_col, args.exclude_cols)
    ratio = None
    if args.ratio_col is not None:
        if args.ratio_col not in names:
            raise ConfigError(
                f"--ratio-col {args.ratio_col!r} is not a feature column "
                f"(have: {', '.join(names)})"
            )
        ratio = names.index(args.ratio_col)
    if args.keep_components is not None and args.keep_components < 1:
        raise ConfigError("--keep-components must be >= 1")
    spec = PreprocessSpec(
        ratio_column=ratio,
        standardize=args.standardize,
        sphere=args.sphere,
        keep_components=args.keep_components,
        unit_variance=not args.rotation_only,
    )
    try:
        out, _ = apply_preprocess(data, spec)
    except (ConstantColumn, DivisionByZero):
        raise
    except ValueError as exc:  # matrix shape/finite checks on tiny inputs
        raise DataError(str(exc)) from exc
    return out, truth, names


def _input_sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _mmcc_kwargs(args) -> dict:
    """MmccConfig keyword template shared by every K of a run."""
    return {
        "resamples": args.resamples,
        "resample_size": args.resample_size,
        "scheme": args.scheme,
        "base": args.base,
        "predictor": args.predict,
        "matcher": args.matcher,
        "seed": args.seed,
    }


def _preprocess_manifest(args) -> dict:
    return {
        "exclude_columns": args.exclude_cols,
        "keep_components": args.keep_components,
        "label_columns": args.label_col,
        "ratio_column": args.ratio_col,
        "rotation_only": args.rotation_only,
        "sphere": args.sphere,
        "standardize": args.standardize,
    }


def _write(path: Path, text: str) -> None:
    path.write_text(text, encoding="utf-8")


def _write_json(path: Path, obj) -> None:
    _write(path, json.dumps(obj, sort_keys=True, indent=2) + "\n")


# ------------------------------------------------------------------- sweep


@dataclass
class SweepConfig:
    """One sweep: a shared aggregation template applied to each K in range."""

    k_min: int
    k_max: int
    template: dict  # MmccConfig kwargs, identical for every K
    out_dir: Path
    threads: int = 1
    emit_probabilities: bool = True
    emit_assignments: bool = True
    emit_diagnostics: bool = True
    emit_trace: bool = True

    def __post_init__(self):
        if not 1 <= self.k_min <= self.k_max:
            raise ConfigError(f"need 1 <= kmin <= kmax, got {self.k_min}..{self.k_max}")
        if self.threads < 1:
            raise ConfigError("--threads must be >= 1")


@dataclass
class SweepRow:
    k: int
    silhouette: float
    information: float
    uncertainty: float
    cic: float
    degenerate: bool
    degenerate_rounds: int
    rounds_used: int


@dataclass
class SweepReport:
    rows: list[SweepRow]
    selected_k: int | None
    status: str  # "ok" | "all-degenerate"

    @property
    def excluded_k(self) -> list[int]:
        return [r.k for r in self.rows if r.degenerate]


def _sweep_worker(payload) -> tuple[int, MmccResult | None]:
    values, row_ids, kwargs, k = payload
    data = Dataset(values, list(row_ids))
    try:
        return k, mmcc_fit(data, MmccConfig(k=k, **kwargs))
    except AllRoundsDegenerate:
        return k, None


def _baseline_silhouette(values: np.ndarray, k: int, kwargs: dict) -> float:
    """Silhouette of the one-shot base clustering on the full sample."""
    if k < 2:
        return float("nan")
    cfg = MmccConfig(k=k, **kwargs)
    rng = np.random.default_rng(np.random.SeedSequence((cfg.seed, k, _BASELINE_STREAM)))
    model = cfg.base_fitter(values, k, rng)
    return mean_silhouette(values, model.assignment)


def run_sweep(data: Dataset, cfg: SweepConfig) -> SweepReport:
    """Fit every K, score, select, and emit all sweep artifacts."""
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    ks = list(range(cfg.k_min, cfg.k_max + 1))
    payloads = [(data.values, data.row_ids, cfg.template, k) for k in ks]
    if cfg.threads > 1:
        with ProcessPoolExecutor(max_workers=cfg.threads) as pool:
            fitted = dict(pool.map(_sweep_worker, payloads))
    else:
        fitted = dict(map(_sweep_worker, payloads))

    rows: list[SweepRow] = []
    seed = cfg.template.get("seed", 0)
    for k in ks:
        sil = _baseline_silhouette(data.values, k, cfg.template)
        result = fitted[k]
        if result is None:
            rows.append(
                SweepRow(k, sil, float("nan"), float("nan"), float("nan"), True,
                         cfg.template.get("resamples", 1000), 0)
            )
            continue
        breakdown = cic(result.probs)
        frac = result.degenerate_rounds / max(result.rounds_used, 1)
        rows.append(
            SweepRow(
                k=k,
                silhouette=sil,
                information=breakdown.information,
                uncertainty=breakdown.uncertainty,
                cic=breakdown.cic,
                degenerate=frac > 0.10,
                degenerate_rounds=result.degenerate_rounds,
                rounds_used=result.rounds_used,
            )
        )
        majority = majority_assignment(result, seed=seed)
        if cfg.emit_probabilities:
            _write(cfg.out_dir / f"probabilities_k{k}.tsv", result.probs.to_tsv(data.row_ids))
        if cfg.emit_assignments:
            _write(cfg.out_dir / f"assignment_k{k}.tsv",
                   write_assignment_tsv(majority, data.row_ids))
        if cfg.emit_diagnostics:
            _write(
                cfg.out_dir / f"diagnostics_k{k}.tsv",
                breakdown.to_diagnostics_tsv(majority.labels, data.row_ids),
            )
        if cfg.emit_trace:
            _write(cfg.out_dir / f"trace_k{k}.tsv", result.trace_tsv())

    selected, best = None, -np.inf
    for row in rows:
        if row.k >= 2 and not row.degenerate and np.isfinite(row.cic) and row.cic > best:
            selected, best = row.k, row.cic
    report = SweepReport(rows, selected, "ok" if selected is not None else "all-degenerate")

    lines = ["k\tsilhouette\tinformation\tuncertainty\tcic\tdegenerate"]
    for row in rows:
        if np.isfinite(row.cic) and abs(row.cic - (row.information - row.uncertainty)) > 1e-9:
            raise RuntimeError(f"criterion decomposition drifted at k={row.k}")
        lines.append(
            f"{row.k}\t{_fmt(row.silhouette)}\t{_fmt(row.information)}"
            f"\t{_fmt(row.uncertainty)}\t{_fmt(row.cic)}\t{int(row.degenerate)}"
        )
    _write(cfg.out_dir / "cic_table.tsv", "\n".join(lines) + "\n")
    return report


def cmd_sweep(args) -> int:
    data, _, _ = _load_inputs(args)
    cfg = SweepConfig(
        k_min=args.kmin,
        k_max=args.kmax,
        template=_mmcc_kwargs(args),
        out_dir=Path(args.out),
        threads=args.threads,
    )
    report = run_sweep(data, cfg)
    manifest = {
        "command": "sweep",
        "excluded_k": report.excluded_k,
        "input_sha256": _input_sha256(args.input),
        "k_max": args.kmax,
        "k_min": args.kmin,
        "mmcc": _mmcc_kwargs(args),
        "preprocess": _preprocess_manifest(args),
        "selected_k": report.selected_k,
        "status": report.status,
        "version": __version__,
    }
    _write_json(Path(args.out) / "manifest.json", manifest)
    if report.selected_k is None:
        print("no selectable model: every candidate K degenerated", file=sys.stderr)
        return 4
    best = next(r.cic for r in report.rows if r.k == report.selected_k)
    note = f"; excluded degenerate K: {report.excluded_k}" if report.excluded_k else ""
    print(f"selected_k={report.selected_k} (cic={_fmt(best)}) over K {args.kmin}..{args.kmax}{note}")
    return 0


# -------------------------------------------------------------- silhouette


def cmd_silhouette(args) -> int:
    if args.kmin < 2:
        raise ConfigError("silhouette needs --kmin >= 2")
    data, _, _ = _load_inputs(args)
    lines = ["k\tsilhouette"]
    for k in range(args.kmin, args.kmax + 1):
        sil = _baseline_silhouette(data.values, k, _mmcc_kwargs(args))
        lines.append(f"{k}\t{_fmt(sil)}")
    text = "\n".join(lines) + "\n"
    if args.out:
        _write(Path(args.out), text)
        print(f"wrote {args.out}")
    else:
        sys.stdout.write(text)
    return 0


# --------------------------------------------------------------- agreement


def _read_solution(path) -> CrispAssignment:
    p = Path(path)
    if not p.is_file():
        raise DataError(f"no such solution file: {p}")
    return read_assignment_tsv(p.read_text(encoding="utf-8"))


def _matched_to(truth: CrispAssignment, solution: CrispAssignment, align_fn) -> np.ndarray:
    """Boolean per-case correctness after optimally relabeling the solution."""
    if len(solution) != len(truth):
        raise LengthMismatch("solution and truth must cover the same cases")
    k = max(solution.k, truth.k)
    sol = CrispAssignment(solution.labels, k)
    ref = CrispAssignment(truth.labels, k)
    perm = align_fn(sol, ref)
    return apply_permutation(sol, perm).labels == ref.labels


def cmd_agreement(args) -> int:
    a = _read_solution(args.a)
    b = _read_solution(args.b) if args.b else None
    truth = None
    if args.input and args.label_col:
        _, truth, _ = _load_inputs(args)
        if truth is None:
            raise ConfigError("--label-col produced no labels")
    elif args.input or args.label_col:
        raise ConfigError("truth comparison needs both --input and --label-col")
    if b is None and truth is None:
        raise ConfigError("nothing to compare against: give --b or --input/--label-col")

    align_fn = MmccConfig(k=2, matcher=args.matcher).align_fn
    report: dict = {}
    if b is not None:
        report["a_vs_b"] = json.loads(agreement(a, b).to_json())
    if truth is not None:
        report["a_vs_truth"] = json.loads(agreement(a, truth).to_json())
    if b is not None and truth is not None:
        report["b_vs_truth"] = json.loads(agreement(b, truth).to_json())
        a_ok = _matched_to(truth, a, align_fn)
        b_ok = _matched_to(truth, b, align_fn)
        codes = np.where(
            a_ok & b_ok, "o", np.where(~a_ok & b_ok, "s", np.where(a_ok & ~b_ok, "t", "x"))
        )
        report["failure_counts"] = {c: int((codes == c).sum()) for c in "ostx"}
        if args.cases_out:
            lines = ["case\ttruth\ta\tb\tcode"]
            for i, code in enumerate(codes):
                lines.append(
                    f"{i + 1}\t{truth.labels[i]}\t{a.labels[i]}\t{b.labels[i]}\t{code}"
                )
            _write(Path(args.cases_out), "\n".join(lines) + "\n")
    elif args.cases_out:
        raise ConfigError("--cases-out needs --a, --b, and truth (--input/--label-col)")

    text = json.dumps(report, sort_keys=True, indent=2) + "\n"
    sys.stdout.write(text)
    if args.out:
        _write(Path(args.out), text)
    return 0


# ------------------------------------------------------------ validate-null


def cmd_validate_null(args) -> int:
    if args.draws < 2:
        raise ConfigError("--draws must be >= 2")
    data, _, _ = _load_inputs(args)
    cfg = MmccConfig(k=args.k, **_mmcc_kwargs(args))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    null_cfg = NullSimConfig.from_data(
        data,
        draws=args.draws,
        n=data.n_cases,
        k=args.k,
        base=args.base,
        predictor=args.predict,
        seed=args.seed,
    )
    null_vals = simulate_null_agreement(null_cfg)
    pair_vals = resample_pair_agreement(data, cfg, args.draws)

    rng = np.random.default_rng(np.random.SeedSequence((cfg.seed, cfg.k, _BASELINE_STREAM)))
    standard = cfg.base_fitter(data.values, cfg.k, rng).assignment
    std_vals = reference_agreement(data, cfg, standard, args.draws)

    ensemble = majority_assignment(mmcc_fit(data, cfg), seed=cfg.seed)
    ens_vals = reference_agreement(data, cfg, ensemble, args.draws)

    named = {
        "null_pairs": null_vals,
        "resample_pairs": pair_vals,
        "standard_reference": std_vals,
        "ensemble_reference": ens_vals,
    }
    summary = {"draws": args.draws, "k": args.k}
    for name, vals in named.items():
        _write(out / f"{name}.tsv", distribution_tsv(name, vals))
        summary[name] = json.loads(distribution_summary(vals))
    _write_json(out / "summary.json", summary)
    manifest = {
        "command": "validate-null",
        "draws": args.draws,
        "input_sha256": _input_sha256(args.input),
        "k": args.k,
        "mmcc": _mmcc_kwargs(args),
        "preprocess": _preprocess_manifest(args),
        "version": __version__,
    }
    _write_json(out / "manifest.json", manifest)
    medians = "  ".join(f"{n}={_fmt(float(np.median(v)))}" for n, v in named.items())
    print(f"medians: {medians}")
    return 0


# ---------------------------------------------------------------- generate


def cmd_generate(args) -> int:
    kwargs = {}
    if args.clusters is not None:
        if args.shape != "blobs":
            raise ConfigError("--clusters only applies to the blobs shape")
        kwargs["clusters"] = args.clusters
    try:
        data, labels = generate(args.shape, args.n, noise=args.noise, seed=args.seed, **kwargs)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    lines = ["x,y,label"]
    for row, lab in zip(data.values, labels.labels):
        lines.append(f"{_fmt(row[0])},{_fmt(row[1])},{lab}")
    text = "\n".join(lines) + "\n"
    if args.out == "-":
        sys.stdout.write(text)
    else:
        _write(Path(args.out), text)
        print(f"wrote {len(labels)} cases ({args.shape}) to {args.out}")
    return 0


# ------------------------------------------------------------------ parser


def _add_input_flags(p: argparse.ArgumentParser, required: bool = True) -> None:
    p.add_argument("--input", required=required, help="input CSV (header row required)")
    p.add_argument("--label-col", help="comma-separated true-class column names")
    p.add_argument("--exclude-cols", help="comma-separated columns to drop entirely")
    p.add_argument("--ratio-col", help="divide the other features by this column")
    p.add_argument("--standardize", action="store_true", help="z-score the features")
    p.add_argument("--sphere", action="store_true",
                   help="decorrelate to unit-variance principal components")
    p.add_argument("--rotation-only", action="store_true",
                   help="with --sphere: rotate without rescaling components")
    p.add_argument("--keep-components", type=int, default=None,
                   help="with --sphere: keep only the leading components")


def _add_mmcc_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--base", choices=["kmeans", "pam", "slink"], default="pam")
    p.add_argument("--predict", choices=["rep", "nn1"], default="rep")
    p.add_argument("--scheme", choices=["bootstrap", "subsample"], default="bootstrap")
    p.add_argument("--resample-size", type=int, default=None,
                   help="cases per resample (default: sample size)")
    p.add_argument("--resamples", type=int, default=1000, help="voting rounds per K")
    p.add_argument("--matcher", choices=["exact", "heuristic"], default="exact")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1, help="worker processes across K")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="voteclust",
        description="Resample-vote cluster aggregation and model selection.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sweep", help="aggregate and score a range of K")
    _add_input_flags(p)
    p.add_argument("--kmin", type=int, default=2)
    p.add_argument("--kmax", type=int, default=10)
    _add_mmcc_flags(p)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("silhouette", help="baseline silhouette widths per K")
    _add_input_flags(p)
    p.add_argument("--kmin", type=int, default=2)
    p.add_argument("--kmax", type=int, default=10)
    _add_mmcc_flags(p)
    p.add_argument("--out", help="output TSV (default: stdout)")
    p.set_defaults(func=cmd_silhouette)

    p = sub.add_parser("agreement", help="compare crisp solutions")
    p.add_argument("--a", required=True, help="first solution TSV (case, label)")
    p.add_argument("--b", help="second solution TSV")
    _add_input_flags(p, required=False)
    p.add_argument("--matcher", choices=["exact", "heuristic"], default="exact")
    p.add_argument("--out", help="also write the JSON report here")
    p.add_argument("--cases-out",
                   help="per-case failure codes TSV (o=both right, s=only A wrong, "
                        "t=only B wrong, x=both wrong)")
    p.set_defaults(func=cmd_agreement)

    p = sub.add_parser("validate-null", help="agreement distributions vs no-structure baseline")
    _add_input_flags(p)
    p.add_argument("--k", type=int, required=True, help="cluster count under study")
    p.add_argument("--draws", type=int, default=101, help="solutions per distribution")
    _add_mmcc_flags(p)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_validate_null)

    p = sub.add_parser("generate", help="write a built-in artificial dataset")
    p.add_argument("--shape", choices=sorted(SHAPES), required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--noise", type=float, default=None, help="shape default when omitted")
    p.add_argument("--clusters", type=int, default=None, help="blobs only: blob count")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output CSV path, '-' for stdout")
    p.set_defaults(func=cmd_generate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ParseError, NonFiniteValue, DivisionByZero, ConstantColumn,
            LengthMismatch, DataError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except AllRoundsDegenerate as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    except ValueError as exc:  # config validation inside module constructors
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
