"""Command-line entry point: ``gemgls {simulate,fit,metrics,stability}``.

Exit status is 0 on success, 2 for configuration or input errors and 3 for
numerical failures.  Errors are reported as one JSON object on stderr (and
as ``error.json`` in the output directory when one was given).
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import sys
import traceback
from pathlib import Path

import numpy as np

from . import __version__
from .covmodel import DataMatrix, correlation_from_spec, write_matrix_csv
from .design import TwoGroupDesign
from .errors import (
    DegenerateVarianceError,
    GemglsError,
    InvalidParameterError,
    ParseError,
    PreconditionError,
)
from .evaluation import SimConfig, run_simulation, structure_metrics
from .pipeline import Alg2Config, PenaltyPolicy, algorithm1, algorithm2, stability_iteration

log = logging.getLogger("gemgls")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3
METRIC_COLUMNS = ["rho2", "fro_over_trace", "inv_corr_l1_off", "sd_gls", "sd_ratio"]


class ConfigError(GemglsError, ValueError):
    """Bad command-line options or config file."""

    kind = "config-error"


# --------------------------------------------------------------------------
# data ingestion


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _parse_label(tok: str, line: int) -> int:
    try:
        v = float(tok)
    except ValueError:
        raise ParseError(f"unknown group label {tok!r}; expected 1 or 2", line=line) from None
    if v not in (1.0, 2.0):
        raise ParseError(f"unknown group label {tok!r}; expected 1 or 2", line=line)
    return int(v)


def _read_labels(path) -> np.ndarray:
    labels = []
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or not row[0].strip():
                continue
            tok = row[-1].strip()
            if lineno == 1 and tok.lower() in ("group", "label", "labels", "groups"):
                continue
            labels.append(_parse_label(tok, lineno))
    return np.array(labels, dtype=int)


def _read_table(path):
    """Header plus numeric body; every cell is checked and reported by line."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ParseError("empty file", line=1)
    header = [h.strip() for h in rows[0]]
    body, lines = [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise ParseError(f"expected {len(header)} fields, found {len(row)}", line=lineno)
        body.append([c.strip() for c in row])
        lines.append(lineno)
    if not body:
        raise ParseError("no data rows", line=len(rows))
    return header, body, lines


def _to_float(cell: str, line: int, col: str) -> float:
    if cell == "" or cell.lower() in ("na", "nan", "null", "none"):
        raise ParseError(f"missing value in column {col!r}", line=line)
    try:
        v = float(cell)
    except ValueError:
        raise ParseError(f"non-numeric value {cell!r} in column {col!r}", line=line) from None
    if not np.isfinite(v):
        raise ParseError(f"non-finite value {cell!r} in column {col!r}", line=line)
    return v


def top_variance_columns(values: np.ndarray, k: int) -> np.ndarray:
    """Indices of the ``k`` highest-variance columns, in original order."""
    m = values.shape[1]
    if not 1 <= k <= m:
        raise InvalidParameterError(f"top-variance k must lie in [1, {m}]")
    var = values.var(axis=0, ddof=1)
    order = np.lexsort((np.arange(m), -var))
    return np.sort(order[:k])


def load_matrix_csv(
    path,
    label_column: str | None = None,
    labels_path=None,
    transpose: bool = False,
    top_variance: int | None = None,
    unit_variance: bool = False,
) -> DataMatrix:
    """Read a samples-by-variables CSV with a header of variable names.

    Group labels (1 or 2) come from ``label_column`` or from a side file
    with one label per sample.  With ``transpose`` the file is
    variables-by-samples: the first column names the variables and the
    header names the samples.
    """
    if (label_column is None) == (labels_path is None):
        raise InvalidParameterError("give exactly one of a label column or a labels file")
    path = Path(path)
    header, body, lines = _read_table(path)
    labels = None
    if transpose:
        if label_column is not None:
            raise InvalidParameterError("transposed input needs a labels file")
        columns = [row[0] for row in body]
        values = np.array([[_to_float(c, ln, header[j + 1]) for j, c in enumerate(row[1:])]
                           for row, ln in zip(body, lines)]).T
    else:
        keep = list(range(len(header)))
        if label_column is not None:
            if label_column not in header:
                raise ParseError(f"label column {label_column!r} not in header", line=1)
            li = header.index(label_column)
            keep.remove(li)
            labels = np.array([_parse_label(row[li], ln) for row, ln in zip(body, lines)])
        columns = [header[j] for j in keep]
        values = np.array([[_to_float(row[j], ln, header[j]) for j in keep]
                           for row, ln in zip(body, lines)])
    if labels is None:
        labels = _read_labels(labels_path)
    if labels.size != values.shape[0]:
        raise ParseError(f"{labels.size} labels for {values.shape[0]} samples")
    steps = []
    if top_variance is not None:
        idx = top_variance_columns(values, top_variance)
        values = values[:, idx]
        columns = [columns[j] for j in idx]
        steps.append({"step": "top_variance", "k": int(top_variance)})
    if unit_variance:
        sd = values.std(axis=0, ddof=1)
        bad = np.flatnonzero(~(sd > 0))
        if bad.size:
            raise DegenerateVarianceError(f"constant columns {[columns[j] for j in bad[:10]]}", index=bad)
        values = values / sd
        steps.append({"step": "unit_variance"})
    prov = {
        "source": str(path), "sha256": _sha256(path), "transpose": transpose,
        "label_column": label_column,
        "labels_file": None if labels_path is None else str(labels_path),
        "labels_sha256": None if labels_path is None else _sha256(labels_path),
        "preprocessing": steps,
    }
    return DataMatrix(values, labels, columns, prov)


# --------------------------------------------------------------------------
# subcommands


def _write_json(path, obj) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _provenance(args, extra=None) -> dict:
    opts = {k: v for k, v in sorted(vars(args).items()) if k not in ("func", "out", "config_data")}
    out = {"program": "gemgls", "version": __version__, "command": args.command, "options": opts}
    if getattr(args, "config_data", None) is not None:
        out["config"] = args.config_data
    if extra:
        out.update(extra)
    return out


def _out_dir(args) -> Path:
    if args.out is None:
        raise ConfigError(f"{args.command} needs --out")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load(args) -> DataMatrix:
    if args.data is None:
        raise ConfigError("--data is required")
    return load_matrix_csv(args.data, args.label_column, args.labels, args.transpose,
                           args.top_variance, args.unit_variance)


def _penalty(args, multiplier) -> PenaltyPolicy:
    if args.lam is not None:
        return PenaltyPolicy.explicit(args.lam)
    return PenaltyPolicy(kind="plugin", multiplier=multiplier)


def cmd_simulate(args) -> int:
    cfg = dict(args.config_data or {})
    if args.seed is not None:
        cfg["seed"] = args.seed
    if args.replications is not None:
        cfg["replications"] = args.replications
    config = SimConfig.from_dict(cfg)
    report = run_simulation(config, workers=args.workers)
    out = _out_dir(args)
    report.write(out)
    _write_json(out / "provenance.json", _provenance(args, {"simulation": report.provenance()}))
    log.info("wrote %d records to %s", len(report.records), out)
    return EXIT_OK


def cmd_fit(args) -> int:
    data = _load(args)
    out = _out_dir(args)
    if args.algorithm == "alg1":
        res = algorithm1(data, data.design, _penalty(args, args.multiplier))
        gem, gls, extra = res.gemini, res.gls, {}
    else:
        cfg = Alg2Config(
            threshold=args.threshold, multiplier=args.threshold_multiplier, top_k=args.top_k,
            penalty_stage1=_penalty(args, args.stage1_multiplier),
            penalty_stage4=_penalty(args, args.multiplier),
        )
        res = algorithm2(data, data.design, cfg)
        gem, gls = res.gemini, res.gls
        extra = {"tau": res.selection.tau,
                 "selected": [data.columns[j] for j in res.selection.j0]}
    gls.write_csv(out / "gls.csv", data.columns)
    write_matrix_csv(out / "b_inv.csv", gem.b_inv)
    summary = gls.summary(args.fdr)
    summary.update({
        "algorithm": args.algorithm, "n": data.n, "lambda_b": gem.lam_b,
        "glasso_iterations": gem.fit_b.iterations, "kkt_residual": gem.fit_b.kkt_residual,
        "edges": int(np.count_nonzero(np.triu(gem.fit_b.theta, 1))),
    })
    summary.update(extra)
    _write_json(out / "summary.json", summary)
    _write_json(out / "provenance.json", _provenance(args, {"data": data.provenance}))
    return EXIT_OK


def _structure_spec(args) -> dict:
    kind = args.structure
    if kind == "ar1":
        if args.rho is None:
            raise ConfigError("ar1 needs --rho")
        return {"kind": "ar1", "n": args.n, "rho": args.rho}
    if kind == "star_block":
        return {"kind": "star_block", "n_blocks": args.n // args.block_size,
                "block_size": args.block_size, "rho": 0.5 if args.rho is None else args.rho}
    if kind == "er":
        return {"kind": "erdos_renyi", "n": args.n, "d": args.edges or args.n,
                "seed": args.structure_seed}
    if kind == "twin_pairs":
        return {"kind": "twin_pairs", "n_pairs": args.n // 2, "extra_edges": args.edges or 0,
                "seed": args.structure_seed}
    if kind == "identity":
        return {"kind": "identity", "n": args.n}
    if kind == "csv":
        if args.path is None:
            raise ConfigError("csv structure needs --path")
        return {"kind": "csv", "path": args.path}
    raise ConfigError(f"unknown structure {kind!r}")


def cmd_metrics(args) -> int:
    if args.n is None and args.structure != "csv":
        raise ConfigError("--n is required")
    spec = _structure_spec(args)
    b = correlation_from_spec(spec)
    met = structure_metrics(b, TwoGroupDesign.balanced(b.shape[0]))
    row = [args.structure, b.shape[0]] + [repr(met[k]) for k in METRIC_COLUMNS]
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["structure", "n"] + METRIC_COLUMNS)
    w.writerow(row)
    if args.out is not None:
        out = _out_dir(args)
        with open(out / "metrics.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["structure", "n"] + METRIC_COLUMNS)
            w.writerow(row)
        _write_json(out / "provenance.json", _provenance(args, {"structure": spec}))
    return EXIT_OK


def _int_list(text: str) -> list[int]:
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise ConfigError(f"expected comma-separated integers, got {text!r}") from None


def _float_list(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise ConfigError(f"expected comma-separated numbers, got {text!r}") from None


def cmd_stability(args) -> int:
    data = _load(args)
    out = _out_dir(args)
    if args.schedule:
        schedule = _int_list(args.schedule)
    else:
        schedule, k = [data.m], 1
        while 2 ** (k + 2) < data.m:  # m, then powers of two down to 8
            k += 1
        schedule += [2**j for j in range(k + 1, 2, -1)]
    lambdas = _float_list(args.lambdas) if args.lambdas else []
    rep = stability_iteration(data, data.design, schedule, _penalty(args, args.multiplier),
                              top=args.top, lambdas=lambdas, fdr_level=args.fdr)
    with open(out / "overlap.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["n_group"] + schedule)
        for k, row in zip(schedule, rep.overlap):
            w.writerow([k] + [int(v) for v in row])
    with open(out / "fdr_counts.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["lambda"] + schedule)
        for lam, counts in rep.fdr_counts.items():
            w.writerow([repr(float(lam))] + counts)
    with open(out / "rankings.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["n_group"] + [f"rank{r + 1}" for r in range(args.top)])
        for k, ranking in zip(schedule, rep.rankings):
            w.writerow([k] + [data.columns[j] for j in ranking])
    _write_json(out / "provenance.json", _provenance(args, {"data": data.provenance,
                                                              "schedule": schedule}))
    return EXIT_OK


# --------------------------------------------------------------------------
# argument parsing


def _data_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--data", help="samples-by-variables CSV with a header row")
    g = p.add_mutually_exclusive_group()
    g.add_argument("--label-column", help="name of the column holding group labels (1/2)")
    g.add_argument("--labels", help="side file with one group label per sample")
    p.add_argument("--transpose", action="store_true", help="file is variables-by-samples")
    p.add_argument("--top-variance", type=int, metavar="K", help="keep the K most variable columns")
    p.add_argument("--unit-variance", action="store_true", help="rescale columns to variance 1")
    p.add_argument("--lambda", dest="lam", type=float, help="explicit glasso penalty")
    p.add_argument("--multiplier", type=float, default=0.25,
                   help="plug-in penalty multiplier (final stage)")
    p.add_argument("--fdr", type=float, default=0.1, help="BH level for counting rejections")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gemgls", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, help="master seed")
    common.add_argument("--out", help="output directory")
    common.add_argument("--config", help="JSON file of option values (simulation config for simulate)")
    common.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common], help="run a Monte Carlo experiment")
    p.add_argument("--replications", type=int)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", parents=[common], help="fit Algorithm 1 or 2 to a data file")
    _data_args(p)
    p.add_argument("--algorithm", choices=("alg1", "alg2"), default="alg2")
    p.add_argument("--stage1-multiplier", type=float, default=0.5)
    p.add_argument("--threshold", choices=("plugin", "lower_bound", "top_k"), default="plugin")
    p.add_argument("--threshold-multiplier", type=float, default=1.0)
    p.add_argument("--top-k", type=int)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("metrics", parents=[common], help="difficulty metrics of a covariance structure")
    p.add_argument("--structure", choices=("ar1", "star_block", "er", "twin_pairs", "identity", "csv"),
                   required=True)
    p.add_argument("--n", type=int)
    p.add_argument("--rho", type=float)
    p.add_argument("--block-size", type=int, default=10)
    p.add_argument("--edges", type=int, help="edge count for er / extra edges for twin_pairs")
    p.add_argument("--structure-seed", type=int, default=0)
    p.add_argument("--path", help="CSV matrix for --structure csv")
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("stability", parents=[common], help="gene-set stability iteration")
    _data_args(p)
    p.add_argument("--schedule", help="comma-separated decreasing counts of group-centered columns")
    p.add_argument("--lambdas", help="extra comma-separated penalties for FDR counts")
    p.add_argument("--top", type=int, default=10)
    p.set_defaults(func=cmd_stability)
    return parser


def _apply_config(parser, argv, args):
    """Load ``--config``; for non-simulate commands its keys become option defaults."""
    args.config_data = None
    if args.config is None:
        return args
    try:
        with open(args.config) as fh:
            data = json.load(fh)
    except OSError as err:
        raise ConfigError(f"cannot read config: {err}") from None
    except json.JSONDecodeError as err:
        raise ParseError(f"config is not valid JSON: {err.msg}", line=err.lineno) from None
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    if args.command == "simulate":
        args.config_data = data
        return args
    sub = parser._subparsers._group_actions[0].choices[args.command]
    dests = {a.dest for a in sub._actions}
    unknown = sorted(set(data) - dests)
    if unknown:
        raise ConfigError(f"unknown config keys {unknown}")
    sub.set_defaults(**data)
    new = parser.parse_args(argv)
    new.config_data = data
    return new


def _error_report(err: BaseException) -> dict:
    if isinstance(err, GemglsError):
        rep = err.to_dict()
    else:
        rep = {"kind": type(err).__name__, "message": str(err)}
    frames = [f for f in traceback.extract_tb(err.__traceback__) if "gemgls" in f.filename]
    if frames:
        rep["module"] = Path(frames[-1].filename).stem
        rep.setdefault("step", None)
        if rep["step"] is None:
            rep["step"] = frames[-1].name
    return rep


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args = _apply_config(parser, argv, args)
        return args.func(args)
    except (ConfigError, ParseError, InvalidParameterError, PreconditionError,
            FileNotFoundError, IsADirectoryError, PermissionError) as err:
        code = EXIT_CONFIG
        report = _error_report(err)
    except GemglsError as err:
        code = EXIT_NUMERIC
        report = _error_report(err)
    except (np.linalg.LinAlgError, FloatingPointError) as err:
        code = EXIT_NUMERIC
        report = _error_report(err)
    report["exit_code"] = code
    text = json.dumps(report, sort_keys=True, default=str)
    print(text, file=sys.stderr)
    if getattr(args, "out", None):
        try:
            Path(args.out).mkdir(parents=True, exist_ok=True)
            (Path(args.out) / "error.json").write_text(text + "\n")
        except OSError:
            pass
    return code


if __name__ == "__main__":
    sys.exit(main())
