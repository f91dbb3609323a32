"""Command line: build, verify and sweep accurate coresets from CSV data.

    exact-coreset ridge  --input data.csv --lambda 1 --output core.json
    exact-coreset lpreg  --input data.csv --lambda 0.5 --p 4 --output core.json
    exact-coreset lvm    --input docs.csv --k 3 --output core.json
    exact-coreset verify --input data.csv --artifact core.json
    exact-coreset sweep  --input data.csv --lambdas 0,0.1,1,10 --output sweep.csv

Exit codes: 0 success, 2 input error, 3 numerical failure.
"""

import argparse
import csv
import json
import logging
import math
import os
import sys
import tempfile
import time
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import (
    ArgumentError,
    CoresetError,
    DeficientRankError,
    InputError,
    NoNullSpaceError,
    NumericalFailure,
    RecoveryError,
)
from .lvm import MomentModel, build_lvm_kernel, lvm_coreset
from .caratheodory import CoresetSelection
from .numerics import matrix_rank, statistical_dimension
from .regression import (
    RegressionCoreset,
    RegressionProblem,
    build_coreset,
    data_kernel_spectrum,
    relative_gaps,
    sweep_lambda,
    verify_equivalence,
)
from .kernelization import build_regression_kernel, outer_power_rows

log = logging.getLogger("exact_coreset")

SCHEMA_VERSION = "1.0"
EXIT_OK, EXIT_INPUT, EXIT_NUMERIC = 0, 2, 3
COMMANDS = ("ridge", "lpreg", "lvm", "verify", "sweep")


@dataclass
class RunConfig:
    command: str
    input_path: str
    output_path: Optional[str] = None
    label_column: Optional[str] = None
    lam: float = 0.0
    p: int = 2
    k: Optional[int] = None
    seed: int = 0
    clusters: Optional[int] = None
    query_count: int = 100
    artifact_path: Optional[str] = None
    lambdas: Optional[list] = None
    reg_form: str = "sign"
    timings: bool = False

    def validate(self):
        if self.command not in COMMANDS:
            raise ArgumentError(f"unknown command {self.command!r}")
        if not self.input_path:
            raise ArgumentError("--input is required")
        if self.command in ("ridge", "lpreg", "lvm") and not self.output_path:
            raise ArgumentError(f"{self.command} requires --output")
        if self.command == "ridge" and self.p != 2:
            raise ArgumentError("ridge is the p = 2 case; use lpreg for other p")
        if self.p < 2 or self.p % 2:
            raise ArgumentError(f"--p must be even and >= 2, got {self.p}")
        if not math.isfinite(self.lam) or self.lam < 0:
            raise ArgumentError(f"--lambda must be finite and >= 0, got {self.lam}")
        if self.command == "lvm" and self.k is None:
            raise ArgumentError("lvm requires --k")
        if self.command == "verify" and not self.artifact_path:
            raise ArgumentError("verify requires --artifact")
        if self.command == "sweep" and not self.lambdas:
            raise ArgumentError("sweep requires --lambdas")
        if self.query_count < 1:
            raise ArgumentError("--query-count must be >= 1")
        if self.clusters is not None and self.clusters < 2:
            raise ArgumentError("--clusters must be >= 2")


# ---------------------------------------------------------------- CSV input

def _is_number(cell):
    try:
        float(cell)
    except ValueError:
        return False
    return True


def read_matrix(path):
    """Parse a rectangular numeric CSV; returns (header or None, array)."""
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from exc
    except UnicodeDecodeError as exc:
        raise InputError(f"{path} is not valid UTF-8") from exc
    if not rows:
        raise InputError(f"{path} is empty")
    header = None
    if not all(_is_number(c.strip()) for c in rows[0]):
        header = [c.strip() for c in rows[0]]
        rows = rows[1:]
        if not rows:
            raise InputError(f"{path} has a header but no data rows")
    width = len(header) if header else len(rows[0])
    start = 2 if header else 1
    data = np.empty((len(rows), width))
    for i, row in enumerate(rows):
        line = i + start
        if len(row) != width:
            raise InputError(f"{path}: row {line} has {len(row)} fields, expected {width}")
        for j, cell in enumerate(row):
            try:
                v = float(cell.strip())
            except ValueError:
                raise InputError(f"{path}: row {line}, column {j + 1}: non-numeric value {cell!r}") from None
            if not math.isfinite(v):
                raise InputError(f"{path}: row {line}, column {j + 1}: non-finite value {cell!r}")
            data[i, j] = v
    return header, data


def _label_index(label_column, header, width):
    if label_column is None:
        return width - 1
    if header and label_column in header:
        return header.index(label_column)
    try:
        idx = int(label_column)
    except ValueError:
        raise InputError(f"label column {label_column!r} not found") from None
    if not -width <= idx < width:
        raise InputError(f"label column {idx} out of range for {width} columns")
    return idx % width


def load_csv(path, label_column=None, task="regression", lam=0.0, p=2, k=None):
    """Read a CSV as a RegressionProblem (label split out) or a MomentModel."""
    header, data = read_matrix(path)
    if task == "lvm":
        return MomentModel(data, k)
    width = data.shape[1]
    if width < 2:
        raise InputError(f"{path}: regression needs at least 2 columns")
    li = _label_index(label_column, header, width)
    x = np.delete(data, li, axis=1)
    return RegressionProblem(x, data[:, li], lam, p)


# ---------------------------------------------------------------- JSON output

def _fmt_float(v):
    if not math.isfinite(v):
        raise ValueError(f"cannot serialize non-finite float {v}")
    s = format(v, ".17g")
    if "e" not in s and "." not in s:
        s += ".0"
    return s


def dumps(obj, indent=2, _level=0):
    """Deterministic JSON: sorted keys, floats with 17 significant digits."""
    pad = " " * (indent * (_level + 1))
    end = " " * (indent * _level)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {dumps(obj[k], indent, _level + 1)}"
                 for k in sorted(obj, key=str)]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        items = [pad + dumps(v, indent, _level + 1) for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    if isinstance(obj, (bool, np.bool_)) or obj is None:
        return json.dumps(None if obj is None else bool(obj))
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _fmt_float(float(obj))
    return json.dumps(str(obj))


def write_atomic(path, text):
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def regression_artifact(prob, core, wall_ms=None):
    spectrum = data_kernel_spectrum(prob)
    meta = {
        "lambda": prob.lam,
        "p": prob.p,
        "n": prob.n,
        "d": prob.d,
        "kernel_rank": core.kernel_rank,
        "sd_bound": statistical_dimension(spectrum, prob.lam) + 1.0,
        "selected_count": core.n_data,
        "selected_total": core.selected_total,
    }
    if wall_ms is not None:
        meta["wall_ms"] = wall_ms
    return {
        "schema_version": SCHEMA_VERSION,
        "kind": "regression",
        "indices": [int(i) for i in core.data_indices],
        "weights": [float(w) for w in core.data_weights],
        "reg_diag": {str(k): float(v) for k, v in sorted(core.reg_diag.items())},
        "meta": meta,
    }


def lvm_artifact(model, kernel, sel, wall_ms=None):
    meta = {
        "k": model.k,
        "n": model.n,
        "d": model.d,
        "kernel_rank": matrix_rank(kernel.rows),
        "selected_count": len(sel),
    }
    if wall_ms is not None:
        meta["wall_ms"] = wall_ms
    return {
        "schema_version": SCHEMA_VERSION,
        "kind": "lvm",
        "indices": [int(i) for i in sel.indices],
        "weights": [float(w) for w in sel.weights],
        "meta": meta,
    }


def read_artifact(path):
    try:
        with open(path, encoding="utf-8") as fh:
            art = json.load(fh)
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON ({exc.msg} at line {exc.lineno})") from exc
    for key in ("schema_version", "kind", "indices", "weights", "meta"):
        if key not in art:
            raise InputError(f"{path}: artifact lacks {key!r}")
    if art["schema_version"] != SCHEMA_VERSION:
        raise InputError(f"{path}: unsupported schema_version {art['schema_version']!r}")
    if len(art["indices"]) != len(art["weights"]):
        raise InputError(f"{path}: indices and weights differ in length")
    return art


def coreset_from_artifact(prob, art):
    """Rebuild a RegressionCoreset from an artifact and its source data."""
    meta = art["meta"]
    if meta.get("n") != prob.n or meta.get("d") != prob.d:
        raise InputError(
            f"artifact was built for n={meta.get('n')}, d={meta.get('d')}; "
            f"data has n={prob.n}, d={prob.d}"
        )
    idx = np.asarray(art["indices"], dtype=np.int64)
    w = np.asarray(art["weights"], dtype=np.float64)
    if idx.size and (idx.min() < 0 or idx.max() >= prob.n):
        raise InputError("artifact index out of range")
    if np.any(w <= 0):
        raise InputError("artifact weights must be positive")
    p = prob.p
    scale = w ** (1.0 / p)
    reg = {int(k): float(v) for k, v in art.get("reg_diag", {}).items()}
    return RegressionCoreset(
        xc=prob.x[idx] * scale[:, None], yc=prob.y[idx] * scale,
        data_indices=idx, data_weights=w, reg_diag=reg,
        lam=prob.lam, p=p, d=prob.d,
        kernel_rank=int(meta.get("kernel_rank", 0)),
        selected_total=int(meta.get("selected_total", idx.size)),
    )


def verify_lvm(model, art, num_queries, seed):
    kernel = build_lvm_kernel(model)
    idx = np.asarray(art["indices"], dtype=np.int64)
    w = np.asarray(art["weights"], dtype=np.float64)
    if idx.size and (idx.min() < 0 or idx.max() >= model.n):
        raise InputError("artifact index out of range")
    sel = CoresetSelection(idx, w)
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((num_queries, model.k))
    lifted = outer_power_rows(x, 3)
    full = lifted @ kernel.rows.sum(axis=0)
    core = lifted @ (w @ kernel.rows[idx])
    gap, rel = relative_gaps(full, core)
    return {
        "num_queries": num_queries,
        "max_abs_gap": float(gap.max()),
        "max_rel_gap": float(rel.max()),
        "moment_gap": float(np.abs(kernel.tensor(sel) - kernel.tensor()).max()),
        "n": model.n,
        "d": model.d,
        "k": model.k,
        "selected_count": int(idx.size),
    }


# ---------------------------------------------------------------- commands

def _timed(fn, *args, **kwargs):
    t0 = time.perf_counter()
    out = fn(*args, **kwargs)
    return out, 1e3 * (time.perf_counter() - t0)


def _emit(text, path):
    if path:
        write_atomic(path, text)
    else:
        sys.stdout.write(text)


def execute(cfg: RunConfig):
    cfg.validate()
    if cfg.command in ("ridge", "lpreg"):
        prob = load_csv(cfg.input_path, cfg.label_column, "regression", cfg.lam, cfg.p)
        core, ms = _timed(build_coreset, prob, clusters=cfg.clusters, reg_form=cfg.reg_form)
        art = regression_artifact(prob, core, ms if cfg.timings else None)
        write_atomic(cfg.output_path, dumps(art) + "\n")
        log.info("selected %d of %d samples", core.n_data, prob.n)
    elif cfg.command == "lvm":
        model = load_csv(cfg.input_path, task="lvm", k=cfg.k)
        t0 = time.perf_counter()
        kernel = build_lvm_kernel(model)
        sel = lvm_coreset(model, clusters=cfg.clusters, kernel=kernel)
        ms = 1e3 * (time.perf_counter() - t0)
        art = lvm_artifact(model, kernel, sel, ms if cfg.timings else None)
        write_atomic(cfg.output_path, dumps(art) + "\n")
        log.info("selected %d of %d samples", len(sel), model.n)
    elif cfg.command == "verify":
        art = read_artifact(cfg.artifact_path)
        meta = art["meta"]
        if art["kind"] == "lvm":
            model = load_csv(cfg.input_path, task="lvm", k=int(meta["k"]))
            report = verify_lvm(model, art, cfg.query_count, cfg.seed)
        elif art["kind"] == "regression":
            prob = load_csv(cfg.input_path, cfg.label_column, "regression",
                            float(meta["lambda"]), int(meta["p"]))
            core = coreset_from_artifact(prob, art)
            report = verify_equivalence(prob, core, cfg.query_count, cfg.seed).as_dict(cfg.timings)
        else:
            raise InputError(f"unknown artifact kind {art['kind']!r}")
        _emit(dumps(report) + "\n", cfg.output_path)
    elif cfg.command == "sweep":
        prob = load_csv(cfg.input_path, cfg.label_column, "regression", 0.0, cfg.p)
        rows = sweep_lambda(prob, cfg.lambdas, clusters=cfg.clusters)
        lines = ["lambda,selected,sd_bound"]
        lines += [f"{_fmt_float(l)},{s},{_fmt_float(b)}" for l, s, b in rows]
        _emit("\n".join(lines) + "\n", cfg.output_path)
    return EXIT_OK


def run(cfg: RunConfig):
    """Execute a config and map errors onto the exit-code contract."""
    try:
        return execute(cfg)
    except (NumericalFailure, DeficientRankError, NoNullSpaceError, RecoveryError) as exc:
        log.error("numerical failure: %s", exc)
        return EXIT_NUMERIC
    except (InputError, ArgumentError, CoresetError) as exc:
        log.error("input error: %s", exc)
        return EXIT_INPUT


def _lambda_list(text):
    try:
        vals = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad lambda list {text!r}") from None
    return vals


def build_parser():
    ap = argparse.ArgumentParser(prog="exact-coreset", description=__doc__.split("\n")[0])
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--input", dest="input_path", required=True)
    ap.add_argument("--output", dest="output_path")
    ap.add_argument("--artifact", dest="artifact_path", help="coreset JSON (verify)")
    ap.add_argument("--lambda", dest="lam", type=float, default=0.0)
    ap.add_argument("--lambdas", type=_lambda_list, help="comma-separated grid (sweep)")
    ap.add_argument("--p", type=int, default=2)
    ap.add_argument("--k", type=int)
    ap.add_argument("--label-col", dest="label_column")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--clusters", type=int)
    ap.add_argument("--query-count", dest="query_count", type=int, default=100)
    ap.add_argument("--reg-form", dest="reg_form", choices=("sign", "diagonal"), default="sign")
    ap.add_argument("--timings", action="store_true", help="record wall-clock times in outputs")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None):
    ap = build_parser()
    try:
        ns = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if ns.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    args = vars(ns)
    args.pop("verbose")
    cfg = RunConfig(**args)

    threads = os.environ.get("EXACT_CORESET_THREADS")
    if threads:
        try:
            limit = max(1, int(threads))
        except ValueError:
            log.error("EXACT_CORESET_THREADS must be an integer, got %r", threads)
            return EXIT_INPUT
        from threadpoolctl import threadpool_limits
        with threadpool_limits(limits=limit):
            return run(cfg)
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
