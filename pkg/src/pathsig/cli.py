"""Command-line front end: config ingestion, experiment dispatch, CSV output.

Exit codes: 0 on success, 2 for configuration problems, 3 for runtime or
numerical failures.  Outputs are written atomically (temp file, then rename)
and are byte-identical for identical (config, seed).
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import math
import os
import sys
import tempfile
from dataclasses import dataclass, field

import numpy as np

from . import __version__, numkit, simlab
from .lasso_path import forward_stepwise, lar_path
from .numkit import NumericalError, RandomStream
from .seltests import (
    cov_pvalue,
    cov_stat_fit_form,
    gap_stat,
    gumbel_pvalue,
    spacing_pvalue,
    tmax_mc_pvalue,
)
from .simlab import DesignSpec, SignalSpec
from .stopping import forward_stop

__all__ = ["ConfigError", "RunConfig", "main", "run", "emit_csv"]

COMMANDS = ("path", "test", "experiment")
EXPERIMENT_KINDS = ("screening", "qq", "fdr", "equicorr")

CSV_SCHEMAS = {
    "qq": ("rep", "step", "method", "pvalue"),
    "screening": ("beta_min", "k", "prob", "se"),
    "fdr": (
        "avg_selected", "avg_selected_se", "avg_fp", "avg_fp_se",
        "avg_tp", "avg_tp_se", "fwer", "fwer_se", "fdr", "fdr_se",
        "uvr", "uvr_se",
    ),
    "equicorr": ("rep", "centered_max"),
    "path": ("step", "knot", "entered", "sign"),
    "test": ("step", "method", "statistic", "pvalue", "mc_se"),
    "screening_raw": ("rep", "beta_min", "k", "contained"),
    "fdr_raw": ("rep", "n_selected", "fp", "tp", "fdp", "uvr", "fwer_violation"),
}


class ConfigError(ValueError):
    """Configuration failed to parse or validate; maps to exit code 2."""


@dataclass(frozen=True)
class RunConfig:
    """Fully resolved run description, serialized verbatim into the sidecar."""

    command: str
    experiment_kind: str | None
    design: DesignSpec
    signal: SignalSpec
    sigma: float
    alpha: float
    reps: int
    steps: int
    seed: int
    out: str
    methods: tuple[str, ...]
    n_mc: int
    k_grid: tuple[int, ...]
    beta_min_grid: tuple[float, ...]
    cov_rate: str

    def to_json_dict(self) -> dict:
        data = dataclasses.asdict(self)
        data["design"] = dataclasses.asdict(self.design)
        data["signal"] = dataclasses.asdict(self.signal)
        return data


_DEFAULTS = {
    "sigma": 1.0,
    "alpha": 0.05,
    "steps": 4,
    "seed": 0,
    "out": ".",
    "methods": ["covariance", "spacing", "tmax"],
    "n_mc": 1000,
    "k_grid": [5, 10, 15, 20],
    "beta_min_grid": list(simlab.DEFAULT_BETA_MIN_GRID),
    "cov_rate": "incremental",
    "design": {"n": 50, "p": 10, "structure": "ar1", "rho": 0.0},
    "signal": {"k0": 0, "beta_min": 0.0},
}

_KNOWN_FIELDS = set(_DEFAULTS) | {"command", "experiment", "reps"}


def _require(raw: dict, name: str):
    if name not in raw or raw[name] is None:
        raise ConfigError(f"missing required field '{name}'")
    return raw[name]


def _as_int(raw: dict, name: str, minimum: int | None = None) -> int:
    value = _require(raw, name)
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"field '{name}' must be an integer, got {value!r}")
    if minimum is not None and value < minimum:
        raise ConfigError(f"field '{name}' must be >= {minimum}, got {value}")
    return value


def _as_float(raw: dict, name: str) -> float:
    value = _require(raw, name)
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"field '{name}' must be a number, got {value!r}")
    return float(value)


def _parse_design(raw: dict) -> DesignSpec:
    spec = dict(_DEFAULTS["design"])
    given = raw.get("design", {})
    if not isinstance(given, dict):
        raise ConfigError("field 'design' must be an object")
    unknown = set(given) - set(spec)
    if unknown:
        raise ConfigError(f"unknown design field '{sorted(unknown)[0]}'")
    spec.update(given)
    try:
        return DesignSpec(
            n=int(spec["n"]), p=int(spec["p"]),
            structure=str(spec["structure"]), rho=float(spec["rho"]),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"field 'design': {exc}") from exc


def _parse_signal(raw: dict) -> SignalSpec:
    spec = dict(_DEFAULTS["signal"])
    given = raw.get("signal", {})
    if not isinstance(given, dict):
        raise ConfigError("field 'signal' must be an object")
    allowed = {"k0", "beta_min", "support", "signs"}
    unknown = set(given) - allowed
    if unknown:
        raise ConfigError(f"unknown signal field '{sorted(unknown)[0]}'")
    spec.update(given)
    try:
        return SignalSpec(
            k0=int(spec["k0"]),
            beta_min=float(spec["beta_min"]),
            support=None if spec.get("support") is None else tuple(int(j) for j in spec["support"]),
            signs=None if spec.get("signs") is None else tuple(int(s) for s in spec["signs"]),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"field 'signal': {exc}") from exc


def resolve_config(args: argparse.Namespace) -> RunConfig:
    """Merge defaults, the JSON config file, and CLI flags (flags win)."""
    raw: dict = {}
    if args.config is not None:
        try:
            with open(args.config, "r", encoding="utf-8") as fh:
                loaded = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config file: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file is not valid JSON (line {exc.lineno}): {exc.msg}") from exc
        if not isinstance(loaded, dict):
            raise ConfigError("config file must hold a JSON object")
        unknown = set(loaded) - _KNOWN_FIELDS
        if unknown:
            raise ConfigError(f"unknown config field '{sorted(unknown)[0]}'")
        raw.update(loaded)

    for flag in ("seed", "reps", "out", "sigma", "alpha"):
        value = getattr(args, flag)
        if value is not None:
            raw[flag] = value

    command = args.command
    kind = getattr(args, "kind", None)
    if "command" in raw and raw["command"] != command:
        raise ConfigError(
            f"field 'command': config says {raw['command']!r} but the "
            f"command line says {command!r}"
        )
    if command == "experiment":
        kind = kind or raw.get("experiment")
        if kind is None:
            raise ConfigError("missing required field 'experiment'")
        if kind not in EXPERIMENT_KINDS:
            raise ConfigError(
                f"field 'experiment' must be one of {EXPERIMENT_KINDS}, got {kind!r}"
            )
    else:
        kind = None

    merged = {**_DEFAULTS, **{k: v for k, v in raw.items() if k not in ("command", "experiment")}}

    needs_reps = command == "experiment"
    if needs_reps:
        reps = _as_int(merged | {"reps": raw.get("reps")}, "reps", minimum=1)
    else:
        reps = int(raw.get("reps", 1) or 1)

    sigma = _as_float(merged, "sigma")
    if sigma <= 0.0:
        raise ConfigError(f"field 'sigma' must be positive, got {sigma}")
    alpha = _as_float(merged, "alpha")
    if not 0.0 < alpha < 1.0:
        raise ConfigError(f"field 'alpha' must lie in (0, 1), got {alpha}")
    steps = _as_int(merged, "steps", minimum=1)
    seed = _as_int(merged, "seed")
    n_mc = _as_int(merged, "n_mc", minimum=1)
    out = str(_require(merged, "out"))

    methods = merged["methods"]
    if not isinstance(methods, (list, tuple)) or not methods:
        raise ConfigError("field 'methods' must be a non-empty list")
    methods = tuple(str(m) for m in methods)

    k_grid = merged["k_grid"]
    if not isinstance(k_grid, (list, tuple)) or not k_grid:
        raise ConfigError("field 'k_grid' must be a non-empty list")
    try:
        k_grid = tuple(int(k) for k in k_grid)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"field 'k_grid': {exc}") from exc

    beta_grid = merged["beta_min_grid"]
    if not isinstance(beta_grid, (list, tuple)) or not beta_grid:
        raise ConfigError("field 'beta_min_grid' must be a non-empty list")
    try:
        beta_grid = tuple(float(b) for b in beta_grid)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"field 'beta_min_grid': {exc}") from exc

    cov_rate = str(merged["cov_rate"])
    if cov_rate not in ("incremental", "step"):
        raise ConfigError(
            f"field 'cov_rate' must be 'incremental' or 'step', got {cov_rate!r}"
        )

    return RunConfig(
        command=command,
        experiment_kind=kind,
        design=_parse_design(merged),
        signal=_parse_signal(merged),
        sigma=sigma,
        alpha=alpha,
        reps=reps,
        steps=steps,
        seed=seed,
        out=out,
        methods=methods,
        n_mc=n_mc,
        k_grid=k_grid,
        beta_min_grid=beta_grid,
        cov_rate=cov_rate,
    )


def _format_value(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if math.isnan(value) or math.isinf(value):
            raise ValueError("refusing to emit NaN or infinity into CSV output")
        return format(value, ".17g")
    return str(value)


def _atomic_write(path: str, data: str) -> None:
    directory = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=".part")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def emit_csv(records, schema, path: str) -> None:
    """Write rows as RFC-4180-style CSV with full round-trip float formatting."""
    schema = tuple(schema)
    import io

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\r\n")
    writer.writerow(schema)
    for record in records:
        if len(record) != len(schema):
            raise ValueError(
                f"record has {len(record)} fields but schema expects {len(schema)}"
            )
        writer.writerow([_format_value(v) for v in record])
    _atomic_write(path, buf.getvalue())


def _write_sidecar(config: RunConfig, out_dir: str, name: str, artifacts, extra=None) -> str:
    payload = {
        "version": __version__,
        "config": config.to_json_dict(),
        "artifacts": sorted(artifacts),
    }
    if extra:
        payload["summary"] = extra
    path = os.path.join(out_dir, f"{name}.json")
    _atomic_write(path, json.dumps(payload, indent=2, sort_keys=True) + "\n")
    return path


def _dataset(config: RunConfig):
    stream = RandomStream(config.seed, 0)
    X = simlab.generate_design(config.design, stream)
    beta = config.signal.beta_for(config.design.p)
    y = simlab.generate_response(X, beta, config.sigma, RandomStream(config.seed, 1))
    return X, y


def _run_path(config: RunConfig, out_dir: str) -> list[str]:
    X, y = _dataset(config)
    steps = min(config.steps, config.design.p, config.design.n - 1)
    trace = lar_path(X, y, steps)
    rows = [
        (k + 1, float(trace.knots[k]), int(trace.entered[k]), int(trace.signs[k]))
        for k in range(trace.n_steps)
    ]
    csv_path = os.path.join(out_dir, "path.csv")
    emit_csv(rows, CSV_SCHEMAS["path"], csv_path)
    _write_sidecar(config, out_dir, "path", ["path.csv"],
                   extra={"lambda_floor": trace.lambda_floor,
                          "tie_steps": list(trace.tie_steps)})
    return [csv_path]


def _run_test(config: RunConfig, out_dir: str) -> list[str]:
    X, y = _dataset(config)
    steps = min(config.steps, config.design.p, config.design.n - 1)
    trace = lar_path(X, y, steps)
    rows = []
    cov_pvals = []
    for k in range(1, trace.n_steps):
        t = max(cov_stat_fit_form(trace, X, y, k, config.sigma), 0.0)
        rate = 1.0 if config.cov_rate == "incremental" else float(k)
        pv = cov_pvalue(t, rate)
        cov_pvals.append(min(pv, 1.0 - 1e-12))
        rows.append((k, "covariance", t, pv, None))
    if trace.n_steps >= 2:
        rows.append((1, "spacing", float(trace.knots[0] / config.sigma),
                     spacing_pvalue(trace.knots[0], trace.knots[1], config.sigma), None))
    scores = X.T @ y / config.sigma
    gum = gumbel_pvalue(scores, config.design.p)
    rows.append((1, "gumbel", gum.statistic, gum.pvalue, None))
    gap = gap_stat(scores, config.design.p)
    rows.append((1, "gap", gap.statistic, gap.pvalue, None))
    fs = forward_stepwise(X, y, steps)
    for k in range(1, steps + 1):
        pv, se = tmax_mc_pvalue(X, fs.entered[: k - 1], fs.tstats[k - 1],
                                config.n_mc, RandomStream(config.seed, 1 + k))
        rows.append((k, "tmax", float(fs.tstats[k - 1]), pv, se))
    decision = forward_stop(cov_pvals, config.alpha)
    csv_path = os.path.join(out_dir, "test.csv")
    emit_csv(rows, CSV_SCHEMAS["test"], csv_path)
    _write_sidecar(config, out_dir, "test", ["test.csv"],
                   extra={"forward_stop_k_hat": decision.k_hat,
                          "alpha": config.alpha})
    return [csv_path]


def _run_experiment(config: RunConfig, out_dir: str) -> list[str]:
    kind = config.experiment_kind
    stream = RandomStream(config.seed, 0)
    written: list[str] = []
    if kind == "qq":
        result = simlab.qq_experiment(
            config.design, config.sigma, config.steps, config.methods,
            config.reps, stream, n_mc=config.n_mc,
        )
        rows = [(r.rep, r.step, r.method, r.pvalue) for r in result.records]
        path = os.path.join(out_dir, "qq.csv")
        emit_csv(rows, CSV_SCHEMAS["qq"], path)
        written.append(path)
        _write_sidecar(config, out_dir, "qq", ["qq.csv"])
    elif kind == "screening":
        result = simlab.screening_experiment(
            config.design, config.signal, config.sigma, config.k_grid,
            config.reps, stream, beta_min_grid=config.beta_min_grid,
        )
        path = os.path.join(out_dir, "screening.csv")
        emit_csv([(c.beta_min, c.k, c.prob, c.se) for c in result.cells],
                 CSV_SCHEMAS["screening"], path)
        raw_path = os.path.join(out_dir, "screening_raw.csv")
        emit_csv([(r.rep, r.beta_min, r.k, r.contained) for r in result.records],
                 CSV_SCHEMAS["screening_raw"], raw_path)
        written.extend([path, raw_path])
        _write_sidecar(config, out_dir, "screening", ["screening.csv", "screening_raw.csv"])
    elif kind == "fdr":
        result = simlab.fdr_experiment(
            config.design, config.signal, config.sigma, config.alpha,
            config.reps, stream, steps=config.steps, cov_rate=config.cov_rate,
        )
        m = result.metrics
        path = os.path.join(out_dir, "fdr.csv")
        emit_csv([(m.avg_selected, m.avg_selected_se, m.avg_fp, m.avg_fp_se,
                   m.avg_tp, m.avg_tp_se, m.fwer, m.fwer_se, m.fdr, m.fdr_se,
                   m.uvr, m.uvr_se)], CSV_SCHEMAS["fdr"], path)
        raw_path = os.path.join(out_dir, "fdr_raw.csv")
        emit_csv([(r.rep, r.n_selected, r.fp, r.tp, r.fdp, r.uvr, r.fwer_violation)
                  for r in result.records], CSV_SCHEMAS["fdr_raw"], raw_path)
        written.extend([path, raw_path])
        _write_sidecar(config, out_dir, "fdr", ["fdr.csv", "fdr_raw.csv"])
    else:  # equicorr
        if config.design.rho == 0.0:
            raise ConfigError("field 'design.rho' must be positive for the equicorr experiment")
        result = simlab.equicorr_limit_experiment(
            config.design.p, config.design.rho, config.reps, stream,
        )
        path = os.path.join(out_dir, "equicorr.csv")
        emit_csv(list(enumerate(result.samples)), CSV_SCHEMAS["equicorr"], path)
        written.append(path)
        _write_sidecar(config, out_dir, "equicorr", ["equicorr.csv"],
                       extra={"ks_distance": result.ks_distance})
    return written


def run(config: RunConfig) -> list[str]:
    """Execute one resolved configuration; returns the written CSV paths."""
    out_dir = config.out
    os.makedirs(out_dir, exist_ok=True)
    if config.command == "path":
        return _run_path(config, out_dir)
    if config.command == "test":
        return _run_test(config, out_dir)
    return _run_experiment(config, out_dir)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pathsig",
        description="Solution paths, sequential significance tests, and experiments",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", help="JSON config file; flags override it")
        p.add_argument("--seed", type=int, default=None, help="root seed")
        p.add_argument("--reps", type=int, default=None, help="replication count")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--sigma", type=float, default=None, help="noise level")
        p.add_argument("--alpha", type=float, default=None, help="target level")

    add_common(sub.add_parser("path", help="compute a solution path on simulated data"))
    add_common(sub.add_parser("test", help="run the significance tests on simulated data"))
    exp = sub.add_parser("experiment", help="run a replicated experiment")
    exp.add_argument("kind", choices=EXPERIMENT_KINDS)
    add_common(exp)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = resolve_config(args)
    except ConfigError as exc:
        print(f"pathsig: config error: {exc}", file=sys.stderr)
        return 2
    try:
        run(config)
    except ConfigError as exc:
        print(f"pathsig: config error: {exc}", file=sys.stderr)
        return 2
    except (NumericalError, ValueError, OSError, np.linalg.LinAlgError) as exc:
        print(f"pathsig: runtime error: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
