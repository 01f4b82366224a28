"""Command-line front end: sweeps over (SNR, N_r) written as CSV or JSON.

Subcommands::

    analyze   pe_star / pe_exact of a fixed constellation (--alpha/--eta1/--eta2)
    optimize  design the constellation (greedy, exhaustive or both)
    simulate  Monte Carlo of a fixed or freshly optimized constellation
    sweep     optimize every point, then simulate it

Settings come from built-in defaults, then an optional ``--config`` file of
``key = value`` lines, then command-line flags (last one wins).

Exit status is 0 on success, 1 on a usage error and 2 on a runtime failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace

from .linkmodel import Constellation, LinkModelError, SystemParams, complete_constellation, pe_exact, pe_star
from .optimizer import DescentConfig, exhaustive_search, greedy_descent
from .simulator import SimConfig, simulate_ncf2fd

__all__ = [
    "CSV_HEADER",
    "MODES",
    "UsageError",
    "SweepSpec",
    "ResultRow",
    "parse_config",
    "run_sweep",
    "emit_csv",
    "emit_json",
    "read_csv",
    "main",
]

MODES = ("analyze", "optimize", "simulate", "sweep")
METHODS = ("algorithm", "exhaustive")
NA = "NA"
CSV_HEADER = ("snr_db,n_r,alpha,eta1,eta2,eps1,eps2,pe_star,pe_exact,ser_mc,"
              "alice_ber,charlie_ber,fab_power,wall_time_s,method,seed")


class UsageError(ValueError):
    """Invalid command line or configuration; lists every offending field."""

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


@dataclass(frozen=True)
class SweepSpec:
    snr_db_list: tuple
    n_r_list: tuple
    mode: str = "sweep"
    methods: tuple = ("algorithm",)
    sigma_ac2: float = 10.0
    lambda_sic: float = 1e-5
    exact_thresholds: bool = False
    descent: DescentConfig = field(default_factory=DescentConfig)
    grid_alpha: float = 0.01
    grid_eta: float = 0.01
    sim: SimConfig = field(default_factory=SimConfig)
    alpha: float | None = None
    eta1: float = 0.0
    eta2: float | None = None
    out: str | None = None
    fmt: str = "csv"
    workers: int = 1
    timing: bool = False

    def points(self):
        """Sweep points in emission order: sorted by (snr, n_r, method)."""
        if self.mode == "analyze" or (self.mode == "simulate" and self.alpha is not None):
            methods = ("fixed",)
        else:
            methods = tuple(sorted(self.methods))
        return sorted((s, n, m) for s in self.snr_db_list for n in self.n_r_list for m in methods)

    def metadata(self) -> dict:
        """Every effective setting, echoed into the output's metadata comment."""
        meta = {
            "mode": self.mode,
            "snr": list(self.snr_db_list),
            "nr": list(self.n_r_list),
            "method": list(self.methods),
            "sigma_ac2": self.sigma_ac2,
            "lambda_sic": self.lambda_sic,
            "exact_thresholds": self.exact_thresholds,
            "grid_alpha": self.grid_alpha,
            "grid_eta": self.grid_eta,
            "alpha": self.alpha,
            "eta1": self.eta1,
            "eta2": self.eta2,
            "trials": self.sim.trials,
            "seed": self.sim.seed,
            "jam_power": self.sim.jam_power,
        }
        meta.update({f"descent.{k}": v for k, v in asdict(self.descent).items()})
        return meta


@dataclass
class ResultRow:
    snr_db: float
    n_r: int
    alpha: float | None = None
    eta1: float | None = None
    eta2: float | None = None
    eps1: float | None = None
    eps2: float | None = None
    pe_star: float | None = None
    pe_exact: float | None = None
    ser_mc: float | None = None
    alice_ber: float | None = None
    charlie_ber: float | None = None
    fab_power: float | None = None
    wall_time_s: float | None = None
    method: str = "fixed"
    seed: int | None = None


_FIELDS = [f.name for f in fields(ResultRow)]
_INT_FIELDS = {"n_r", "seed"}
_STR_FIELDS = {"method"}
assert ",".join(_FIELDS) == CSV_HEADER


# ---------------------------------------------------------------- parsing

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError([message])


def _build_parser() -> argparse.ArgumentParser:
    S = argparse.SUPPRESS
    p = _Parser(prog="ncf2fd", description="NC-F2FD constellation design and link simulation.",
                argument_default=S)
    p.add_argument("command", nargs="?", choices=MODES, default=None, help="what to run (same as --mode)")
    p.add_argument("--mode", help="analyze, optimize, simulate or sweep")
    p.add_argument("--config", help="file of `key = value` lines; flags override it")
    p.add_argument("--snr", nargs="+", help="SNR values in dB (space or comma separated)")
    p.add_argument("--nr", nargs="+", help="receive antenna counts")
    p.add_argument("--sigma-ac2", help="Alice-Charlie channel variance (default 10)")
    p.add_argument("--lambda-sic", help="residual self-interference factor (default 1e-5)")
    p.add_argument("--exact-thresholds", action="store_const", const="true",
                   help="keep the prior term in the outer JDD thresholds")
    p.add_argument("--method", nargs="+", help="algorithm, exhaustive or both")
    p.add_argument("--delta-pe")
    p.add_argument("--delta-eta1")
    p.add_argument("--eta2-init")
    p.add_argument("--alpha-init")
    p.add_argument("--grid-alpha", help="exhaustive search alpha step (default 0.01)")
    p.add_argument("--grid-eta", help="exhaustive search eta1/eta2 step (default 0.01)")
    p.add_argument("--alpha", help="fixed constellation for analyze/simulate")
    p.add_argument("--eta1")
    p.add_argument("--eta2")
    p.add_argument("--trials")
    p.add_argument("--seed")
    p.add_argument("--jam-power")
    p.add_argument("--out", help="output path (default: stdout)")
    p.add_argument("--format", help="csv (default) or json")
    p.add_argument("--workers", help="worker processes (default 1)")
    p.add_argument("--timing", action="store_const", const="true",
                   help="record wall_time_s (breaks byte-identical reruns)")
    return p


def _read_config_file(path) -> dict:
    out = {}
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise UsageError([f"config: cannot read {path!r}: {exc.strerror}"]) from None
    problems = []
    for i, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            problems.append(f"config line {i}: expected `key = value`")
            continue
        key, val = (s.strip() for s in line.split("=", 1))
        out[key.replace("-", "_")] = val
    if problems:
        raise UsageError(problems)
    return out


def _split_list(v):
    items = v if isinstance(v, list) else [v]
    return [t for s in items for t in str(s).replace(",", " ").split()]


def _truthy(v) -> bool:
    return str(v).strip().lower() in ("1", "true", "yes", "on")


def parse_config(argv=None) -> SweepSpec:
    """Build a validated :class:`SweepSpec` from arguments and an optional config file.

    Raises
    ------
    UsageError
        Listing every invalid field together with its constraint.
    """
    ns = vars(_build_parser().parse_args(argv))
    raw = {}
    if "config" in ns:
        raw.update(_read_config_file(ns.pop("config")))
    command = ns.pop("command", None)
    if command is not None:
        ns["mode"] = command
    raw.update(ns)
    known = {a.dest for a in _build_parser()._actions} - {"help", "command", "config"}
    problems = [f"{k}: unknown setting" for k in raw if k not in known]

    def num(key, default, cast=float, check=None, rule=""):
        if key not in raw:
            return default
        try:
            val = cast(raw[key])
            if cast is int and isinstance(raw[key], str) and not raw[key].strip().lstrip("-").isdigit():
                raise ValueError
            if not math.isfinite(val):
                raise ValueError
        except (TypeError, ValueError):
            problems.append(f"{key.replace('_', '-')}: expected a finite {cast.__name__} (got {raw[key]!r})")
            return default
        if check is not None and not check(val):
            problems.append(f"{key.replace('_', '-')}: must satisfy {rule} (got {val})")
            return default
        return val

    def num_list(key, default, cast, check, rule):
        if key not in raw:
            return default
        vals = []
        for tok in _split_list(raw[key]):
            try:
                v = cast(tok) if cast is float else int(tok)
                if not math.isfinite(v):
                    raise ValueError
            except ValueError:
                problems.append(f"{key}: expected {cast.__name__} values (got {tok!r})")
                continue
            if not check(v):
                problems.append(f"{key}: must satisfy {rule} (got {v})")
                continue
            vals.append(v)
        if not vals and not any(p.startswith(key) for p in problems):
            problems.append(f"{key}: list must be non-empty")
        return tuple(dict.fromkeys(vals))

    mode = raw.get("mode", "sweep")
    if mode not in MODES:
        problems.append(f"mode: one of {', '.join(MODES)} (got {mode!r})")
        mode = "sweep"
    snrs = num_list("snr", (30.0,), float, lambda v: True, "finite")
    nrs = num_list("nr", (4,), int, lambda v: v >= 1, "n_r >= 1")
    methods = tuple(dict.fromkeys(_split_list(raw.get("method", "algorithm"))))
    if "both" in methods:
        methods = METHODS
    bad_m = [m for m in methods if m not in METHODS]
    if bad_m or not methods:
        problems.append(f"method: algorithm, exhaustive or both (got {' '.join(bad_m) or 'nothing'})")
        methods = ("algorithm",)

    sigma_ac2 = num("sigma_ac2", 10.0, check=lambda v: v > 1.0, rule="sigma_ac2 > 1")
    lambda_sic = num("lambda_sic", 1e-5, check=lambda v: v > 0, rule="lambda_sic > 0")
    exact = _truthy(raw.get("exact_thresholds", "false"))
    grid_alpha = num("grid_alpha", 0.01, check=lambda v: 0 < v < 1, rule="0 < grid_alpha < 1")
    grid_eta = num("grid_eta", 0.01, check=lambda v: 0 < v < 1, rule="0 < grid_eta < 1")
    trials = num("trials", 1_000_000, cast=int, check=lambda v: v >= 1, rule="trials >= 1")
    seed = num("seed", 42, cast=int, check=lambda v: 0 <= v < 2**64, rule="0 <= seed < 2**64")
    jam = num("jam_power", 10.0, check=lambda v: v >= 0, rule="jam_power >= 0")
    workers = num("workers", 1, cast=int, check=lambda v: v >= 1, rule="workers >= 1")
    alpha = num("alpha", None, check=lambda v: 0 < v < 1, rule="0 < alpha < 1")
    eta1 = num("eta1", 0.0, check=lambda v: 0 <= v < 1, rule="0 <= eta1 < 1")
    eta2 = num("eta2", None, check=lambda v: v > 0, rule="eta2 > 0")
    fmt = raw.get("format", "csv")
    if fmt not in ("csv", "json"):
        problems.append(f"format: csv or json (got {fmt!r})")
    out = raw.get("out")
    if out is not None:
        parent = os.path.dirname(os.path.abspath(out))
        if not os.path.isdir(parent):
            problems.append(f"out: directory {parent!r} does not exist")

    d = {}
    for key, name, rule in (("delta_pe", "delta_pe", "> 0"), ("delta_eta1", "delta_eta1", "> 0"),
                            ("eta2_init", "eta2_init", "> 0"), ("alpha_init", "alpha_init", "in (0, 1)")):
        v = num(key, None)
        if v is not None:
            d[name] = v
    descent = DescentConfig()
    try:
        descent = DescentConfig(**d)
    except ValueError as exc:
        problems.append(str(exc))

    if mode == "analyze" and (alpha is None or eta2 is None):
        problems.append("analyze: --alpha and --eta2 are required")
    if mode == "simulate" and (alpha is None) != (eta2 is None):
        problems.append("simulate: give both --alpha and --eta2, or neither")
    if alpha is not None and eta2 is not None:
        try:
            complete_constellation(alpha, eta1, eta2)
        except LinkModelError as exc:
            problems.append(f"constellation: {exc}")

    if problems:
        raise UsageError(problems)
    return SweepSpec(
        snr_db_list=snrs, n_r_list=nrs, mode=mode, methods=methods, sigma_ac2=sigma_ac2,
        lambda_sic=lambda_sic, exact_thresholds=exact, descent=descent, grid_alpha=grid_alpha,
        grid_eta=grid_eta, sim=SimConfig(trials=trials, seed=seed, jam_power=jam, exact_thresholds=exact),
        alpha=alpha, eta1=eta1, eta2=eta2, out=out, fmt=fmt, workers=workers,
        timing=_truthy(raw.get("timing", "false")),
    )


# ---------------------------------------------------------------- running

def _fill(row: ResultRow, c: Constellation):
    row.alpha, row.eta1, row.eta2, row.eps1, row.eps2 = c.alpha, c.eta1, c.eta2, c.eps1, c.eps2


def _run_point(spec: SweepSpec, point, run_index: int) -> ResultRow:
    snr, n_r, method = point
    row = ResultRow(snr_db=snr, n_r=n_r, method=method)
    t0 = time.perf_counter()
    try:
        params = SystemParams(snr, n_r=n_r, lambda_sic=spec.lambda_sic, sigma_ac2=spec.sigma_ac2,
                              exact_thresholds=spec.exact_thresholds)
        if method == "fixed":
            c = complete_constellation(spec.alpha, spec.eta1, spec.eta2)
        elif method == "algorithm":
            c = greedy_descent(params, spec.descent).constellation
        else:
            c = exhaustive_search(params, spec.grid_alpha, spec.grid_eta, spec.grid_eta).constellation
        _fill(row, c)
        row.pe_star = pe_star(params, c)
        row.pe_exact = pe_exact(params, c)
        if spec.mode in ("simulate", "sweep"):
            res = simulate_ncf2fd(params, c, replace(spec.sim, run_index=run_index))
            row.ser_mc, row.alice_ber = res.joint_ser, res.alice_ber
            row.charlie_ber, row.fab_power = res.charlie_ber, res.fab_mean_power
            row.seed = spec.sim.seed
    except Exception:  # recorded per point, the sweep goes on
        row = ResultRow(snr_db=snr, n_r=n_r, method=f"{method}:error")
    if spec.timing:
        row.wall_time_s = time.perf_counter() - t0
    return row


def _run_indexed(args):
    return _run_point(*args)


def run_sweep(spec: SweepSpec) -> list:
    """One :class:`ResultRow` per ``(snr, n_r, method)``, sorted by that key.

    Point ``i`` of the sorted list simulates with substream ``run_index=i``,
    so results do not depend on the number of workers.
    """
    jobs = [(spec, p, i) for i, p in enumerate(spec.points())]
    if spec.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=spec.workers) as pool:
            rows = list(pool.map(_run_indexed, jobs))
    else:
        rows = [_run_indexed(j) for j in jobs]
    return sorted(rows, key=lambda r: (r.snr_db, r.n_r, r.method))


# ---------------------------------------------------------------- output

def _fmt(v) -> str:
    if v is None:
        return NA
    if isinstance(v, str):
        return v
    if isinstance(v, (bool, int)) and not isinstance(v, float):
        return str(int(v))
    if not math.isfinite(v):
        return NA
    return "%.17g" % v


def _csv_text(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    buf.write(CSV_HEADER + "\n")
    for r in rows:
        w.writerow([_fmt(getattr(r, k)) for k in _FIELDS])
    return buf.getvalue()


def _json_text(rows) -> str:
    objs = []
    for r in rows:
        o = {}
        for k in _FIELDS:
            v = getattr(r, k)
            o[k] = NA if v is None or (isinstance(v, float) and not math.isfinite(v)) else v
        objs.append(o)
    return json.dumps(objs, indent=1) + "\n"


def _meta_text(meta: dict) -> str:
    return "".join(f"# {k} = {_fmt(v) if not isinstance(v, list) else ' '.join(map(_fmt, v))}\n"
                   for k, v in meta.items())


def _write(text: str, path):
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise OSError(exc.errno, f"cannot write {path!r}: {exc.strerror}") from None


def emit_csv(rows, path=None, meta: dict | None = None) -> str:
    """Render rows as CSV; write to ``path`` if given and return the text.

    The CSV holds only the header and the rows. ``meta`` goes to a sidecar
    ``<path>.meta`` of ``#``-prefixed ``key = value`` lines.
    """
    text = _csv_text(rows)
    if path is not None:
        _write(text, path)
        if meta is not None:
            _write(_meta_text(meta), str(path) + ".meta")
    return text


def emit_json(rows, path=None, meta: dict | None = None) -> str:
    """Same as :func:`emit_csv` but an array of objects keyed by the CSV header."""
    text = _json_text(rows)
    if path is not None:
        _write(text, path)
        if meta is not None:
            _write(_meta_text(meta), str(path) + ".meta")
    return text


def _parse_cell(name, tok):
    if tok == NA:
        return None
    if name in _STR_FIELDS:
        return tok
    if name in _INT_FIELDS:
        return int(tok)
    return float(tok)


def read_csv(path_or_text) -> list:
    """Inverse of :func:`emit_csv`; accepts a path or the CSV text itself."""
    if "\n" in str(path_or_text):
        text = path_or_text
    else:
        with open(path_or_text, encoding="utf-8") as fh:
            text = fh.read()
    reader = csv.reader(io.StringIO(text))
    header = next(reader)
    if ",".join(header) != CSV_HEADER:
        raise ValueError("unexpected CSV header")
    return [ResultRow(**{k: _parse_cell(k, t) for k, t in zip(header, rec)}) for rec in reader if rec]


def main(argv=None) -> int:
    try:
        spec = parse_config(argv)
    except UsageError as exc:
        print("usage error:", file=sys.stderr)
        for p in exc.problems:
            print(f"  {p}", file=sys.stderr)
        return 1
    try:
        rows = run_sweep(spec)
        emit = emit_json if spec.fmt == "json" else emit_csv
        text = emit(rows, spec.out, spec.metadata())
        if spec.out is None:
            sys.stdout.write(text)
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
