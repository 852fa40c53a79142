"""Scenario runner: config parsing, the case-study pipelines and result bundles."""
from __future__ import annotations

import configparser
import csv
import datetime as _dt
import hashlib
import io
import json
import math
import os
import traceback
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Mapping, Optional, Sequence

import numpy as np

from . import __version__, _kernels
from . import geometry as geo
from . import wavesolver as ws
from .genlin import (
    CausalClass, GenSymMatrix, GenVector, causal_type, index_of, inverse_cauchy_schwarz,
    ordered_eigenvalues,
)
from .gennum import (
    CSV_FIELDS, EpsGrid, GenNumber, GridError, OrderFit, Verdict, _fmt, _linfit, classify,
    estimate_order, verdict_row,
)

__all__ = [
    "ConfigError", "ScenarioConfig", "Check", "ResultBundle", "SCENARIOS",
    "load_config", "default_config", "run_scenario", "emit_csv", "emit_plotdata",
    "compare_runs", "DiffReport", "OUTPUT_ENV",
]

OUTPUT_ENV = "GENWAVE_OUT"
MANIFEST = "manifest.json"


class ConfigError(ValueError):
    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


# ---------------------------------------------------------------------------
# schema
# ---------------------------------------------------------------------------

def _parse_bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _parse_list(conv):
    def parse(s: str):
        items = [x.strip() for x in s.split(",") if x.strip()]
        if not items:
            raise ValueError("empty list")
        return tuple(conv(x) for x in items)
    return parse


_PARSERS = {
    "float": float, "int": int, "bool": _parse_bool, "str": str,
    "floats": _parse_list(float), "ints": _parse_list(int),
}


@dataclass(frozen=True)
class Param:
    kind: str
    default: object
    help: str = ""

    def parse(self, raw: str):
        return _PARSERS[self.kind](raw)


@dataclass(frozen=True)
class Scenario:
    name: str
    summary: str
    grid: tuple[float, float, int]
    params: Mapping[str, Param]
    runner: Callable


SCENARIOS: dict[str, Scenario] = {}


def _scenario(name: str, summary: str, grid: tuple[float, float, int], **params: Param):
    def deco(fn):
        SCENARIOS[name] = Scenario(name, summary, grid, params, fn)
        return fn
    return deco


@dataclass(frozen=True)
class ScenarioConfig:
    scenario: str
    grid: EpsGrid
    params: tuple[tuple[str, object], ...]
    seed: int = 0
    out_dir: Optional[str] = None

    def __getitem__(self, key):
        return dict(self.params)[key]

    def as_dict(self) -> dict:
        return {
            "scenario": self.scenario, "seed": self.seed,
            "grid": {"eps0": self.grid.eps0, "q": self.grid.q, "count": self.grid.count},
            "params": {k: list(v) if isinstance(v, tuple) else v for k, v in self.params},
        }


def _make_grid(values: Mapping[str, object], where: str) -> EpsGrid:
    try:
        return EpsGrid(float(values["eps0"]), float(values["q"]), int(values["count"]))
    except GridError as exc:
        raise ConfigError(where, str(exc)) from None


def _resolve(name: str, raw_params: Mapping[str, str], grid_raw: Mapping[str, str],
             seed: int, out_dir: Optional[str], grid_override=None) -> ScenarioConfig:
    if name not in SCENARIOS:
        raise ConfigError("scenario.name", f"unknown scenario {name!r}; "
                          f"choose from {', '.join(sorted(SCENARIOS))}")
    sc = SCENARIOS[name]
    values = {}
    for key, raw in raw_params.items():
        if key not in sc.params:
            raise ConfigError(f"params.{key}", f"unknown key for scenario {name!r}")
        try:
            values[key] = sc.params[key].parse(raw) if isinstance(raw, str) else raw
        except ValueError as exc:
            raise ConfigError(f"params.{key}", str(exc)) from None
    merged = tuple((k, values.get(k, p.default)) for k, p in sorted(sc.params.items()))
    g = dict(zip(("eps0", "q", "count"), sc.grid))
    for key, raw in grid_raw.items():
        if key not in g:
            raise ConfigError(f"grid.{key}", "unknown key (expected eps0, q, count)")
        try:
            g[key] = int(raw) if key == "count" else float(raw)
        except ValueError as exc:
            raise ConfigError(f"grid.{key}", str(exc)) from None
    if grid_override is not None:
        g = dict(zip(("eps0", "q", "count"), grid_override))
    return ScenarioConfig(name, _make_grid(g, "grid"), merged, int(seed), out_dir)


def default_config(name: str, seed: int = 0, grid: Optional[tuple] = None,
                   out_dir: Optional[str] = None, **params) -> ScenarioConfig:
    """Scenario defaults with optional parameter overrides (already typed)."""
    return _resolve(name, params, {}, seed, out_dir, grid)


def parse_grid_option(text: str) -> tuple[float, float, int]:
    parts = [p.strip() for p in text.split(",")]
    if len(parts) != 3:
        raise ConfigError("--grid", "expected eps0,q,J")
    try:
        return float(parts[0]), float(parts[1]), int(parts[2])
    except ValueError as exc:
        raise ConfigError("--grid", str(exc)) from None


def load_config(source, seed: Optional[int] = None,
                grid: Optional[tuple] = None) -> ScenarioConfig:
    """Read an INI config (path or text).  Sections: scenario, grid, params."""
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    text = Path(source).read_text(encoding="utf-8") if isinstance(source, Path) or (
        isinstance(source, str) and "\n" not in source and Path(source).exists()) else source
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError("config", str(exc).splitlines()[0]) from None
    for sec in cp.sections():
        if sec not in ("scenario", "grid", "params"):
            raise ConfigError(sec, "unknown section")
    if not cp.has_section("scenario") or "name" not in cp["scenario"]:
        raise ConfigError("scenario.name", "missing")
    head = dict(cp["scenario"])
    for key in head:
        if key not in ("name", "seed", "out"):
            raise ConfigError(f"scenario.{key}", "unknown key")
    try:
        cfg_seed = int(head.get("seed", "0"))
    except ValueError as exc:
        raise ConfigError("scenario.seed", str(exc)) from None
    params = dict(cp["params"]) if cp.has_section("params") else {}
    grid_raw = dict(cp["grid"]) if cp.has_section("grid") else {}
    return _resolve(head["name"].strip(), params, grid_raw,
                    cfg_seed if seed is None else seed, head.get("out"), grid)


def config_to_ini(cfg: ScenarioConfig) -> str:
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    cp["scenario"] = {"name": cfg.scenario, "seed": str(cfg.seed)}
    cp["grid"] = {"eps0": repr(cfg.grid.eps0), "q": repr(cfg.grid.q), "count": str(cfg.grid.count)}
    cp["params"] = {k: ",".join(map(str, v)) if isinstance(v, tuple) else str(v)
                    for k, v in cfg.params}
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()


# ---------------------------------------------------------------------------
# bundles
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Check:
    name: str
    value: float
    target: str
    passed: bool
    source: str

    def row(self) -> dict:
        return {"name": self.name, "value": _fmt(float(self.value)), "target": self.target,
                "passed": str(bool(self.passed)).lower(), "source": self.source}


CHECK_FIELDS = ("name", "value", "target", "passed", "source")


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def emit_csv(path: Path, fields: Sequence[str], rows: Iterable) -> Path:
    """UTF-8 CSV with a header row; rows are dicts or sequences."""
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(fields)
            for row in rows:
                if isinstance(row, Mapping):
                    row = [row.get(f, "") for f in fields]
                w.writerow([_fmt(float(v)) if isinstance(v, (float, np.floating)) else v
                            for v in row])
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc
    return path


def emit_plotdata(path: Path, curves: Mapping[str, tuple[Sequence[float], Sequence[float]]]) -> Path:
    """One figure: each curve as a two-column ``x y`` block headed by ``# name``."""
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", encoding="utf-8") as fh:
            for k, (name, (xs, ys)) in enumerate(curves.items()):
                if k:
                    fh.write("\n\n")
                fh.write(f"# {name}\n")
                for x, y in zip(xs, ys):
                    fh.write(f"{_fmt(float(x))} {_fmt(float(y))}\n")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc
    return path


def _read_plotdata(path: Path) -> dict[str, tuple[list[float], list[float]]]:
    curves, name = {}, None
    for line in path.read_text(encoding="utf-8").splitlines():
        if line.startswith("# "):
            name = line[2:]
            curves[name] = ([], [])
        elif line.strip():
            x, y = line.split()
            curves[name][0].append(float(x))
            curves[name][1].append(float(y))
    return curves


def render_svg(dat: Path, svg: Path, logx: bool = False, logy: bool = False):
    import matplotlib
    matplotlib.use("svg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(5, 3.5))
    for name, (xs, ys) in _read_plotdata(dat).items():
        ax.plot(xs, ys, marker="o", ms=3, label=name)
    if logx:
        ax.set_xscale("log")
    if logy:
        ax.set_yscale("log")
    ax.legend(fontsize=7)
    ax.set_title(dat.stem)
    fig.tight_layout()
    fig.savefig(svg, metadata={"Date": None})
    plt.close(fig)


class _Run:
    """Collects files and checks while a scenario executes."""

    def __init__(self, root: Path, cfg: ScenarioConfig, svg: bool):
        self.root = root
        self.cfg = cfg
        self.svg = svg
        self.files: list[str] = []
        self.checks: list[Check] = []
        self.fits: list[dict] = []
        self._plots: list[tuple[str, bool, bool]] = []

    def csv(self, name: str, fields: Sequence[str], rows: Iterable) -> str:
        emit_csv(self.root / name, fields, rows)
        self.files.append(name)
        return name

    def plot(self, figure: str, curves, logx=False, logy=False):
        name = f"plot_{figure}.dat"
        emit_plotdata(self.root / name, curves)
        self.files.append(name)
        self._plots.append((name, logx, logy))

    def fit(self, name: str, verdict=None, fit=None) -> str:
        """Record a row in fits.csv; returns the source tag for checks."""
        if verdict is not None:
            row = verdict_row(name, verdict)
            if fit is not None and not row["slope"]:
                row.update(slope=_fmt(fit.slope), r2=_fmt(fit.r_squared))
        else:
            row = {"name": name, "slope": _fmt(fit.slope), "r2": _fmt(fit.r_squared),
                   "verdict": "", "m_or_s": "", "window_lo": _fmt(fit.window[0]),
                   "window_hi": _fmt(fit.window[1]), "sign_changes": _fmt(fit.sign_changes)}
        self.fits.append(row)
        return f"fits.csv:{name}"

    def check(self, name: str, value: float, target: str, passed: bool, source: str):
        self.checks.append(Check(name, float(value), target, bool(passed), source))

    def finish(self):
        if self.fits:
            self.csv("fits.csv", CSV_FIELDS, self.fits)
        self.csv("checks.csv", CHECK_FIELDS, [c.row() for c in self.checks])
        if self.svg:
            for name, logx, logy in self._plots:
                svg = Path(name).with_suffix(".svg").name
                render_svg(self.root / name, self.root / svg, logx, logy)
                self.files.append(svg)


@dataclass
class ResultBundle:
    root: Path
    manifest: dict
    checks: list[Check] = field(default_factory=list)

    @property
    def status(self) -> str:
        return self.manifest["status"]

    @property
    def passed(self) -> bool:
        return self.status == "pass"

    def check(self, name: str) -> Check:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def read_csv(self, name: str) -> list[dict]:
        with (self.root / name).open(encoding="utf-8", newline="") as fh:
            return list(csv.DictReader(fh))

    @classmethod
    def load(cls, root) -> "ResultBundle":
        root = Path(root)
        path = root / MANIFEST
        if not path.exists():
            raise FileNotFoundError(f"no {MANIFEST} in {root}")
        manifest = json.loads(path.read_text(encoding="utf-8"))
        return cls(root, manifest, [Check(**c) for c in manifest.get("checks", [])])

    def verify(self) -> list[str]:
        """Files whose checksum no longer matches the manifest."""
        return [f["path"] for f in self.manifest["files"]
                if _sha256(self.root / f["path"]) != f["sha256"]]


def _output_root(cfg: ScenarioConfig, out: Optional[str]) -> Path:
    if out:
        return Path(out)
    if cfg.out_dir:
        return Path(cfg.out_dir)
    base = os.environ.get(OUTPUT_ENV) or "genwave-out"
    return Path(base) / cfg.scenario


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


def run_scenario(cfg: ScenarioConfig, out: Optional[str] = None, svg: bool = False) -> ResultBundle:
    """Run one scenario and write its bundle.

    Failures mid-run are recorded in the manifest; whatever was written
    before the failure stays in the bundle.
    """
    root = _output_root(cfg, out)
    try:
        root.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {root}: {exc}") from exc
    run = _Run(root, cfg, svg)
    started = _now()
    errors = []
    try:
        SCENARIOS[cfg.scenario].runner(run, cfg)
    except Exception as exc:  # recorded, partial results kept
        errors.append({"type": type(exc).__name__, "message": str(exc),
                       "trace": traceback.format_exc(limit=6)})
    try:
        run.finish()
    except Exception as exc:
        errors.append({"type": type(exc).__name__, "message": str(exc),
                       "trace": traceback.format_exc(limit=6)})
    if errors:
        status = "error"
    else:
        status = "pass" if all(c.passed for c in run.checks) else "fail"
    manifest = {
        "scenario": cfg.scenario,
        "config": cfg.as_dict(),
        "code_version": __version__,
        "backend": _kernels.BACKEND,
        "started": started,
        "finished": _now(),
        "status": status,
        "errors": errors,
        "files": [{"path": f, "sha256": _sha256(root / f), "bytes": (root / f).stat().st_size}
                  for f in run.files],
        "checks": [c.__dict__ for c in run.checks],
    }
    (root / MANIFEST).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n",
                                 encoding="utf-8")
    return ResultBundle(root, manifest, list(run.checks))


# ---------------------------------------------------------------------------
# comparison
# ---------------------------------------------------------------------------

@dataclass
class DiffReport:
    scenario: str
    rows: list[dict]

    @property
    def empty(self) -> bool:
        return not self.rows

    @property
    def flips(self) -> list[dict]:
        return [r for r in self.rows if r["flip"]]

    def max_slope_delta(self) -> float:
        deltas = [abs(r["delta"]) for r in self.rows
                  if r["kind"] == "fit" and r["delta"] is not None and math.isfinite(r["delta"])]
        return max(deltas, default=0.0)


def _num(s: str) -> Optional[float]:
    try:
        return float(s)
    except (TypeError, ValueError):
        return None


def compare_runs(a, b) -> DiffReport:
    """Slope and verdict differences between two bundles of one scenario."""
    ba = a if isinstance(a, ResultBundle) else ResultBundle.load(a)
    bb = b if isinstance(b, ResultBundle) else ResultBundle.load(b)
    if ba.manifest["scenario"] != bb.manifest["scenario"]:
        raise ValueError(f"scenario mismatch: {ba.manifest['scenario']} vs "
                         f"{bb.manifest['scenario']}")
    rows = []

    def table(bundle, name):
        return ({r["name"]: r for r in bundle.read_csv(name)}
                if (bundle.root / name).exists() else {})

    fa, fb = table(ba, "fits.csv"), table(bb, "fits.csv")
    for name in sorted(set(fa) | set(fb)):
        ra, rb = fa.get(name), fb.get(name)
        if ra is None or rb is None:
            rows.append({"kind": "fit", "name": name, "a": ra and ra["verdict"],
                         "b": rb and rb["verdict"], "delta": None, "flip": False,
                         "note": "only in " + ("b" if ra is None else "a")})
            continue
        sa, sb = _num(ra["slope"]), _num(rb["slope"])
        delta = None if sa is None or sb is None else sb - sa
        flip = ra["verdict"] != rb["verdict"]
        if flip or (delta is not None and delta != 0.0) or ra["slope"] != rb["slope"]:
            rows.append({"kind": "fit", "name": name, "a": ra["verdict"], "b": rb["verdict"],
                         "delta": delta, "flip": flip, "note": ""})
    ca = {c.name: c for c in ba.checks}
    cb = {c.name: c for c in bb.checks}
    for name in sorted(set(ca) | set(cb)):
        xa, xb = ca.get(name), cb.get(name)
        if xa is None or xb is None:
            rows.append({"kind": "check", "name": name, "a": xa and xa.passed,
                         "b": xb and xb.passed, "delta": None, "flip": False,
                         "note": "only in " + ("b" if xa is None else "a")})
            continue
        flip = xa.passed != xb.passed
        if flip or xa.value != xb.value:
            delta = xb.value - xa.value if math.isfinite(xa.value) and math.isfinite(xb.value) \
                else None
            rows.append({"kind": "check", "name": name, "a": xa.passed, "b": xb.passed,
                         "delta": delta, "flip": flip, "note": ""})
    return DiffReport(ba.manifest["scenario"], rows)


# ---------------------------------------------------------------------------
# scenarios
# ---------------------------------------------------------------------------

def _xi_row(label: str, res) -> dict:
    return {"metric": label, "log_coefficient": res.log_coefficient,
            "intercept": res.intercept, "bound_constant": res.bound_constant,
            "ratio_slope": res.ratio_slope, "passed": str(res.passed).lower(),
            "sup_at_eps_min": float(res.values.values[-1])}


_XI_FIELDS = ("metric", "log_coefficient", "intercept", "bound_constant", "ratio_slope",
              "passed", "sup_at_eps_min")


@_scenario(
    "flat-convergence", "leapfrog convergence and energy drift on flat 1+1 space",
    (1.0, 0.7, 16),
    cells=Param("ints", (64, 128, 256, 512), "refinement ladder"),
    theta=Param("float", 0.5, "CFL safety factor"),
    horizon=Param("float", 1.0, "final time"),
    mode=Param("int", 1, "wave number k of sin(2 pi k x) cos(2 pi k t)"),
    order_target=Param("float", 2.0),
    order_tol=Param("float", 0.2),
    error_tol=Param("float", 1e-3, "max error at the finest level"),
    energy_tol=Param("float", 1e-4, "relative energy drift at the finest level"),
)
def _flat(run: _Run, cfg: ScenarioConfig):
    k = cfg["mode"]
    w = 2 * math.pi * k
    chart = geo.Chart(((0.0, 1.0),), (16,), (True,), t_range=(0.0, cfg["horizon"]))
    metric = geo.make_minkowski(1, chart)
    ivp = ws.IVPSpec(lambda x: np.sin(w * x[:, 0]))
    eps = cfg.grid.eps0
    rows, hs, errs, last = [], [], [], None
    for n in cfg["cells"]:
        sg = ws.SolveGrid((n,), cfg["horizon"], theta=cfg["theta"])
        fr = ws.solve_fixed_eps(metric, eps, ivp, sg)
        # max over all time levels: at t = 1 the standing wave peaks and the
        # phase error only enters at fourth order
        exact = np.sin(w * fr.axes[0])[None, :] * np.cos(w * fr.t)[:, None]
        err = float(np.max(np.abs(fr.u - exact)))
        tr = ws.energy_trace(fr, metric)
        rows.append({"cells": n, "h": 1.0 / n, "dt": fr.dt, "steps": fr.meta["steps"],
                     "max_error": err, "energy_drift": tr.drift})
        hs.append(1.0 / n)
        errs.append(err)
        last = (fr, tr)
    run.csv("convergence.csv", ("cells", "h", "dt", "steps", "max_error", "energy_drift"), rows)
    slope, intercept, r2 = _linfit(np.log(hs), np.log(errs))
    fit = _plain_fit(slope, intercept, r2, len(hs))
    src = run.fit("convergence_order", fit=fit)
    run.check("convergence_order", slope,
              f"{cfg['order_target']} +- {cfg['order_tol']}",
              abs(slope - cfg["order_target"]) <= cfg["order_tol"], src)
    run.check("max_error_finest", errs[-1], f"<= {cfg['error_tol']:g}",
              errs[-1] <= cfg["error_tol"], "convergence.csv:max_error")
    fr, tr = last
    run.check("energy_drift_finest", tr.drift, f"<= {cfg['energy_tol']:g}",
              tr.drift <= cfg["energy_tol"], "convergence.csv:energy_drift")
    run.csv("energy.csv", ("t", "E"), zip(tr.t, tr.energy))
    run.plot("error", {"max_error": (hs, errs)}, logx=True, logy=True)
    run.plot("energy", {f"E (cells={cfg['cells'][-1]})": (tr.t, tr.energy)})

    xi = geo.VectorFieldSpec.coordinate(0, 2, normalize=True)
    res = geo.xi_covariant_growth(metric, xi, cfg.grid)
    run.csv("xi_growth.csv", _XI_FIELDS, [_xi_row("minkowski", res)])
    run.check("xi_growth_minkowski", float(np.max(res.values.values)), "G == 0",
              res.passed and float(np.max(res.values.values)) == 0.0, "xi_growth.csv:minkowski")


def _plain_fit(slope, intercept, r2, n):
    return OrderFit(slope, intercept, r2, (0, n), 0, ())


@_scenario(
    "cone", "mollified 2+1 cone: validity, derivative growth, solutions, area deficit",
    (0.25, 0.8, 8),
    alpha=Param("float", 0.5, "angular deficit factor"),
    half_width=Param("float", 2.5, "spatial box is [-w, w]^2"),
    cells=Param("int", 256, "cells per axis for the solves"),
    horizon=Param("float", 0.5),
    theta=Param("float", 0.5),
    ring_radius=Param("float", 1.0, "radius of the initial ring"),
    ring_width=Param("float", 0.25),
    k_max=Param("int", 3, "highest derivative order checked"),
    growth_tol=Param("float", 0.25),
    area_factor=Param("float", 8.0, "disk radius R = area_factor * eps0"),
    area_tol=Param("float", 0.02),
    store_every=Param("int", 20),
    workers=Param("int", 1, "parallel solves across eps"),
)
def _cone(run: _Run, cfg: ScenarioConfig):
    alpha = cfg["alpha"]
    grid = cfg.grid
    metric = geo.make_mollified_cone(alpha, half_width=cfg["half_width"],
                                     t_range=(0.0, cfg["horizon"]))
    val = geo.verify_generalized_metric(metric, grid)
    det_verdict = classify(val.det_net)
    src = run.fit("min|det g|", det_verdict, estimate_order(val.det_net)
                  if np.all(val.det_net.values > 0) else None)
    run.csv("validity.csv", ("symmetric", "det_invertible", "indices", "index", "passed"),
            [{"symmetric": str(val.symmetric).lower(), "det_invertible": val.det_invertible.value,
              "indices": " ".join(map(str, val.indices)), "index": val.index,
              "passed": str(val.passed).lower()}])
    run.check("metric_validity", float(val.index if val.index is not None else -1),
              "det invertible, index == 1", val.passed and val.index == 1, src)

    growth = geo.derivative_growth_orders(metric, grid, k_max=cfg["k_max"],
                                          tolerance=cfg["growth_tol"])
    grows = []
    for e in growth:
        name = f"D{e.k}({e.which})"
        if e.fit is not None:
            run.fit(name, fit=e.fit)
        grows.append({"k": e.k, "which": e.which, "slope": e.slope, "bound": e.bound,
                      "passed": str(e.passed).lower()})
        run.check(f"growth_{e.which}_k{e.k}", e.slope, f">= {-e.k - cfg['growth_tol']:g}",
                  e.passed, f"fits.csv:{name}")
    run.csv("growth.csv", ("k", "which", "slope", "bound", "passed"), grows)

    r0, wd = cfg["ring_radius"], cfg["ring_width"]
    ivp = ws.IVPSpec(lambda x: np.exp(-((np.hypot(x[:, 0], x[:, 1]) - r0) / wd) ** 2))
    sg = ws.SolveGrid((cfg["cells"],) * 2, cfg["horizon"], theta=cfg["theta"],
                      store_every=cfg["store_every"])
    net = ws.solve_net(metric, grid, ivp, sg, workers=cfg["workers"], keep_frames=False)
    run.csv("solution.csv", ("eps", "sup_norm", "E0", "ET", "status"), net.rows())
    order = float("nan")
    if net.ok:
        fit = estimate_order(GenNumber(grid, net.sup_norm))
        order = fit.slope
        src = run.fit("sup|u|", net.verdict, fit)
    else:
        src = run.fit("sup|u|", net.verdict)
    run.check("solution_moderate", order, "Moderate (finite order)",
              net.ok and net.verdict.is_moderate, src)
    run.plot("sup_norm", {"sup|u|": (grid.samples, net.sup_norm)}, logx=True)

    radius = cfg["area_factor"] * grid.eps0
    target = alpha * math.pi * radius ** 2
    areas = [geo.disk_area(metric, eps, radius) for eps in grid.samples]
    rel = [abs(a - target) / target for a in areas]
    run.csv("area.csv", ("eps", "radius", "area", "target", "rel_error"),
            [(e, radius, a, target, r) for e, a, r in zip(grid.samples, areas, rel)])
    run.check("disk_area_deficit", max(rel), f"<= {cfg['area_tol']:g}",
              max(rel) <= cfg["area_tol"], "area.csv:rel_error")


@_scenario(
    "collapse", "flat torus with a collapsing circle: volume, curvature, injectivity, xi growth",
    (1.0, 0.7, 16),
    p=Param("float", 1.0, "collapse exponent"),
    counts=Param("int", 16, "sample lattice per axis"),
    quad_points=Param("int", 32),
    volume_tol=Param("float", 0.05),
    curvature_tol=Param("float", 1e-8),
    injectivity_tol=Param("float", 0.05),
    log_coeff=Param("float", 1.0, "c in h = 1 + c eps log(1/eps) sin(x/eps)"),
    log_eps0=Param("float", 1e-3),
    log_q=Param("float", 0.5),
    log_count=Param("int", 16),
    log_tol=Param("float", 0.2, "relative tolerance on the log coefficient"),
    solve=Param("bool", True, "also evolve data and report feasibility per eps"),
    solve_cells=Param("int", 16),
    solve_horizon=Param("float", 0.25),
    max_work=Param("float", 5e7, "cells x steps budget per solve"),
    theta=Param("float", 0.5),
)
def _collapse(run: _Run, cfg: ScenarioConfig):
    p = cfg["p"]
    grid = cfg.grid
    metric = geo.make_collapsing_torus(p, counts=cfg["counts"])
    rep = geo.volume_and_curvature_asymptotics(metric, grid, quad_points=cfg["quad_points"])
    run.csv("collapse.csv", ("eps", "volume", "curvature_sup", "injectivity"),
            zip(grid.samples, rep.volume.values, rep.curvature, rep.injectivity.values))
    src = run.fit("volume", fit=rep.volume_fit)
    run.check("volume_slope", rep.volume_fit.slope, f"{p:g} +- {cfg['volume_tol']:g}",
              abs(rep.volume_fit.slope - p) <= cfg["volume_tol"], src)
    run.check("curvature_sup", float(np.max(rep.curvature)), f"<= {cfg['curvature_tol']:g}",
              bool(np.all(rep.curvature <= cfg["curvature_tol"])), "collapse.csv:curvature_sup")
    src = run.fit("injectivity", fit=rep.injectivity_fit)
    run.check("injectivity_slope", rep.injectivity_fit.slope,
              f"{p:g} +- {cfg['injectivity_tol']:g}",
              abs(rep.injectivity_fit.slope - p) <= cfg["injectivity_tol"], src)
    run.plot("volume", {"vol": (grid.samples, rep.volume.values),
                        "injectivity": (grid.samples, rep.injectivity.values)},
             logx=True, logy=True)

    xi_rows = []
    torus_xi = geo.xi_covariant_growth(metric, geo.VectorFieldSpec.coordinate(0, 4), grid)
    xi_rows.append(_xi_row("collapsing-torus", torus_xi))
    gmax = float(np.max(torus_xi.values.values))
    run.check("xi_growth_torus", gmax, "G == 0", torus_xi.passed and gmax == 0.0,
              "xi_growth.csv:collapsing-torus")
    c = cfg["log_coeff"]
    log_grid = EpsGrid(cfg["log_eps0"], cfg["log_q"], cfg["log_count"])
    log_metric = geo.make_log_growth_metric(c)
    log_xi = geo.xi_covariant_growth(log_metric, geo.VectorFieldSpec.coordinate(1, 2, False),
                                     log_grid)
    xi_rows.append(_xi_row("log-growth", log_xi))
    expected = 0.5 * c
    relerr = abs(log_xi.log_coefficient - expected) / abs(expected)
    run.csv("xi_growth.csv", _XI_FIELDS, xi_rows)
    run.check("xi_growth_log", log_xi.log_coefficient,
              f"{expected:g} within {cfg['log_tol']:.0%}, ratio slope >= -0.1",
              log_xi.passed and relerr <= cfg["log_tol"], "xi_growth.csv:log-growth")
    run.plot("xi_growth", {"log-growth": (-np.log(log_grid.samples), log_xi.values.values)})

    if cfg["solve"]:
        ivp = ws.IVPSpec(lambda x: np.sin(x[:, 0]) + np.cos(x[:, 2]))
        sg = ws.SolveGrid((cfg["solve_cells"],) * 3, cfg["solve_horizon"], theta=cfg["theta"],
                          store_every=10 ** 9, max_work=cfg["max_work"])
        net = ws.solve_net(metric, grid, ivp, sg, keep_frames=False)
        run.csv("solution.csv", ("eps", "sup_norm", "E0", "ET", "status"), net.rows())
        run.fit("sup|u|", net.verdict)


def _rough_map(alpha_h: float, amp: float, t_star: float) -> ws.CoordinateMap:
    from .mollify import kinks_at

    def tau(t):
        return t + amp * abs(t - t_star) ** (1.0 + alpha_h)

    return ws.CoordinateMap((ws.MapProfile(tau, kinks_at(t_star)), ws.MapProfile.identity()))


def _smooth_map(amp: float) -> ws.CoordinateMap:
    def tau(t):
        return t + amp * math.sin(2 * math.pi * t) / (2 * math.pi)

    return ws.CoordinateMap((ws.MapProfile(tau), ws.MapProfile.identity()))


@_scenario(
    "hoelder-pullback", "Hoelder-regular conformal metric and pulled-back d'Alembert solutions",
    (1.0, 0.7, 16),
    alpha_h=Param("float", 0.5, "Hoelder exponent"),
    rough_amplitude=Param("float", 0.5, "c in tau(t) = t + c |t - t*|^(1 + alpha_h)"),
    t_star=Param("float", 0.5),
    smooth_amplitude=Param("float", 0.1, "c in tau(t) = t + c sin(2 pi t) / (2 pi)"),
    residual_eps=Param("float", 0.1),
    residual_cells=Param("ints", (32, 64, 128)),
    residual_horizon=Param("float", 0.5),
    residual_target=Param("float", 2.0),
    residual_tol=Param("float", 0.3),
    second_tol=Param("float", 0.1),
    order_tol=Param("float", 0.1, "|order| bound for Moderate(0)"),
    sample_cells=Param("int", 64),
    sample_times=Param("int", 33),
    a0=Param("float", 1.0, "lower bound of the coefficient"),
    omega=Param("float", 2 * math.pi),
    solve=Param("bool", True, "evolve on the regularized Hoelder metric"),
    solve_cells=Param("int", 128),
    horizon=Param("float", 0.5),
    theta=Param("float", 0.5),
    workers=Param("int", 1),
)
def _hoelder(run: _Run, cfg: ScenarioConfig):
    grid = cfg.grid
    a_h = cfg["alpha_h"]
    profile = lambda s: np.sin(2 * math.pi * s)  # noqa: E731
    zero = lambda s: 0.0 * s  # noqa: E731

    smooth = _smooth_map(cfg["smooth_amplitude"])
    chart = geo.Chart(((0.0, 1.0),), (16,), (True,), t_range=(0.0, cfg["residual_horizon"]))
    pm = ws.conformal_pullback_metric(smooth, chart)
    eps = cfg["residual_eps"]
    phi_eps = ws.mollify_map(smooth, eps)
    hs, res = [], []
    for n in cfg["residual_cells"]:
        fr = ws.pullback_solution(phi_eps, profile, zero, chart, n,
                                  int(round(n * cfg["residual_horizon"])) + 1)
        hs.append(1.0 / n)
        res.append(ws.residual_check(pm, eps, fr))
    run.csv("residual.csv", ("cells", "h", "residual"), zip(cfg["residual_cells"], hs, res))
    slope, intercept, r2 = _linfit(np.log(hs), np.log(res))
    src = run.fit("pullback_residual", fit=_plain_fit(slope, intercept, r2, len(hs)))
    run.check("pullback_residual_order", slope,
              f"{cfg['residual_target']:g} +- {cfg['residual_tol']:g}",
              abs(slope - cfg["residual_target"]) <= cfg["residual_tol"], src)
    run.plot("residual", {"smooth map": (hs, res)}, logx=True, logy=True)

    rough = _rough_map(a_h, cfg["rough_amplitude"], cfg["t_star"])
    t_star = cfg["t_star"]
    second = ws.map_derivative_net(rough, grid, 0, 2,
                                   lambda e: t_star + e * np.linspace(-1.0, 1.0, 41))
    fit = estimate_order(second)
    src = run.fit("sup|d2 Phi|", classify(second), fit)
    run.check("second_derivative_order", fit.slope, f"{a_h - 1:g} +- {cfg['second_tol']:g}",
              abs(fit.slope - (a_h - 1)) <= cfg["second_tol"], src)

    rchart = geo.Chart(((0.0, 1.0),), (16,), (True,), t_range=(0.0, 1.0))
    sups = []
    for e in grid.samples:
        fr = ws.pullback_solution(ws.mollify_map(rough, e), profile, zero, rchart,
                                  cfg["sample_cells"], cfg["sample_times"])
        sups.append(fr.sup_norm())
    sup_net = GenNumber(grid, np.array(sups), name="sup|u_eps|")
    verdict = classify(sup_net)
    fit = estimate_order(sup_net)
    src = run.fit("sup|u o Phi|", verdict, fit)
    run.csv("pullback_sup.csv", ("eps", "sup_norm", "sup_d2_phi"),
            zip(grid.samples, sups, second.values))
    run.check("pullback_moderate_zero", fit.slope, f"Moderate, |order| <= {cfg['order_tol']:g}",
              verdict.is_moderate and abs(fit.slope) <= cfg["order_tol"], src)
    run.plot("pullback", {"sup|u|": (grid.samples, sups),
                          "sup|d2 Phi|": (grid.samples, second.values)}, logx=True, logy=True)

    if cfg["solve"]:
        coef = geo.HolderCoefficient.oscillatory(cfg["a0"], a_h, cfg["omega"])
        metric = geo.make_holder_conformal(coef, a_h, t_range=(0.0, cfg["horizon"]))
        ivp = ws.IVPSpec(lambda x: np.sin(2 * math.pi * x[:, 0]))
        sg = ws.SolveGrid((cfg["solve_cells"],), cfg["horizon"], theta=cfg["theta"],
                          store_every=8)
        net = ws.solve_net(metric, grid, ivp, sg, workers=cfg["workers"], keep_frames=False)
        run.csv("solution.csv", ("eps", "sup_norm", "E0", "ET", "status"), net.rows())
        order = estimate_order(GenNumber(grid, net.sup_norm)).slope if net.ok else float("nan")
        src = run.fit("sup|u| (hoelder metric)", net.verdict)
        run.check("hoelder_solution_moderate", order, "Moderate",
                  net.ok and net.verdict.is_moderate, src)


def _power(c, a):
    return lambda e: c * np.asarray(e, dtype=float) ** a


@_scenario(
    "algebra-suite", "generalized numbers, index calculus, causality and inverse Cauchy-Schwarz",
    (1.0, 0.7, 16),
    exponents=Param("floats", (-3.0, -1.5, 0.0, 2.0)),
    coefficients=Param("floats", (0.1, 1.0, 10.0)),
    slope_tol=Param("float", 0.05),
    trace_tol=Param("float", 1e-9),
    ics_pairs=Param("int", 1000),
    ics_tol=Param("float", 1e-10),
    ics_dim=Param("int", 4),
)
def _algebra(run: _Run, cfg: ScenarioConfig):
    grid = cfg.grid
    worst = 0.0
    for a in cfg["exponents"]:
        for c in cfg["coefficients"]:
            x = GenNumber.from_function(grid, _power(c, a), name=f"{c:g}*eps^{a:g}")
            v = classify(x)
            fit = estimate_order(x)
            run.fit(f"{c:g}*eps^{a:g}", v, fit)
            worst = max(worst, abs(fit.slope - a))
    run.check("power_law_slopes", worst, f"<= {cfg['slope_tol']:g}", worst <= cfg["slope_tol"],
              "fits.csv:c*eps^a")
    neg = GenNumber.from_function(grid, lambda e: np.exp(-1.0 / np.asarray(e)))
    v = classify(neg)
    src = run.fit("exp(-1/eps)", v)
    run.check("exp_negligible", float(v.kind is Verdict.NEGLIGIBLE), "Negligible",
              v.kind is Verdict.NEGLIGIBLE, src)
    osc = GenNumber.from_function(grid, lambda e: np.sin(1.0 / np.asarray(e)))
    v = classify(osc)
    src = run.fit("sin(1/eps)", v)
    run.check("sin_indeterminate", float(v.kind is Verdict.INDETERMINATE), "Indeterminate",
              v.kind is Verdict.INDETERMINATE, src)

    forms = {
        "minkowski-3+1": (GenSymMatrix.constant(grid, np.diag([-1.0, 1, 1, 1])), 1),
        "diag(eps,1)": (GenSymMatrix.diag(grid, [lambda e: np.asarray(e, float), 1.0]), 0),
        "diag(eps sin(1/eps),1)": (GenSymMatrix.diag(
            grid, [lambda e: np.asarray(e) * np.sin(1.0 / np.asarray(e)), 1.0]), None),
    }
    rows = []
    trace_err = 0.0
    for name, (form, expected) in forms.items():
        iv = index_of(form)
        rows.append({"name": name, "verdict": str(iv), "index": "" if iv.index is None
                     else iv.index, "expected": "" if expected is None else expected,
                     "reason": iv.reason})
        run.check(f"index_{name}", -1.0 if iv.index is None else float(iv.index),
                  "Indeterminate" if expected is None else f"Index({expected})",
                  iv.index == expected, f"index.csv:{name}")
        eigs = np.stack([lam.values for lam in ordered_eigenvalues(form)], axis=1)
        tr_scale = np.maximum(np.abs(form.trace()), 1.0)
        det_scale = np.maximum(np.abs(form.det()), 1.0)
        trace_err = max(trace_err,
                        float(np.max(np.abs(eigs.sum(axis=1) - form.trace()) / tr_scale)),
                        float(np.max(np.abs(np.prod(eigs, axis=1) - form.det()) / det_scale)))
    run.csv("index.csv", ("name", "verdict", "index", "expected", "reason"), rows)
    run.check("trace_det_consistency", trace_err, f"<= {cfg['trace_tol']:g}",
              trace_err <= cfg["trace_tol"], "index.csv")

    mink3 = GenSymMatrix.constant(grid, np.diag([-1.0, 1.0, 1.0]))
    wit = GenVector.from_entries(grid, [1.0, lambda e: 1.0 + np.asarray(e) * np.sin(1.0 / np.asarray(e)), 0.0])
    ct = causal_type(mink3, wit)
    run.csv("causal.csv", ("name", "causal_type"), [("(1, 1 + eps sin(1/eps), 0)", ct.value)])
    run.check("non_trichotomy_witness", float(ct is CausalClass.NONE), "None",
              ct is CausalClass.NONE, "causal.csv:(1, 1 + eps sin(1/eps), 0)")

    rng = np.random.default_rng(cfg.seed)
    n, dim = cfg["ics_pairs"], cfg["ics_dim"]
    ics_rows, violations, worst_rel, resampled = [], 0, math.inf, 0
    for i in range(n):
        diag_c = rng.uniform(0.5, 2.0, dim)
        diag_k = rng.integers(0, 3, dim)
        entries = [_power(-diag_c[0], diag_k[0])] + \
                  [_power(diag_c[j], diag_k[j]) for j in range(1, dim)]
        form = GenSymMatrix.diag(grid, entries)
        vecs = []
        while len(vecs) < 2:
            vec = _random_timelike(rng, grid, diag_c, diag_k)
            if causal_type(form, vec) is CausalClass.TIMELIKE:
                vecs.append(vec)
            else:
                resampled += 1
        rep = inverse_cauchy_schwarz(form, vecs[0], vecs[1], tol=cfg["ics_tol"])
        violations += not rep.passed
        worst_rel = min(worst_rel, rep.worst_relative)
        ics_rows.append((i, rep.worst_relative, rep.verdict.kind.value,
                         str(rep.passed).lower()))
    run.csv("ics.csv", ("pair", "worst_relative", "verdict", "passed"), ics_rows)
    run.check("inverse_cauchy_schwarz", float(violations), "0 violations",
              violations == 0, "ics.csv:passed")


def _random_timelike(rng, grid, diag_c, diag_k) -> GenVector:
    """Spatial part c_j eps^m_j, time part chosen so ``b(v, v) < 0`` by a margin."""
    dim = len(diag_c)
    sc = rng.normal(size=dim - 1)
    sm = rng.integers(0, 2, dim - 1)
    delta = rng.uniform(0.1, 1.0)
    sign = rng.choice([-1.0, 1.0])

    def spatial(e, j):
        return sc[j] * np.asarray(e, dtype=float) ** sm[j]

    def timec(e):
        e = np.asarray(e, dtype=float)
        s = sum(diag_c[j + 1] * e ** diag_k[j + 1] * spatial(e, j) ** 2 for j in range(dim - 1))
        s = s + e ** 0 * 1e-2 * diag_c[0] * e ** diag_k[0]
        return sign * (1.0 + delta) * np.sqrt(s / (diag_c[0] * e ** diag_k[0]))

    entries = [timec] + [lambda e, j=j: spatial(e, j) for j in range(dim - 1)]
    return GenVector.from_entries(grid, entries)
