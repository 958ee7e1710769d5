"""Command-line front end: configuration, persistence, and verification runs.

Subcommands:

* ``bulk-invariants``: weak Chern vector of the bulk model (both routes).
* ``dislocation-spectrum``: kz sweep with spectra CSV and the three
  dislocation index estimators.
* ``predict``: the symbolic dislocation index from the weak vector and the
  Burgers frame.
* ``verify``: full pipeline; exit code 0 iff prediction and all measured
  estimators agree.
* ``lift-test``: randomized norm-bound and multiplicativity trials for the
  kernel lift.

Runs are keyed by a 64-bit FNV-1a hash of the canonicalized configuration;
re-running an identical configuration returns the cached report bytes.
Exit codes: 0 success/agreement, 1 disagreement, 2 numerical failure,
3 configuration error.
"""

from __future__ import annotations

import argparse
import json
import os
import shutil
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .coarselift import multiplicativity_defect, norm_bound_check, random_kernel
from .dislocation import dislocation_run
from .errors import (
    BranchMatchingError,
    ConfigError,
    ConvergenceError,
    GapClosedError,
    ScrewtbError,
)
from .invariants import chern_lattice, chern_weil
from .kalgebra import boundary_map, even_class
from .lattice import LatticeError, _int_inverse_3x3, build_lattice, burgers_frame
from .models import (
    HoppingModel,
    ModelError,
    builtin_model,
    model_from_json_dict,
    transform_model,
)

__all__ = ["main", "RunConfig", "InvariantReport", "fnv1a_64", "config_hash"]

SPECTRA_CSV_HEADER = "kz,state_index,energy,core_weight"

_DEFAULTS = {
    "model": None,
    "lattice": {
        "half_width": 12,
        "boundary": "open-single-core",
        "separation": None,
        "core_radius": 0.0,
        "burgers": [0, 0, 1],
    },
    "numerics": {
        "kz_count": 64,
        "grid": 32,
        "mu": 0.0,
        "rho": 5.0,
        "epsilon": None,
        "delta_halfwidth": None,
        "weight_threshold": 0.5,
        "disorder_strength": None,
        "seed": 0,
        "core_removal": 0.0,
        "threads": 1,
    },
    "lift_test": {
        "half_width": 14,
        "trials": 100,
        "max_propagation": 2,
        "kz": 0.9,
        "seed": 0,
    },
    "output": {"directory": "out", "formats": ["json", "csv"]},
}


def fnv1a_64(data: bytes) -> int:
    """64-bit FNV-1a hash."""
    h = 0xCBF29CE484222325
    for b in data:
        h ^= b
        h = (h * 0x100000001B3) & 0xFFFFFFFFFFFFFFFF
    return h


def _canonical_json(doc) -> str:
    return json.dumps(doc, sort_keys=True, separators=(",", ":"))


def config_hash(doc) -> str:
    return f"{fnv1a_64(_canonical_json(doc).encode('utf-8')):016x}"


def _merge(defaults, override, path=""):
    if override is None:
        return defaults
    if isinstance(defaults, dict):
        if not isinstance(override, dict):
            raise ConfigError(path or "<root>", f"expected an object, got {type(override).__name__}")
        out = dict(defaults)
        for key, value in override.items():
            sub = f"{path}.{key}" if path else key
            if key in defaults and isinstance(defaults[key], dict) and defaults[key]:
                out[key] = _merge(defaults[key], value, sub)
            else:
                out[key] = value
        return out
    return override


@dataclass
class RunConfig:
    """Validated run configuration with derived model and lattice builders."""

    doc: dict
    hash: str = field(init=False)

    def __post_init__(self):
        self.hash = config_hash(self.doc)

    @classmethod
    def load(cls, config_path: str | None, overrides: dict | None = None) -> "RunConfig":
        doc = {}
        if config_path is not None:
            p = Path(config_path)
            if not p.exists():
                raise ConfigError("config", f"file not found: {config_path}")
            try:
                doc = json.loads(p.read_text())
            except json.JSONDecodeError as exc:
                raise ConfigError("config", f"malformed JSON: {exc}") from exc
        merged = _merge(_DEFAULTS, doc)
        for key, value in (overrides or {}).items():
            section, name = key.split(".", 1)
            merged[section][name] = value
        cfg = cls(doc=merged)
        cfg.validate()
        return cfg

    def _num(self, section, name, kind, minimum=None, optional=False):
        value = self.doc[section].get(name)
        if value is None:
            if optional:
                return None
            raise ConfigError(f"{section}.{name}", "missing value")
        if kind is int and isinstance(value, bool):
            raise ConfigError(f"{section}.{name}", "expected a number")
        if kind is int and not isinstance(value, int):
            raise ConfigError(f"{section}.{name}", f"expected an integer, got {value!r}")
        if kind is float and not isinstance(value, (int, float)):
            raise ConfigError(f"{section}.{name}", f"expected a number, got {value!r}")
        value = kind(value)
        if minimum is not None and value < minimum:
            raise ConfigError(f"{section}.{name}", f"must be >= {minimum}")
        return value

    def validate(self):
        lat = self.doc.get("lattice")
        if not isinstance(lat, dict):
            raise ConfigError("lattice", "expected an object")
        self._num("lattice", "half_width", int, 2)
        if lat.get("boundary") not in ("open-single-core", "torus-dipole"):
            raise ConfigError("lattice.boundary", f"unknown boundary {lat.get('boundary')!r}")
        self._num("lattice", "core_radius", float, 0.0)
        b = lat.get("burgers")
        if not (isinstance(b, list) and len(b) == 3 and all(isinstance(c, int) for c in b)):
            raise ConfigError("lattice.burgers", "expected an integer 3-vector")
        self._num("numerics", "kz_count", int, 16)
        self._num("numerics", "grid", int, 4)
        self._num("numerics", "mu", float)
        self._num("numerics", "rho", float, 0.0)
        self._num("numerics", "weight_threshold", float, 0.0)
        self._num("numerics", "seed", int)
        self._num("numerics", "core_removal", float, 0.0)
        self._num("numerics", "threads", int, 1)
        self._num("numerics", "disorder_strength", float, 0.0, optional=True)
        self._num("numerics", "epsilon", float, 0.0, optional=True)
        self._num("numerics", "delta_halfwidth", float, 0.0, optional=True)
        out = self.doc.get("output")
        if not isinstance(out, dict) or not isinstance(out.get("directory"), str):
            raise ConfigError("output.directory", "expected a path string")

    # -- derived objects ---------------------------------------------------

    def model(self) -> HoppingModel:
        entry = self.doc.get("model")
        if entry is None:
            raise ConfigError("model", "missing model section")
        if "file" in entry:
            p = Path(entry["file"])
            if not p.exists():
                raise ConfigError("model.file", f"file not found: {entry['file']}")
            model = model_from_json_dict(json.loads(p.read_text()))
        elif "name" in entry:
            params = entry.get("params", {})
            if not isinstance(params, dict):
                raise ConfigError("model.params", "expected an object")
            try:
                model = builtin_model(entry["name"], **params)
            except TypeError as exc:
                raise ConfigError("model.params", str(exc)) from exc
        else:
            raise ConfigError("model", "need either 'name' or 'file'")
        w = self.doc["numerics"].get("disorder_strength")
        if w is not None:
            model = HoppingModel(
                orbitals=model.orbitals,
                hops=model.hops,
                disorder_strength=float(w),
                disorder_seed=int(self.doc["numerics"]["seed"]),
            )
        return model

    def lattice(self):
        lat = self.doc["lattice"]
        try:
            return build_lattice(
                half_width=lat["half_width"],
                boundary=lat["boundary"],
                core_radius=lat["core_radius"],
                separation=lat.get("separation"),
            )
        except LatticeError as exc:
            raise ConfigError("lattice", str(exc)) from exc

    def frame(self):
        try:
            return burgers_frame(tuple(self.doc["lattice"]["burgers"]))
        except LatticeError as exc:
            raise ConfigError("lattice.burgers", str(exc)) from exc

    def out_dir(self) -> Path:
        return Path(self.doc["output"]["directory"])


@dataclass
class InvariantReport:
    """The verification record: bulk invariants, prediction, measurements."""

    config_hash: str
    version: str
    seed: int
    weak_vector: list | None = None
    predicted_index: int | None = None
    spectral_flow: int | None = None
    per_core_flows: list | None = None
    total_unfiltered_flow: int | None = None
    localized_winding: float | None = None
    sigma_screw: float | None = None
    gap_window: list | None = None
    agreement: bool | None = None
    timings: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "config_hash": self.config_hash,
            "version": self.version,
            "seed": self.seed,
            "weak_vector": self.weak_vector,
            "predicted_index": self.predicted_index,
            "spectral_flow": self.spectral_flow,
            "per_core_flows": self.per_core_flows,
            "total_unfiltered_flow": self.total_unfiltered_flow,
            "localized_winding": self.localized_winding,
            "sigma_screw": self.sigma_screw,
            "gap_window": self.gap_window,
            "agreement": self.agreement,
            "timings": self.timings,
        }


def compute_agreement(report: InvariantReport) -> bool:
    """Prediction equals the flow and both real estimators sit within 0.1."""
    if report.predicted_index is None or report.spectral_flow is None:
        return False
    ok = report.predicted_index == report.spectral_flow
    for value in (report.localized_winding, report.sigma_screw):
        if value is None or abs(value - report.spectral_flow) >= 0.1:
            ok = False
    return ok


class _OutputLock:
    """One run at a time per output directory."""

    def __init__(self, directory: Path):
        self.path = directory / ".lock"

    def __enter__(self):
        self.path.parent.mkdir(parents=True, exist_ok=True)
        try:
            fd = os.open(self.path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError:
            raise ConfigError(
                "output.directory", f"locked by another run ({self.path})"
            ) from None
        with os.fdopen(fd, "w") as fh:
            fh.write(str(os.getpid()))
        return self

    def __exit__(self, *exc):
        try:
            self.path.unlink()
        except FileNotFoundError:
            pass
        return False


def _cache_dir(cfg: RunConfig, command: str) -> Path:
    return cfg.out_dir() / "cache" / cfg.hash / command


def _publish(cache: Path, out: Path):
    for item in cache.iterdir():
        shutil.copy2(item, out / item.name)


def _run_cached(cfg: RunConfig, command: str, producer) -> tuple[dict, bool]:
    """Produce (or fetch) the report for a config; returns (report, from_cache)."""
    out = cfg.out_dir()
    out.mkdir(parents=True, exist_ok=True)
    cache = _cache_dir(cfg, command)
    report_file = cache / "report.json"
    with _OutputLock(out):
        if report_file.exists():
            _publish(cache, out)
            return json.loads(report_file.read_text()), True
        cache.mkdir(parents=True, exist_ok=True)
        report = producer(cfg, cache)
        report_file.write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
        _publish(cache, out)
        return report, False


def _model_for_dislocation(cfg: RunConfig):
    """The bulk model expressed in the Burgers-adapted frame."""
    model = cfg.model()
    frame = cfg.frame()
    if not frame.is_standard():
        model = transform_model(model, _int_inverse_3x3(frame.matrix))
    return model, frame


def _weak_vector_results(cfg: RunConfig):
    model = cfg.model()
    mu = cfg.doc["numerics"]["mu"]
    grid = cfg.doc["numerics"]["grid"]
    rows = []
    vec = []
    for plane in ("yz", "zx", "xy"):
        latt = chern_lattice(model, plane, mu=mu, grid=grid)
        integ = chern_weil(model, plane, mu=mu, grid=max(2 * grid, 48))
        if latt.value_integer != integ.value_integer:
            raise ConvergenceError(
                f"Chern routes disagree on plane {plane}: "
                f"{latt.value_integer} vs {integ.value_integer}"
            )
        vec.append(latt.value_integer)
        rows.append(latt)
        rows.append(integ)
    return tuple(vec), rows


def _write_bulk_csv(path: Path, rows):
    with path.open("w") as fh:
        fh.write("plane,method,grid,value,integer\n")
        for r in rows:
            fh.write(f"{r.plane},{r.method},{r.grid},{r.value_integral!r},{r.value_integer}\n")


def _write_spectra_csv(path: Path, data):
    with path.open("w") as fh:
        fh.write(SPECTRA_CSV_HEADER + "\n")
        weights = data.core_weights.max(axis=1)
        for i, kz in enumerate(data.kz_grid):
            for j in range(data.energies.shape[1]):
                fh.write(f"{kz!r},{j},{data.energies[i, j]!r},{weights[i, j]!r}\n")


def _produce_bulk(cfg: RunConfig, cache: Path) -> dict:
    t0 = time.time()
    vec, rows = _weak_vector_results(cfg)
    report = InvariantReport(
        config_hash=cfg.hash,
        version=__version__,
        seed=cfg.doc["numerics"]["seed"],
        weak_vector=list(vec),
        timings={"bulk": time.time() - t0},
    )
    _write_bulk_csv(cache / "bulk_invariants.csv", rows)
    return report.to_dict()


def _produce_predict(cfg: RunConfig, cache: Path) -> dict:
    t0 = time.time()
    vec, _rows = _weak_vector_results(cfg)
    frame = cfg.frame()
    predicted = boundary_map(even_class(xy=vec[2], yz=vec[0], zx=vec[1]), frame)
    report = InvariantReport(
        config_hash=cfg.hash,
        version=__version__,
        seed=cfg.doc["numerics"]["seed"],
        weak_vector=list(vec),
        predicted_index=predicted,
        timings={"predict": time.time() - t0},
    )
    doc = report.to_dict()
    (cache / "predicted.json").write_text(
        json.dumps({"predicted_index": predicted}, sort_keys=True) + "\n"
    )
    return doc


def _dislocation_result(cfg: RunConfig):
    model, _frame = _model_for_dislocation(cfg)
    lattice = cfg.lattice()
    num = cfg.doc["numerics"]
    delta = None
    if num.get("delta_halfwidth") is not None:
        delta = (num["mu"] - num["delta_halfwidth"], num["mu"] + num["delta_halfwidth"])
    return dislocation_run(
        model,
        lattice,
        kz_count=num["kz_count"],
        mu=num["mu"],
        rho=num["rho"],
        weight_threshold=num["weight_threshold"],
        epsilon=num.get("epsilon"),
        delta=delta,
        threads=num["threads"],
        core_removal=num["core_removal"],
    )


def _produce_dislocation(cfg: RunConfig, cache: Path) -> dict:
    t0 = time.time()
    result = _dislocation_result(cfg)
    report = InvariantReport(
        config_hash=cfg.hash,
        version=__version__,
        seed=cfg.doc["numerics"]["seed"],
        spectral_flow=result.flow,
        per_core_flows=result.per_core_flows,
        total_unfiltered_flow=result.total_unfiltered,
        localized_winding=result.winding,
        sigma_screw=result.sigma,
        gap_window=list(result.data.gap_window),
        timings={"dislocation": time.time() - t0},
    )
    _write_spectra_csv(cache / "spectra.csv", result.data)
    return report.to_dict()


def _produce_verify(cfg: RunConfig, cache: Path) -> dict:
    t0 = time.time()
    vec, rows = _weak_vector_results(cfg)
    t1 = time.time()
    frame = cfg.frame()
    predicted = boundary_map(even_class(xy=vec[2], yz=vec[0], zx=vec[1]), frame)
    result = _dislocation_result(cfg)
    t2 = time.time()
    report = InvariantReport(
        config_hash=cfg.hash,
        version=__version__,
        seed=cfg.doc["numerics"]["seed"],
        weak_vector=list(vec),
        predicted_index=predicted,
        spectral_flow=result.flow,
        per_core_flows=result.per_core_flows,
        total_unfiltered_flow=result.total_unfiltered,
        localized_winding=result.winding,
        sigma_screw=result.sigma,
        gap_window=list(result.data.gap_window),
        timings={"bulk": t1 - t0, "dislocation": t2 - t1},
    )
    report.agreement = compute_agreement(report)
    _write_bulk_csv(cache / "bulk_invariants.csv", rows)
    _write_spectra_csv(cache / "spectra.csv", result.data)
    return report.to_dict()


def _produce_lift_test(cfg: RunConfig, cache: Path) -> dict:
    lt = cfg.doc["lift_test"]
    t0 = time.time()
    lattice = build_lattice(lt["half_width"])
    rng = np.random.default_rng(lt["seed"])
    kz = lt["kz"]
    trials = []
    for _ in range(int(lt["trials"])):
        rk = int(rng.integers(1, lt["max_propagation"] + 1))
        rl = int(rng.integers(1, lt["max_propagation"] + 1))
        k = random_kernel(lattice, rk, rng)
        l = random_kernel(lattice, rl, rng)
        nb = norm_bound_check(k, lattice, kz)
        radius = multiplicativity_defect(k, l, lattice, kz)
        trials.append(
            {
                "prop_k": rk,
                "prop_l": rl,
                "lifted_norm": nb.lifted_norm,
                "norm_bound": nb.bound,
                "norm_ok": bool(nb.satisfied),
                "defect_radius": radius,
                "radius_limit": rk + rl + 2.0,
                "radius_ok": bool(radius <= rk + rl + 2.0),
            }
        )
    stats = {
        "config_hash": cfg.hash,
        "version": __version__,
        "trials": len(trials),
        "norm_bound_failures": sum(not t["norm_ok"] for t in trials),
        "radius_failures": sum(not t["radius_ok"] for t in trials),
        "max_defect_radius": max((t["defect_radius"] for t in trials), default=0.0),
        "elapsed": time.time() - t0,
        "cases": trials,
    }
    (cache / "lift_trials.json").write_text(json.dumps(stats, indent=2, sort_keys=True) + "\n")
    return stats


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="screwtb",
        description="Dislocated tight-binding laboratory: bulk invariants, "
        "dislocation spectra, and their integer correspondence.",
    )
    parser.add_argument("--version", action="version", version=f"screwtb {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("bulk-invariants", "dislocation-spectrum", "verify", "predict", "lift-test"):
        p = sub.add_parser(name)
        p.add_argument("--config", type=str, default=None, help="JSON configuration file")
        p.add_argument("--out", type=str, default=None, help="output directory")
        p.add_argument("--threads", type=int, default=None, help="worker pool size")
        p.add_argument("--kz-count", type=int, default=None, help="kz grid size")
        p.add_argument("--grid", type=int, default=None, help="momentum grid size")
        p.add_argument("--seed", type=int, default=None, help="random seed")
    return parser


_PRODUCERS = {
    "bulk-invariants": _produce_bulk,
    "dislocation-spectrum": _produce_dislocation,
    "verify": _produce_verify,
    "predict": _produce_predict,
    "lift-test": _produce_lift_test,
}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    overrides = {}
    if args.out is not None:
        overrides["output.directory"] = args.out
    if args.threads is not None:
        overrides["numerics.threads"] = args.threads
    if args.kz_count is not None:
        overrides["numerics.kz_count"] = args.kz_count
    if args.grid is not None:
        overrides["numerics.grid"] = args.grid
    if args.seed is not None:
        overrides["numerics.seed"] = args.seed

    try:
        cfg = RunConfig.load(args.config, overrides)
        report, cached = _run_cached(cfg, args.command, _PRODUCERS[args.command])
    except (ConfigError, ModelError, LatticeError, ValueError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 3
    except (GapClosedError, ConvergenceError, BranchMatchingError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2
    except ScrewtbError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    print(json.dumps(report, indent=2, sort_keys=True))
    if cached:
        print("(cached)", file=sys.stderr)
    if args.command == "verify" and not report.get("agreement"):
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
