"""Command-line experiment runner.

    momray forward            --config cfg.yaml --out DIR
    momray invert             --config cfg.yaml --out DIR [--route intrinsic|fd] [--levels N]
    momray verify-reshetnyak  --config cfg.yaml --out DIR [--levels N] [--seed N]
    momray verify-identities  --config cfg.yaml --out DIR

Exit codes: 0 success, 2 invalid configuration or inputs, 3 numerical failure.
The configuration schema is documented in ``docs/config.md``.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .catalog import catalog_names, catalog_phantom, random_phantom
from .files import (read_sinogram_bin, write_field_bin, write_json, write_rows_csv,
                    write_sinogram_bin, write_sinogram_csv)
from .inversion import PipelineError, component_errors, full_pipeline
from .norms import (NormReport, SobolevWeight, SphereGrid, data_norm_h1, data_norm_h2,
                    reshetnyak_m0, reshetnyak_m1_2d, reshetnyak_m2_2d, stability_checks)
from .sphere import SinogramGrid, commutator_suite, fourier_commutation_suite, z_op
from .tensor import Phantom
from .xray import (QuadratureError, chart_points, check_homogeneity, check_origin_shift,
                   check_shift_law, fourier_slice_check, sinogram_values)

WORKFLOWS = ("forward", "invert", "verify-reshetnyak", "verify-identities")
EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3


class ConfigError(ValueError):
    """Invalid configuration or input files (exit code 2)."""


class NumericalFailure(RuntimeError):
    """A computation failed (exit code 3); ``stage`` names where."""

    def __init__(self, stage: str, message: str):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

_GRID_KEYS = {"pCount": int, "pMax": float, "thetaCount": int, "rnGridSize": int,
              "rnExtent": float, "pad": int}
_TOP_KEYS = {"workflow", "phantom", "grid", "weights", "route", "levels", "seed",
             "output", "input", "formats", "corpusSize"}
_PHANTOM_KEYS = {"name", "rank", "dim", "lumps", "random"}
_LUMP_KEYS = {"center", "width", "terms"}
_TERM_KEYS = {"component", "exponents", "re", "im"}
_RANDOM_KEYS = {"rank", "lumps", "degree"}


def _reject_unknown(section: str, data: dict, allowed: set) -> None:
    if not isinstance(data, dict):
        raise ConfigError(f"{section} must be a mapping")
    extra = sorted(set(data) - allowed)
    if extra:
        raise ConfigError(f"unknown key(s) in {section}: {', '.join(extra)}; allowed: {', '.join(sorted(allowed))}")


@dataclass(frozen=True)
class GridSpec:
    pCount: int = 1024
    pMax: float = 12.0
    thetaCount: int = 256
    rnGridSize: int = 256
    rnExtent: float = 6.0
    pad: int = 8

    def validate(self) -> None:
        for name in ("pCount", "thetaCount", "rnGridSize", "pad"):
            v = getattr(self, name)
            if v < 1 or v & (v - 1):
                raise ConfigError(f"grid.{name} must be a positive power of two, got {v}")
        if self.pCount < 16 or self.thetaCount < 8 or self.rnGridSize < 8:
            raise ConfigError("grid too small: need pCount >= 16, thetaCount >= 8, rnGridSize >= 8")
        if not self.pMax > 0 or not self.rnExtent > 0:
            raise ConfigError("grid.pMax and grid.rnExtent must be positive")

    def coarsened(self, factor: int) -> "GridSpec":
        return replace(self, pCount=self.pCount // factor, thetaCount=self.thetaCount // factor,
                       rnGridSize=self.rnGridSize // factor, pad=max(2, self.pad // factor))

    def sphere(self) -> SphereGrid:
        return SphereGrid(self.thetaCount, self.pCount, self.pMax, self.pad)


@dataclass(frozen=True)
class ExperimentConfig:
    phantom: dict
    grid: GridSpec = GridSpec()
    weights: tuple = ((0.0, 0.0), (1.0, 0.0), (0.0, -0.25))
    workflow: str | None = None
    route: str = "intrinsic"
    levels: int = 1
    seed: int = 0
    output: str = "out"
    input: str | None = None
    formats: tuple = ("bin", "csv")
    corpusSize: int = 0

    @classmethod
    def from_dict(cls, data) -> "ExperimentConfig":
        if data is None:
            raise ConfigError("configuration is empty")
        _reject_unknown("config", data, _TOP_KEYS)
        if "phantom" not in data:
            raise ConfigError("config needs a 'phantom' section")
        phantom = data["phantom"]
        _validate_phantom_spec(phantom)
        grid = data.get("grid", {}) or {}
        _reject_unknown("grid", grid, set(_GRID_KEYS))
        try:
            gspec = GridSpec(**{k: _GRID_KEYS[k](v) for k, v in grid.items()})
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad grid value: {exc}") from None
        gspec.validate()
        weights = data.get("weights", cls.weights)
        try:
            weights = tuple((float(s), float(t)) for s, t in weights)
        except (TypeError, ValueError):
            raise ConfigError("weights must be a list of [s, t] pairs") from None
        for s, t in weights:
            if not t > -0.5:
                raise ConfigError(f"weight (s={s}, t={t}) needs t > -1/2 for the data-side norms")
        wf = data.get("workflow")
        if wf is not None and wf not in WORKFLOWS:
            raise ConfigError(f"workflow must be one of {', '.join(WORKFLOWS)}")
        route = data.get("route", "intrinsic")
        if route in ("finite-difference",):
            route = "fd"
        if route not in ("intrinsic", "fd"):
            raise ConfigError("route must be 'intrinsic' or 'fd'")
        formats = tuple(data.get("formats", ("bin", "csv")))
        if not formats or set(formats) - {"bin", "csv"}:
            raise ConfigError("formats must be a non-empty subset of [bin, csv]")
        try:
            levels = int(data.get("levels", 1))
            seed = int(data.get("seed", 0))
            corpus = int(data.get("corpusSize", 0))
        except (TypeError, ValueError):
            raise ConfigError("levels, seed and corpusSize must be integers") from None
        if levels < 1 or corpus < 0:
            raise ConfigError("levels must be >= 1 and corpusSize >= 0")
        return cls(phantom=phantom, grid=gspec, weights=weights, workflow=wf, route=route,
                   levels=levels, seed=seed, output=str(data.get("output", "out")),
                   input=data.get("input"), formats=formats, corpusSize=corpus)

    def to_dict(self) -> dict:
        return {
            "workflow": self.workflow,
            "phantom": self.phantom,
            "grid": {k: getattr(self.grid, k) for k in _GRID_KEYS},
            "weights": [list(w) for w in self.weights],
            "route": self.route,
            "levels": self.levels,
            "seed": self.seed,
            "output": self.output,
            "input": self.input,
            "formats": list(self.formats),
            "corpusSize": self.corpusSize,
        }

    def hash(self) -> str:
        """SHA-256 of the canonical config; the output location is not part of the experiment."""
        data = self.to_dict()
        data.pop("output", None)
        canon = json.dumps(data, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()

    def sobolev_weights(self) -> list[SobolevWeight]:
        return [SobolevWeight(s, t) for s, t in self.weights]

    def ladder(self) -> list[GridSpec]:
        """Grids of the refinement ladder, coarsest first; the last is ``grid``."""
        out = []
        for lev in range(self.levels):
            factor = 2 ** (self.levels - 1 - lev)
            g = self.grid.coarsened(factor)
            try:
                g.validate()
            except ConfigError as exc:
                raise ConfigError(f"--levels {self.levels} coarsens the grid too far: {exc}") from None
            out.append(g)
        return out


def _validate_phantom_spec(p) -> None:
    _reject_unknown("phantom", p, _PHANTOM_KEYS)
    modes = [k for k in ("name", "lumps", "random") if k in p]
    if len(modes) != 1:
        raise ConfigError("phantom needs exactly one of 'name', 'lumps' (with 'rank') or 'random'")
    if "name" in p:
        if set(p) != {"name"}:
            raise ConfigError("a named phantom takes no other keys")
        if p["name"] not in catalog_names():
            raise ConfigError(f"unknown phantom {p['name']!r}; choose from {', '.join(catalog_names())}")
    elif "random" in p:
        if set(p) != {"random"}:
            raise ConfigError("a random phantom takes no other keys")
        _reject_unknown("phantom.random", p["random"], _RANDOM_KEYS)
        if "rank" not in p["random"]:
            raise ConfigError("phantom.random needs 'rank'")
    else:
        if "rank" not in p:
            raise ConfigError("an inline phantom needs 'rank'")
        if int(p.get("dim", 2)) != 2:
            raise ConfigError("the runner works in the plane (dim = 2)")
        for i, lump in enumerate(p["lumps"]):
            _reject_unknown(f"phantom.lumps[{i}]", lump, _LUMP_KEYS)
            for j, term in enumerate(lump.get("terms", [])):
                _reject_unknown(f"phantom.lumps[{i}].terms[{j}]", term, _TERM_KEYS)
    rank = _phantom_rank(p)
    if rank not in (0, 1, 2):
        raise ConfigError(f"rank must be 0, 1 or 2 in the plane, got {rank}")


def _phantom_rank(p: dict) -> int:
    if "name" in p:
        return catalog_phantom(p["name"]).rank
    if "random" in p:
        return int(p["random"]["rank"])
    return int(p["rank"])


def build_phantom(cfg: ExperimentConfig) -> Phantom:
    p = cfg.phantom
    try:
        if "name" in p:
            return catalog_phantom(p["name"])
        if "random" in p:
            r = p["random"]
            rng = np.random.default_rng(cfg.seed)
            return random_phantom(rng, int(r["rank"]), lumps=int(r.get("lumps", 2)),
                                  degree=int(r.get("degree", 2)))
        return Phantom.from_dict(p)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad phantom specification: {exc}") from None


def load_config(path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"config is not valid YAML: {exc}") from None
    return ExperimentConfig.from_dict(data)


def dump_config(cfg: ExperimentConfig) -> str:
    return yaml.safe_dump(cfg.to_dict(), sort_keys=True)


# ---------------------------------------------------------------------------
# workflows
# ---------------------------------------------------------------------------

class _Timer:
    def __init__(self):
        self.timings: dict[str, float] = {}

    def run(self, stage: str, fn, *args, **kwargs):
        t0 = time.perf_counter()
        try:
            return fn(*args, **kwargs)
        except (ConfigError, NumericalFailure):
            raise
        except PipelineError as exc:
            if isinstance(exc.cause, ValueError):
                raise ConfigError(str(exc)) from exc
            raise NumericalFailure(exc.stage, str(exc.cause)) from exc
        except (QuadratureError, ArithmeticError, np.linalg.LinAlgError) as exc:
            raise NumericalFailure(stage, str(exc)) from exc
        finally:
            self.timings[stage] = self.timings.get(stage, 0.0) + time.perf_counter() - t0


def _manifest(cfg: ExperimentConfig, workflow: str, phantom: Phantom | None, files, timer: _Timer,
              extra: dict | None = None) -> dict:
    m = {
        "tool": "momray",
        "version": __version__,
        "workflow": workflow,
        "config_hash": cfg.hash(),
        "config": cfg.to_dict(),
        "seed": cfg.seed,
        "phantom": phantom.to_dict() if phantom is not None else None,
        "files": sorted(str(f) for f in files),
        "timings_s": {k: round(v, 6) for k, v in sorted(timer.timings.items())},
    }
    m.update(extra or {})
    return m


def _forward_sinograms(f: Phantom, grid: GridSpec) -> list[SinogramGrid]:
    g = SinogramGrid.zeros(grid.thetaCount, grid.pCount, grid.pMax)
    return [g.with_values(sinogram_values(f, k, g.p, g.theta)) for k in range(f.rank + 1)]


def run_forward(cfg: ExperimentConfig, out: Path) -> dict:
    timer = _Timer()
    f = timer.run("phantom", build_phantom, cfg)
    sinos = timer.run("forward", _forward_sinograms, f, cfg.grid)
    files = []
    for k, g in enumerate(sinos):
        stem = out / f"sinogram_k{k}"
        if "bin" in cfg.formats:
            files.extend(p.name for p in write_sinogram_bin(stem, g, k, {"config_hash": cfg.hash()}))
        if "csv" in cfg.formats:
            files.append(write_sinogram_csv(stem.with_suffix(".csv"), [g], [k]).name)
    manifest = _manifest(cfg, "forward", f, files, timer, {"rank": f.rank})
    write_json(out / "manifest.json", manifest)
    return manifest


def _load_forward_run(src: Path) -> tuple[dict, list[SinogramGrid]]:
    mpath = src / "manifest.json"
    if not mpath.exists():
        raise ConfigError(f"no manifest.json in {src}")
    manifest = json.loads(mpath.read_text())
    if manifest.get("workflow") != "forward" or "rank" not in manifest:
        raise ConfigError(f"{mpath} is not a forward-run manifest")
    rank = int(manifest["rank"])
    sinos = []
    for k in range(rank + 1):
        stem = src / f"sinogram_k{k}"
        if not stem.with_suffix(".bin").exists() or not stem.with_suffix(".json").exists():
            raise ConfigError(f"missing momentum I^{k} (k = {k}): {stem}.bin/.json not found")
        g, meta = read_sinogram_bin(stem)
        if meta.get("k") != k or meta.get("config_hash") != manifest.get("config_hash"):
            raise ConfigError(f"{stem}.json does not match the manifest in {src}")
        sinos.append(g)
    try:
        sinos[0].check_same_grid(*sinos[1:])
    except ValueError as exc:
        raise ConfigError(f"sinograms in {src} are on different grids: {exc}") from None
    return manifest, sinos


def run_invert(cfg: ExperimentConfig, out: Path) -> dict:
    timer = _Timer()
    rows = []
    files = []
    phantom = None
    if cfg.input is not None:
        manifest, sinos = _load_forward_run(Path(cfg.input))
        if manifest.get("phantom") is not None:
            phantom = Phantom.from_dict(manifest["phantom"])
        levels = [(cfg.grid, sinos)]
    else:
        phantom = timer.run("phantom", build_phantom, cfg)
        levels = [(g, None) for g in cfg.ladder()]
    for lev, (grid, sinos) in enumerate(levels):
        if sinos is None:
            sinos = timer.run("forward", _forward_sinograms, phantom, grid)
        m = len(sinos) - 1
        recon = timer.run("reconstruct", full_pipeline, sinos, m, cfg.route,
                          grid_size=grid.rnGridSize, extent=grid.rnExtent)
        final = lev == len(levels) - 1
        if final:
            for idx, fg in sorted(recon.items()):
                name = "recon_" + ("".join(map(str, idx)) or "scalar")
                files.extend(p.name for p in write_field_bin(out / name, fg, idx, {"config_hash": cfg.hash()}))
        if phantom is not None:
            for r in component_errors(recon, phantom):
                r.update({"angles": sinos[0].theta_count, "level": lev})
                rows.append(r)
    if rows:
        final_rows = [r for r in rows if r["level"] == len(levels) - 1]
        files.append(write_rows_csv(out / "errors.csv", final_rows,
                                    ["component", "L2_err", "Linf_err", "grid", "angles"]).name)
        if len(levels) > 1:
            files.append(write_rows_csv(out / "errors_levels.csv", rows,
                                        ["level", "component", "L2_err", "Linf_err", "grid", "angles"]).name)
    manifest = _manifest(cfg, "invert", phantom, files, timer)
    write_json(out / "manifest.json", manifest)
    return manifest


_RESHETNYAK = {0: reshetnyak_m0, 1: reshetnyak_m1_2d, 2: reshetnyak_m2_2d}


def run_verify_reshetnyak(cfg: ExperimentConfig, out: Path) -> dict:
    timer = _Timer()
    f = timer.run("phantom", build_phantom, cfg)
    if f.rank not in _RESHETNYAK:
        raise ConfigError("identities are available for ranks 0, 1, 2")
    reports: list[NormReport] = []
    table = []
    iso = []
    for lev, grid in enumerate(cfg.ladder()):
        sg = grid.sphere()
        data = timer.run("forward", sg.sinograms, f)
        for w in cfg.sobolev_weights():
            rep = timer.run("reshetnyak", _RESHETNYAK[f.rank], f, w, sg, data)
            rep.meta["level"] = lev
            reports.append(rep)
            table.append({"level": lev, "theta_count": grid.thetaCount, "p_count": grid.pCount,
                          "pad": grid.pad, "s": w.s, "t": w.t, "lhs": rep.lhs, "rhs": rep.rhs,
                          "rel_residual": rep.rel_residual})
            if f.rank in (1, 2):
                dn = (data_norm_h1(data[0], data[1], w, sg.pad) if f.rank == 1
                      else data_norm_h2(data[0], data[1], data[2], w, sg.pad))
                st = timer.run("stability", stability_checks, f, w, f.rank, sg, data)
                iso.append({"level": lev, "s": w.s, "t": w.t, "norm_f_sq": rep.lhs, "data_norm_sq": dn,
                            "rel_residual": abs(dn - rep.lhs) / max(rep.lhs, 1e-300),
                            "stability_slack": st["slack"], "stability_holds": str(st["holds"])})
    files = []
    files.append(write_json(out / "reports.json", [r.to_dict() for r in reports]).name)
    files.append(write_rows_csv(out / "convergence.csv", table,
                                ["level", "theta_count", "p_count", "pad", "s", "t", "lhs", "rhs",
                                 "rel_residual"]).name)
    if iso:
        files.append(write_rows_csv(out / "isometry_stability.csv", iso,
                                    ["level", "s", "t", "norm_f_sq", "data_norm_sq", "rel_residual",
                                     "stability_slack", "stability_holds"]).name)
    if cfg.corpusSize > 0 and f.rank in (1, 2):
        rng = np.random.default_rng(cfg.seed)
        sg = cfg.grid.sphere()
        corpus_rows = []
        for i in range(cfg.corpusSize):
            g = random_phantom(rng, f.rank)
            data = timer.run("forward", sg.sinograms, g)
            for w in cfg.sobolev_weights():
                st = timer.run("stability", stability_checks, g, w, f.rank, sg, data)
                corpus_rows.append({"draw": i, "s": w.s, "t": w.t, "lhs": st["lhs"], "rhs": st["rhs"],
                                    "slack": st["slack"], "holds": str(st["holds"])})
        files.append(write_rows_csv(out / "stability_corpus.csv", corpus_rows,
                                    ["draw", "s", "t", "lhs", "rhs", "slack", "holds"]).name)
    manifest = _manifest(cfg, "verify-reshetnyak", f, files, timer)
    write_json(out / "manifest.json", manifest)
    return manifest


def identity_residuals(f: Phantom, size: int = 64, p_max: float = 6.0, top_k: int = 3,
                       seed: int = 0) -> list[dict]:
    """Max residuals of the transform identities on a ``size x size`` chart grid."""
    rng = np.random.default_rng(seed)
    g = SinogramGrid.zeros(size, size, p_max)
    x, xi = chart_points(g.p, g.theta)
    rows = []

    def add(name, k, value):
        rows.append({"identity": name, "k": k, "max_residual": float(value)})

    for k in range(top_k + 1):
        add("homogeneity", k, np.max(check_homogeneity(f, k, x, xi, -1.7)))
        add("shift-law", k, np.max(check_shift_law(f, k, x, xi, 0.6)))
        add("origin-shift", k, np.max(check_origin_shift(f, rng.uniform(-1, 1, 2), k, x, xi)))
    df = f.d()
    for k in range(top_k + 1):
        lhs = sinogram_values(df, k, g.p, g.theta)
        rhs = -k * sinogram_values(f, k - 1, g.p, g.theta) if k > 0 else 0.0
        add("I^k(df)=-kI^(k-1)f", k, np.max(np.abs(lhs - rhs)))
    # spectral operators need data that have decayed inside the p window
    og = SinogramGrid.zeros(size, 4 * size, 12.0)
    sino = og.with_values(sinogram_values(f, 0, og.p, og.theta))
    for name, val in commutator_suite(sino).items():
        add(name, 0, val)
    for name, val in fourier_commutation_suite(sino).items():
        add(name, 0, val)
    add("Z: hilbert vs spectral route", 0,
        np.max(np.abs(z_op(sino, "hilbert").values - z_op(sino, "spectral").values)))
    for k in range(3):
        worst = 0.0
        for _ in range(4):
            th = rng.uniform(0, 2 * np.pi)
            direction = np.array([np.cos(th), np.sin(th)])
            y = rng.uniform(-2, 2) * np.array([-np.sin(th), np.cos(th)])
            worst = max(worst, fourier_slice_check(f, k, y, direction))
        add("fourier-slice", k, worst)
    return rows


def run_verify_identities(cfg: ExperimentConfig, out: Path) -> dict:
    timer = _Timer()
    f = timer.run("phantom", build_phantom, cfg)
    rows = timer.run("identities", identity_residuals, f, seed=cfg.seed)
    files = [write_rows_csv(out / "identities.csv", rows, ["identity", "k", "max_residual"]).name,
             write_json(out / "identities.json", rows).name]
    manifest = _manifest(cfg, "verify-identities", f, files, timer)
    write_json(out / "manifest.json", manifest)
    return manifest


_RUNNERS = {
    "forward": run_forward,
    "invert": run_invert,
    "verify-reshetnyak": run_verify_reshetnyak,
    "verify-identities": run_verify_identities,
}


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="momray", description="Momentum ray transform experiments.")
    parser.add_argument("--version", action="version", version=f"momray {__version__}")
    sub = parser.add_subparsers(dest="workflow", required=True)
    for name in WORKFLOWS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True, help="YAML experiment configuration")
        sp.add_argument("--out", help="output directory (overrides 'output')")
        sp.add_argument("--levels", type=int, help="number of refinement levels")
        sp.add_argument("--route", choices=("intrinsic", "fd"), help="component-transform route")
        sp.add_argument("--seed", type=int, help="random seed")
    return parser


def _apply_overrides(cfg: ExperimentConfig, args) -> ExperimentConfig:
    changes = {}
    if args.out is not None:
        changes["output"] = args.out
    if args.levels is not None:
        if args.levels < 1:
            raise ConfigError("--levels must be >= 1")
        changes["levels"] = args.levels
    if args.route is not None:
        changes["route"] = args.route
    if args.seed is not None:
        changes["seed"] = args.seed
    if cfg.workflow is not None and cfg.workflow != args.workflow:
        raise ConfigError(f"config declares workflow {cfg.workflow!r} but {args.workflow!r} was requested")
    changes["workflow"] = args.workflow
    cfg = replace(cfg, **changes)
    cfg.ladder()
    return cfg


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    try:
        cfg = _apply_overrides(load_config(args.config), args)
        out = Path(cfg.output)
        out.mkdir(parents=True, exist_ok=True)
        _RUNNERS[args.workflow](cfg, out)
    except ConfigError as exc:
        print(f"momray: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalFailure as exc:
        print(f"momray: numerical failure {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
