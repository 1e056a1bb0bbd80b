"""Command line entry point and experiment orchestration.

    framedisc discretize --config run.json --out results/
    framedisc demo gabor --seed 3
    framedisc selector-bench --config bench.json
    framedisc constants --epsilon 0.1

Every command writes ``report.json``, ``points.csv``, ``certificates.csv``
and ``constants.csv`` to ``--out`` plus a plain-text ``summary.txt`` (also
printed). The exit code is 0 exactly when the verdict is true.
"""

from __future__ import annotations

import argparse
import csv
import inspect
import json
import logging
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, frames, selector, spaces
from .discretize import MODES, PipelineError, discretize, theory_constants
from .selector import (
    STRATEGIES, WeightedOpFamily, absolute_constant, compute_beta_block, recursion_B,
    select_level, select_to_level, uniform_constant,
)

log = logging.getLogger("framedisc")

RNG_NAME = "numpy.random.PCG64"


class ConfigError(ValueError):
    pass


# ------------------------------------------------------------------- config


def _make_gabor(window="gaussian", width=1.0, **kw):
    if window != "gaussian":
        raise ConfigError(f"unknown window {window!r}")
    return frames.gabor_frame(frames.gaussian(width), **kw)


def _make_wavelet(profile="band-indicator", lo=1.0, hi=2.0, **kw):
    if profile == "band-indicator":
        spec = frames.band_indicator(lo, hi)
    elif profile == "mexican-hat-like":
        spec = frames.odd_gaussian_derivative()
    else:
        raise ConfigError(f"unknown wavelet profile {profile!r}")
    return frames.wavelet_frame(spec, **kw)


GENERATORS = {
    "gabor": _make_gabor,
    "exponential": frames.exponential_frame,
    "wavelet": _make_wavelet,
    "sinc": frames.sinc_kernel_frame,
}

DEMOS = {
    "exponential": {"frame": {"generator": "exponential", "params": {}}, "epsilon": 0.25},
    "gabor": {"frame": {"generator": "gabor", "params": {"band": 3.0}}, "epsilon": 0.3},
    "wavelet": {
        "frame": {"generator": "wavelet", "params": {
            "profile": "band-indicator", "period": 4.0, "a_range": [0.5, 2.0], "grid": [64, 32]}},
        "epsilon": 0.3, "net_radius": 1 / 32,
    },
    "sinc": {"frame": {"generator": "sinc", "params": {"band_threshold": 0.9}}, "epsilon": 0.3},
}


def _params_of(fn):
    sig = inspect.signature(fn)
    names = set()
    for p in sig.parameters.values():
        if p.kind in (p.VAR_KEYWORD, p.VAR_POSITIONAL):
            continue
        names.add(p.name)
    return names


def _generator_keys(name):
    fn = GENERATORS[name]
    keys = _params_of(fn)
    if name == "gabor":
        keys |= _params_of(frames.gabor_frame) - {"window"}
    if name == "wavelet":
        keys |= _params_of(frames.wavelet_frame) - {"spec"}
    return keys


@dataclass
class BenchConfig:
    delta: float = 0.05
    pairs: int = 8
    trials: int = 100
    dim: int = 6
    levels: int = 1
    strategies: list = field(default_factory=lambda: ["exhaustive", "greedy"])


@dataclass
class SpaceSpec:
    kind: str = "euclidean"
    dim: int = 2
    R_A: float | None = None
    C_RA: float | None = None

    def build(self) -> spaces.SpaceModel:
        if self.kind == "hyperbolic":
            s = spaces.hyperbolic_half_plane()
        elif self.kind == "euclidean":
            s = spaces.euclidean(self.dim) if self.R_A is None else spaces.euclidean(self.dim, self.R_A)
        else:
            raise ConfigError(f"unknown space kind {self.kind!r}")
        over = {k: v for k, v in (("R_A", self.R_A), ("C_RA", self.C_RA)) if v is not None}
        if over:
            s = spaces.SpaceModel(**{**asdict(s), **over})
        return s


@dataclass
class ExperimentConfig:
    frame: dict = field(default_factory=lambda: {"generator": "exponential", "params": {}})
    space: SpaceSpec | None = None
    epsilon: float = 0.25
    mode: str = "practical"
    r: float | None = None
    net_radius: float | None = None
    strategy: str = "greedy"
    anchor: str = "global"
    diameter_rule: str = "uniform"
    seed: int = 0
    workers: int = 1
    delta: float = 0.01
    out: str = "results"
    bench: BenchConfig = field(default_factory=BenchConfig)

    def validate(self) -> ExperimentConfig:
        if not (isinstance(self.epsilon, (int, float)) and 0 < self.epsilon < 1):
            raise ConfigError(f"epsilon must lie in (0, 1), got {self.epsilon!r}")
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}")
        if self.strategy not in STRATEGIES:
            raise ConfigError(f"strategy must be one of {STRATEGIES}")
        if self.anchor not in ("global", "stagewise"):
            raise ConfigError("anchor must be 'global' or 'stagewise'")
        if self.diameter_rule not in ("uniform", "dyadic"):
            raise ConfigError("diameter_rule must be 'uniform' or 'dyadic'")
        for name in ("r", "net_radius"):
            v = getattr(self, name)
            if v is not None and not v > 0:
                raise ConfigError(f"{name} must be positive")
        if not (isinstance(self.seed, int) and 0 <= self.seed < 2 ** 64):
            raise ConfigError("seed must be an unsigned 64-bit integer")
        if not (isinstance(self.workers, int) and self.workers >= 1):
            raise ConfigError("workers must be a positive integer")
        if not self.delta > 0:
            raise ConfigError("delta must be positive")
        gen = self.frame.get("generator")
        if gen not in GENERATORS:
            raise ConfigError(f"unknown generator {gen!r}; choose from {sorted(GENERATORS)}")
        extra = set(self.frame) - {"generator", "params"}
        if extra:
            raise ConfigError(f"unknown frame keys {sorted(extra)}")
        bad = set(self.frame.get("params", {})) - _generator_keys(gen)
        if bad:
            raise ConfigError(f"unknown {gen} parameters {sorted(bad)}")
        for k, v in self.frame.get("params", {}).items():
            if k in ("n", "grid") and np.any(np.asarray(v) <= 0):
                raise ConfigError(f"resolution {k} must be positive")
        b = self.bench
        if not (0 < b.delta and b.pairs >= 1 and b.trials >= 1 and b.dim >= 1 and b.levels >= 1):
            raise ConfigError("bench parameters out of range")
        if any(s not in STRATEGIES for s in b.strategies):
            raise ConfigError(f"bench strategies must be among {STRATEGIES}")
        return self

    def build_frame(self) -> frames.FrameModel:
        gen = self.frame["generator"]
        params = {k: (tuple(v) if isinstance(v, list) and k != "S" else v)
                  for k, v in self.frame.get("params", {}).items()}
        if "S" in params:
            params["S"] = tuple(tuple(iv) for iv in params["S"])
        frame = GENERATORS[gen](**params)
        if self.space is not None:
            want = self.space.build()
            if want.kind != frame.space.kind or want.dim != frame.space.dim:
                raise ConfigError(f"space {want.kind}({want.dim}) does not match the {gen} frame")
            over = {k: getattr(self.space, k) for k in ("R_A", "C_RA") if getattr(self.space, k) is not None}
            if over:
                frame.space = spaces.SpaceModel(**{**asdict(frame.space), **over})
                frame.region = spaces.Region(frame.space, frame.region.lower, frame.region.upper,
                                             frame.region.shape, frame.region.log_axes)
        return frame


def _strict(cls, data, where):
    if not isinstance(data, dict):
        raise ConfigError(f"{where} must be a JSON object")
    known = {f for f in cls.__dataclass_fields__}
    bad = set(data) - known
    if bad:
        raise ConfigError(f"unknown keys in {where}: {sorted(bad)}")
    return data


def config_from_dict(data: dict) -> ExperimentConfig:
    data = dict(_strict(ExperimentConfig, data, "config"))
    if "space" in data and data["space"] is not None:
        data["space"] = SpaceSpec(**_strict(SpaceSpec, data["space"], "space"))
    if "bench" in data:
        data["bench"] = BenchConfig(**_strict(BenchConfig, data["bench"], "bench"))
    if "frame" in data and not isinstance(data["frame"], dict):
        raise ConfigError("frame must be a JSON object")
    try:
        cfg = ExperimentConfig(**data)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
    return cfg.validate()


def load_config(path) -> ExperimentConfig:
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return config_from_dict(data)


# ------------------------------------------------------------------ outputs


@dataclass
class RunArtifacts:
    report: dict
    points: list
    certificates: list
    constants: list
    summary: str
    verdict: bool


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else (None if math.isnan(x) else repr(x))
    if isinstance(x, np.bool_):
        return bool(x)
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    return x


def _fmt(v):
    # same text the JSON encoder writes for the value
    return json.dumps(_jsonable(v))


def write_artifacts(art: RunArtifacts, out) -> Path:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(json.dumps(_jsonable(art.report), indent=2, sort_keys=True) + "\n")
    _write_csv(out / "points.csv", art.points)
    _write_csv(out / "certificates.csv", art.certificates)
    _write_csv(out / "constants.csv", art.constants)
    (out / "summary.txt").write_text(art.summary)
    return out


def _write_csv(path, rows):
    with open(path, "w", newline="") as fh:
        if not rows:
            fh.write("")
            return
        cols = list(rows[0])
        w = csv.DictWriter(fh, fieldnames=cols, lineterminator="\n")
        w.writeheader()
        for row in rows:
            w.writerow({k: _fmt(v) if isinstance(v, float) else v for k, v in row.items()})


def _provenance(cfg):
    # the output directory is left out so reports compare byte for byte
    conf = {k: v for k, v in asdict(cfg).items() if k != "out"}
    return {"package_version": __version__, "numpy": np.__version__, "rng": RNG_NAME,
            "seed": cfg.seed, "config": _jsonable(conf)}


def _summary(title, pairs, verdict, failures=()):
    lines = [title, "-" * len(title)]
    width = max(len(k) for k, _ in pairs)
    for k, v in pairs:
        lines.append(f"{k:<{width}}  {_fmt(v)}")
    lines.append(f"{'verdict':<{width}}  {'PASS' if verdict else 'FAIL'}")
    lines.extend(f"  failure: {f}" for f in failures)
    return "\n".join(lines) + "\n"


# --------------------------------------------------------------- commands


def _constant_rows(consts: dict) -> list:
    rows = []
    for k in sorted(consts):
        v = consts[k]
        if isinstance(v, (int, float)) and not isinstance(v, bool):
            rows.append({"name": k, "value": float(v)})
    return rows


def run_discretize(cfg: ExperimentConfig) -> RunArtifacts:
    frame = cfg.build_frame()
    rep = discretize(frame, cfg.epsilon, mode=cfg.mode, r=cfg.r, net_radius=cfg.net_radius,
                     strategy=cfg.strategy, seed=cfg.seed, anchor=cfg.anchor,
                     diameter_rule=cfg.diameter_rule)
    d = rep.to_dict()
    report = {"command": "discretize", "frame": frame.describe(), "space": frame.space.describe(),
              "result": d, "verdict": bool(rep.verdict), **_provenance(cfg)}
    pts = [{"index": i, **{f"x{k}": float(c) for k, c in enumerate(p)}, "weight": rep.weight}
           for i, p in enumerate(rep.points)]
    keys = [("generator", frame.name), ("mode", rep.mode), ("epsilon", rep.epsilon),
            ("epsilon_abs", rep.epsilon_abs), ("A_ref", rep.A_ref), ("B_ref", rep.B_ref)]
    if rep.mode == "practical":
        keys += [("points", len(rep.points)), ("beta", rep.beta), ("L", rep.L),
                 ("weight", rep.weight), ("r", rep.r), ("separation", rep.separation),
                 ("deviation", rep.deviation), ("A_out", rep.A_out), ("B_out", rep.B_out),
                 ("ratio", rep.ratio)]
    else:
        keys += [("log2_C1", rep.constants["log2_C1"]),
                 ("log2_r_theory", rep.constants["log2_r_theory"]), ("beta", rep.beta)]
    summary = _summary("discretize", keys, bool(rep.verdict), rep.failures)
    return RunArtifacts(report, pts, rep.certificates, _constant_rows(rep.constants), summary,
                        bool(rep.verdict))


def random_family(rng, n_ops: int, dim: int, delta: float) -> WeightedOpFamily:
    """Random rank-one family with traces in ``(delta/2, delta]`` and sum below I."""
    F = rng.standard_normal((n_ops, dim)) + 1j * rng.standard_normal((n_ops, dim))
    F /= np.linalg.norm(F, axis=1, keepdims=True)
    F *= np.sqrt(delta * rng.uniform(0.5, 1.0, n_ops))[:, None]
    top = np.linalg.eigvalsh(F.T @ F.conj())[-1]
    if top > 1:
        F /= math.sqrt(top)
    return WeightedOpFamily.uniform(F, delta)


def _bench_trial(args):
    seed, b, t = args
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, t])))
    n_ops = 2 * b.pairs if b.levels == 1 else 2 ** b.levels * math.ceil(2 * b.pairs / 2 ** b.levels)
    fam = random_family(rng, n_ops, b.dim, b.delta)
    applicable = 2.0 ** b.levels * b.delta < 1
    C = uniform_constant(b.delta) if applicable else math.nan
    rows = []
    for strat in b.strategies:
        if b.levels == 1:
            pairing = selector.pair_by_block(range(fam.size), lambda i: 0)
            cert = select_level(fam, pairing, strat, rng=rng, C=C)
        else:
            cert = select_to_level(fam, b.levels, strategy=strat, rng=rng, C=C)
        rows.append({"trial": t, "strategy": strat, "operators": fam.size, "level": b.levels,
                     "delta": b.delta, "deviation": cert.deviation,
                     "bound": cert.theoretical_bound, "satisfied": bool(cert.satisfied),
                     "applicable": applicable})
    return rows


def run_selector_bench(cfg: ExperimentConfig) -> RunArtifacts:
    b = cfg.bench
    jobs = [(cfg.seed, b, t) for t in range(b.trials)]
    with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
        rows = [r for chunk in pool.map(_bench_trial, jobs) for r in chunk]
    applicable = 2.0 ** b.levels * b.delta < 1
    rates = {}
    for s in b.strategies:
        sel = [r for r in rows if r["strategy"] == s]
        rates[s] = sum(r["satisfied"] for r in sel) / len(sel)
    dominance = True
    if "exhaustive" in b.strategies:
        ex = {r["trial"]: r["deviation"] for r in rows if r["strategy"] == "exhaustive"}
        dominance = all(r["deviation"] >= ex[r["trial"]] - 1e-12 for r in rows)
    verdict = bool(dominance and (not applicable or rates.get("exhaustive", 1.0) == 1.0))
    C = uniform_constant(b.delta) if applicable else math.nan
    report = {"command": "selector-bench", "bench": asdict(b), "guarantee_applicable": applicable,
              "C": C, "satisfied_rate": rates, "exhaustive_dominates": dominance,
              "verdict": verdict, **_provenance(cfg)}
    summary = _summary("selector-bench", [("delta", b.delta), ("levels", b.levels),
                                          ("trials", b.trials), ("C", C)]
                       + [(f"rate_{k}", v) for k, v in rates.items()], verdict)
    return RunArtifacts(report, [], rows, [{"name": "C", "value": C}], summary, verdict)


def constants_table(epsilon: float, space: spaces.SpaceModel, delta: float, B: float = 1.0,
                    D: float = 1.0, r_used: float | None = None) -> list:
    """Rows ``(name, value)`` of the worst-case constants."""
    rows = []
    N = selector.max_admissible_level(delta)
    Bs = recursion_B(delta, max(N, 1))
    for j, v in enumerate(Bs):
        rows.append({"name": f"B_{j}", "value": float(v)})
    C = uniform_constant(delta)
    rows.append({"name": "C_delta", "value": C})
    x = epsilon ** 2 / (C ** 2 * delta) if math.isfinite(C) and C > 0 else math.nan
    rows.append({"name": "eps2_over_C2delta", "value": x})
    beta_blk = compute_beta_block(epsilon, C, delta) if math.isfinite(x) and x <= 2 else math.nan
    rows.append({"name": "beta_block", "value": beta_blk})
    th = theory_constants(epsilon, B, D, space)
    for k in ("C", "doubling_exponent_term", "log2_C1", "beta_distinct", "beta_uniform",
              "log2_r_theory", "r_theory", "L_max"):
        rows.append({"name": k, "value": th[k]})
    rows.append({"name": "r_used", "value": math.nan if r_used is None else r_used})
    return [{"name": r["name"], "value": float(r["value"])} for r in rows]


def emit_constants(cfg: ExperimentConfig) -> RunArtifacts:
    if cfg.space is not None:
        space = cfg.space.build()
        B = D = 1.0
        label = f"{space.kind}({space.dim})"
    else:
        frame = cfg.build_frame()
        space = frame.space
        B, D = frame.reference_bounds[1], frame.D
        label = frame.name
    rows = constants_table(cfg.epsilon, space, cfg.delta, B, D, cfg.r)
    ok = all(math.isfinite(r["value"]) for r in rows
             if r["name"] in ("log2_C1", "log2_r_theory", "beta_uniform", "beta_distinct"))
    report = {"command": "constants", "for": label, "space": space.describe(), "epsilon": cfg.epsilon,
              "delta": cfg.delta, "constants": {r["name"]: r["value"] for r in rows},
              "verdict": ok, **_provenance(cfg)}
    summary = _summary(f"constants for {label}", [(r["name"], r["value"]) for r in rows], ok)
    return RunArtifacts(report, [], [], rows, summary, ok)


# -------------------------------------------------------------------- main


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="framedisc", description=__doc__.split("\n")[0])
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON experiment config")
    common.add_argument("--seed", type=int)
    common.add_argument("--mode", choices=MODES)
    common.add_argument("--epsilon", type=float)
    common.add_argument("--r", type=float)
    common.add_argument("--workers", type=int)
    common.add_argument("--out")
    common.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("discretize", parents=[common], help="run the full pipeline")
    sub.add_parser("selector-bench", parents=[common], help="random binary-selector sweep")
    sub.add_parser("constants", parents=[common], help="tabulate worst-case constants")
    d = sub.add_parser("demo", parents=[common], help="built-in example runs")
    d.add_argument("name", choices=sorted(DEMOS))
    return p


def _resolve(args) -> ExperimentConfig:
    data = {}
    if args.command == "demo":
        data = json.loads(json.dumps(DEMOS[args.name]))
        data["out"] = f"results/{args.name}"
    if args.config:
        try:
            data.update(json.loads(Path(args.config).read_text()))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
    for flag in ("seed", "mode", "epsilon", "r", "workers", "out"):
        v = getattr(args, flag)
        if v is not None:
            data[flag] = v
    return config_from_dict(data)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _resolve(args)
        if args.command in ("discretize", "demo"):
            art = run_discretize(cfg)
        elif args.command == "selector-bench":
            art = run_selector_bench(cfg)
        else:
            art = emit_constants(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except PipelineError as exc:
        print(f"stage {exc.stage} failed: {exc}", file=sys.stderr)
        return 1
    out = write_artifacts(art, cfg.out)
    sys.stdout.write(art.summary)
    print(f"artifacts written to {out}")
    return 0 if art.verdict else 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
