"""TOML configuration: parsing, validation and the resolved (all defaults
materialized) dictionary form written into run manifests.

Schema::

    [network]
    nodes = 5
    edges = [[0, 1], [0, 2], ...]      # or "complete" / "path"

    [network.distribution]
    kind = "uniform_enumerated"        # or "explicit" / "sequential"
    # explicit only:
    entries = [{partner = [1, 0, 2], weight = 0.5}, ...]

    [[observations.sensors]]           # one table per sensor
    pre = {family = "gaussian", mean = 0.0, variance = 1.0}
    post = {family = "gaussian", mean = 0.1, variance = 1.0}
    # tabulated: {family = "tabulated", grid = [...], log_density = [...]}

    [detection]
    rho = 0.1
    gamma = 6.0
    modes = ["centralized", "isolated", "distributed"]   # or "isolated:2"
    thresholds = {log10_start = 1.0, log10_stop = 4.0, count = 7}   # or a list

    [simulation]
    trials_per_threshold = 100000
    max_horizon = 2000
    censor_cap = 0.001
    horizon_limit = 64000
    block_size = 4096
    seed = 20240601                    # optional; --seed overrides

    [analysis]
    window = 15
    gamma_grid = [0.0, 2.0, ...]
    tail_eps = 1e-10
"""

from __future__ import annotations

import math
import re
from importlib import resources
from pathlib import Path
from typing import Any, Optional

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .detector import DetectorMode
from .errors import DisconnectedGraph, GossipQCDError, InvalidEdge, NondistinguishablePair, ParseError, ValidationError
from .experiments import ExperimentConfig, log_spaced_thresholds
from .gossip import SequentialMatchingSampler
from .obsmodel import Gaussian, ObservationModel, SensorDensityPair, Tabulated
from .topology import (
    Graph,
    averaged_matrix,
    build_graph,
    check_irreducible_aperiodic,
    enumerate_matchings,
    explicit_distribution,
    uniform_distribution,
)

REFERENCE_NAME = "reference.cfg"


def reference_config_path() -> Path:
    return Path(str(resources.files("gossipqcd") / "data" / REFERENCE_NAME))


def resolve_config_path(path) -> Path:
    p = Path(path)
    if not p.exists() and p.name == REFERENCE_NAME and len(p.parts) == 1:
        return reference_config_path()
    return p


def _get(table: dict, key: str, kind, default=None, where: str = ""):
    field = f"{where}.{key}" if where else key
    if key not in table:
        if default is None:
            raise ParseError(f"missing field '{field}'")
        return default
    val = table[key]
    if kind is float and isinstance(val, int) and not isinstance(val, bool):
        val = float(val)
    if not isinstance(val, kind) or isinstance(val, bool) and kind is not bool:
        raise ParseError(f"field '{field}' must be {getattr(kind, '__name__', kind)}, got {type(val).__name__}")
    return val


def _density(spec: dict, where: str):
    if not isinstance(spec, dict):
        raise ParseError(f"field '{where}' must be a table")
    family = _get(spec, "family", str, where=where)
    if family == "gaussian":
        return Gaussian(_get(spec, "mean", float, where=where), _get(spec, "variance", float, where=where))
    if family == "tabulated":
        return Tabulated(_get(spec, "grid", list, where=where), _get(spec, "log_density", list, where=where))
    raise ParseError(f"field '{where}.family' must be 'gaussian' or 'tabulated', got {family!r}")


def _density_dict(d) -> dict:
    if isinstance(d, Gaussian):
        return {"family": "gaussian", "mean": d.mean, "variance": d.variance}
    return {"family": "tabulated", "grid": [float(x) for x in d.grid], "log_density": [float(x) for x in d.log_density]}


def _parse_mode(text: str, n: int) -> list[DetectorMode]:
    m = re.fullmatch(r"(centralized|isolated|distributed)(?::(\d+))?", text.strip())
    if not m:
        raise ParseError(f"field 'detection.modes' has unknown mode {text!r}")
    kind, sensor = m.group(1), m.group(2)
    if kind == "centralized":
        if sensor is not None:
            raise ParseError("centralized mode takes no sensor index")
        return [DetectorMode("centralized")]
    if sensor is None:
        return [DetectorMode(kind, i) for i in range(n)]
    if int(sensor) >= n:
        raise ValidationError("detection.modes", f"sensor {sensor} out of range")
    return [DetectorMode(kind, int(sensor))]


def mode_label(mode: DetectorMode) -> str:
    return mode.kind if mode.sensor is None else f"{mode.kind}:{mode.sensor}"


def parse_modes(items, n: int) -> tuple:
    out = []
    for item in items:
        for mode in _parse_mode(item, n):
            if mode not in out:
                out.append(mode)
    return tuple(out)


def config_from_dict(raw: dict) -> ExperimentConfig:
    """Build and validate a config from the parsed TOML (or manifest) dict."""
    net = _get(raw, "network", dict)
    n = _get(net, "nodes", int, where="network")
    edges_raw = net.get("edges", "complete")
    if edges_raw == "complete":
        edges = [(i, j) for i in range(n) for j in range(i + 1, n)]
    elif edges_raw == "path":
        edges = [(i, i + 1) for i in range(n - 1)]
    elif isinstance(edges_raw, list):
        edges = edges_raw
    else:
        raise ParseError("field 'network.edges' must be a list of pairs, 'complete' or 'path'")
    try:
        graph = build_graph(n, edges)
    except DisconnectedGraph as exc:
        raise ValidationError("connectivity", str(exc)) from exc
    except InvalidEdge as exc:
        raise ValidationError("network.edges", str(exc)) from exc

    dist_raw = net.get("distribution", {"kind": "uniform_enumerated"})
    kind = _get(dist_raw, "kind", str, where="network.distribution")
    try:
        if kind == "uniform_enumerated":
            dist = uniform_distribution(enumerate_matchings(graph), graph)
        elif kind == "explicit":
            entries = _get(dist_raw, "entries", list, where="network.distribution")
            dist = explicit_distribution(graph, [(e["partner"], e["weight"]) for e in entries])
        elif kind == "sequential":
            dist = SequentialMatchingSampler(graph)
        else:
            raise ParseError(f"field 'network.distribution.kind' has unknown value {kind!r}")
    except (KeyError, TypeError) as exc:
        raise ParseError(f"field 'network.distribution.entries' is malformed: {exc}") from exc
    except GossipQCDError as exc:
        if isinstance(exc, ParseError):
            raise
        raise ValidationError("network.distribution", str(exc)) from exc
    if dist.enumerated and not check_irreducible_aperiodic(averaged_matrix(dist)):
        raise ValidationError("irreducibility", "averaged matrix is not irreducible and aperiodic")

    obs = _get(raw, "observations", dict)
    sensors_raw = _get(obs, "sensors", list, where="observations")
    if len(sensors_raw) != n:
        raise ValidationError("observations.sensors", f"{len(sensors_raw)} sensors for {n} nodes")
    pairs = []
    for k, s in enumerate(sensors_raw):
        where = f"observations.sensors[{k}]"
        try:
            pairs.append(SensorDensityPair(_density(s.get("pre"), where + ".pre"), _density(s.get("post"), where + ".post")))
        except NondistinguishablePair as exc:
            raise ValidationError("kl_positivity", f"sensor {k}: {exc}") from exc
        except GossipQCDError as exc:
            if isinstance(exc, ParseError):
                raise
            raise ValidationError(where, str(exc)) from exc
    model = ObservationModel(tuple(pairs))

    det = _get(raw, "detection", dict)
    rho = _get(det, "rho", float, where="detection")
    if not 0 < rho < 1:
        raise ValidationError("rho", f"must lie in (0, 1), got {rho!r}")
    gamma = _get(det, "gamma", float, 6.0, where="detection")
    if not gamma >= 0:
        raise ValidationError("gamma", f"must be >= 0, got {gamma!r}")
    modes = parse_modes(_get(det, "modes", list, ["centralized", "isolated", "distributed"], where="detection"), n)
    thr_raw = det.get("thresholds", {"log10_start": 1.0, "log10_stop": 4.0, "count": 7})
    if isinstance(thr_raw, dict):
        thresholds = log_spaced_thresholds(
            float(thr_raw.get("log10_start", 1.0)), float(thr_raw.get("log10_stop", 4.0)), int(thr_raw.get("count", 7))
        )
    elif isinstance(thr_raw, list):
        thresholds = tuple(float(a) for a in thr_raw)
    else:
        raise ParseError("field 'detection.thresholds' must be a list or a log10 range table")
    if any(b <= a for a, b in zip(thresholds, thresholds[1:])) or any(a <= 0 for a in thresholds):
        raise ValidationError("thresholds", "must be positive and strictly increasing")

    sim = raw.get("simulation", {})
    ana = raw.get("analysis", {})
    seed = sim.get("seed")
    if seed is not None and (not isinstance(seed, int) or isinstance(seed, bool) or seed < 0):
        raise ValidationError("simulation.seed", "must be a non-negative integer")
    kwargs = dict(
        trials_per_threshold=_get(sim, "trials_per_threshold", int, 100_000, where="simulation"),
        max_horizon=_get(sim, "max_horizon", int, 2_000, where="simulation"),
        censor_cap=_get(sim, "censor_cap", float, 1e-3, where="simulation"),
        horizon_limit=_get(sim, "horizon_limit", int, 64_000, where="simulation"),
        block_size=_get(sim, "block_size", int, 4096, where="simulation"),
        window=_get(ana, "window", int, 15, where="analysis"),
        gamma_grid=tuple(float(g) for g in _get(ana, "gamma_grid", list, [float(g) for g in range(0, 61, 2)], where="analysis")),
        tail_eps=_get(ana, "tail_eps", float, 1e-10, where="analysis"),
    )
    for key in ("trials_per_threshold", "max_horizon", "block_size", "window"):
        if kwargs[key] < 1:
            raise ValidationError(key, "must be >= 1")
    if not 0 <= kwargs["censor_cap"] < 1:
        raise ValidationError("censor_cap", "must lie in [0, 1)")
    return ExperimentConfig(
        graph=graph,
        distribution=dist,
        model=model,
        rho=rho,
        gamma=gamma,
        modes=modes,
        thresholds=thresholds,
        master_seed=seed,
        **kwargs,
    )


def load_config(path) -> ExperimentConfig:
    path = resolve_config_path(path)
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc.strerror}") from exc
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ParseError(f"{path}: {exc}") from exc
    return config_from_dict(raw)


def config_to_dict(cfg: ExperimentConfig) -> dict[str, Any]:
    """Resolved dictionary; ``config_from_dict(config_to_dict(c))`` rebuilds
    an equivalent config."""
    dist = cfg.distribution
    if isinstance(dist, SequentialMatchingSampler):
        dist_d: dict = {"kind": "sequential"}
    else:
        dist_d = {
            "kind": "explicit",
            "entries": [{"partner": list(m.partner), "weight": float(w)} for m, w in dist.entries],
        }
    sim = {
        "trials_per_threshold": cfg.trials_per_threshold,
        "max_horizon": cfg.max_horizon,
        "censor_cap": cfg.censor_cap,
        "horizon_limit": cfg.horizon_limit,
        "block_size": cfg.block_size,
    }
    if cfg.master_seed is not None:
        sim["seed"] = cfg.master_seed
    return {
        "network": {
            "nodes": cfg.graph.node_count,
            "edges": [list(e) for e in sorted(cfg.graph.edges)],
            "distribution": dist_d,
        },
        "observations": {
            "sensors": [{"pre": _density_dict(p.pre_change), "post": _density_dict(p.post_change)} for p in cfg.model.sensors]
        },
        "detection": {
            "rho": cfg.rho,
            "gamma": cfg.gamma,
            "modes": [mode_label(m) for m in cfg.all_modes()],
            "thresholds": list(cfg.thresholds),
        },
        "simulation": sim,
        "analysis": {"window": cfg.window, "gamma_grid": list(cfg.gamma_grid), "tail_eps": cfg.tail_eps},
    }


def with_seed(cfg: ExperimentConfig, seed: Optional[int]) -> ExperimentConfig:
    from dataclasses import replace

    return cfg if seed is None else replace(cfg, master_seed=int(seed))
