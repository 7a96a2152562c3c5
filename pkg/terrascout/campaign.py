"""
campaign.py — Campaign file parsing.

A campaign file is a YAML mapping. Matrix keys take a single value or a list:

  surface:   parabola | townsend | townsend_wide | lunar_3km | lunar_6km | <custom>
  oracle:    gp | bnn
  strategy:  snake | spiral | al
  horizon:   nn | local | global        (active learning only)
  noise:     false | true

Everything else has a default taken from the benchmark setup: per-surface
sample budgets (219 / 219 / 83 / 311), 10 seed points, 3 trials each, 100 GP
iterations, 10,000 BNN epochs, dropout 0.01, L2 weight 1e-5.

The matrix expands in a fixed order (surface, noise, strategy, horizon,
oracle), so identical text always yields identical configurations. Unknown
keys are rejected at every level. See campaign.example.yaml.
"""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass, field, replace
from typing import Any, Dict, List, Optional, Sequence, Tuple

import yaml

from . import PROJECT_NAME
from .bnn import OPTIMIZERS, TrainConfig
from .experiment import BNNSettings, GPSettings, OracleKind, TrialConfig, TrialConfigError
from .strategy import DEFAULT_SEED_POINTS, HorizonKind, HorizonSpec, StrategyKind
from .surface import BUILTIN_SURFACES, GridSpec, SurfaceError, SurfaceKind, SurfaceSpec

logger = logging.getLogger(f"{PROJECT_NAME.lower()}.campaign")

DEFAULT_TRIALS_EACH = 3
DEFAULT_PARALLELISM = 1
DEFAULT_OUTPUT_DIR = "results"

TOP_LEVEL_KEYS = {
    "surface",
    "oracle",
    "strategy",
    "horizon",
    "noise",
    "surfaces",
    "trials_each",
    "seed",
    "parallelism",
    "output_dir",
    "seed_points",
    "budget",
    "start",
    "measure_time",
    "gp",
    "bnn",
}
SURFACE_KEYS = {"kind", "x1", "x2", "raster", "noise_variance", "budget", "blind_step", "true_minimum", "noise"}
GP_KEYS = {"iterations", "length_scale", "jitter", "step_size", "normalize_inputs", "warm_start"}
BNN_KEYS = {
    "epochs",
    "learning_rate",
    "mc_passes",
    "dropout_rate",
    "l2_weight",
    "optimizer",
    "standardize",
    "warm_start",
}


class CampaignError(ValueError):
    """Invalid campaign document. ``line`` is 1-based when known."""

    def __init__(self, message: str, line: Optional[int] = None):
        super().__init__(f"line {line}: {message}" if line is not None else message)
        self.line = line


@dataclass(frozen=True)
class Campaign:
    configs: Tuple[TrialConfig, ...]
    trials_each: int = DEFAULT_TRIALS_EACH
    parallelism: int = DEFAULT_PARALLELISM
    output_dir: str = DEFAULT_OUTPUT_DIR
    base_seed: int = 0
    settings: Dict[str, Any] = field(default_factory=dict, compare=False)

    def __len__(self) -> int:
        return len(self.configs)

    def __iter__(self):
        return iter(self.configs)

    @property
    def trial_count(self) -> int:
        return len(self.configs) * self.trials_each

    def with_overrides(self, **overrides) -> Campaign:
        overrides = {k: v for k, v in overrides.items() if v is not None}
        return replace(self, **overrides)


# ---------------------------------------------------------------------------
# Value coercion
# ---------------------------------------------------------------------------


def _reject_unknown(block: dict, allowed: set, where: str) -> None:
    unknown = sorted(set(block) - allowed, key=str)
    if unknown:
        raise CampaignError(f"unknown key {unknown[0]!r} in {where}")


def _as_list(value) -> list:
    if value is None:
        return []
    return list(value) if isinstance(value, (list, tuple)) else [value]


def _as_float(value, key: str) -> float:
    # PyYAML reads "1e-6" (no dot) as a string
    if isinstance(value, bool):
        raise CampaignError(f"{key} must be a number, got {value!r}")
    try:
        return float(value)
    except (TypeError, ValueError):
        raise CampaignError(f"{key} must be a number, got {value!r}") from None


def _as_int(value, key: str, minimum: Optional[int] = None) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise CampaignError(f"{key} must be an integer, got {value!r}")
    if minimum is not None and value < minimum:
        raise CampaignError(f"{key} must be >= {minimum}, got {value}")
    return value


def _as_bool(value, key: str) -> bool:
    if isinstance(value, bool):
        return value
    if isinstance(value, str) and value.lower() in ("on", "off", "noisy", "noiseless"):
        return value.lower() in ("on", "noisy")
    raise CampaignError(f"{key} must be true or false, got {value!r}")


def _as_position(value, key: str) -> Tuple[float, float]:
    items = _as_list(value)
    if len(items) != 2:
        raise CampaignError(f"{key} must be [x1, x2], got {value!r}")
    return (_as_float(items[0], key), _as_float(items[1], key))


def _axis(value, key: str) -> Tuple[float, float, float]:
    items = _as_list(value)
    if len(items) != 3:
        raise CampaignError(f"{key} must be [min, step, max], got {value!r}")
    lo, step, hi = (_as_float(v, key) for v in items)
    return lo, step, hi


def _enum_values(values: list, enum_cls, key: str) -> list:
    out = []
    for v in values:
        try:
            member = enum_cls(str(v).lower())
        except ValueError:
            choices = ", ".join(m.value for m in enum_cls)
            raise CampaignError(f"{key}: unknown value {v!r} (choose from {choices})") from None
        if member not in out:
            out.append(member)
    return out


# ---------------------------------------------------------------------------
# Sections
# ---------------------------------------------------------------------------


def _surface_spec(name: str, block: Optional[dict], base_dir: str) -> SurfaceSpec:
    block = block or {}
    if not isinstance(block, dict):
        raise CampaignError(f"surfaces.{name} must be a mapping")
    _reject_unknown(block, SURFACE_KEYS, f"surfaces.{name}")
    base = BUILTIN_SURFACES.get(name)
    if base is None and "kind" not in block:
        raise CampaignError(f"surface {name!r} is not built in; give its kind")

    kind = SurfaceKind(base.kind) if base else None
    if "kind" in block:
        try:
            kind = SurfaceKind(str(block["kind"]).lower())
        except ValueError:
            raise CampaignError(f"surfaces.{name}.kind: unknown kind {block['kind']!r}") from None

    grid = base.grid if base else None
    if "x1" in block or "x2" in block:
        x1 = _axis(block.get("x1", block.get("x2")), f"surfaces.{name}.x1")
        x2 = _axis(block.get("x2", block.get("x1")), f"surfaces.{name}.x2")
        if x1[1] != x2[1]:
            raise CampaignError(f"surfaces.{name}: x1 and x2 must share one step, got {x1[1]} and {x2[1]}")
        try:
            grid = GridSpec(x1[0], x1[2], x2[0], x2[2], x1[1])
        except SurfaceError as e:
            raise CampaignError(f"surfaces.{name}: inconsistent grid: {e}") from None

    raster = block.get("raster")
    if raster is not None:
        raster = str(raster)
        if not os.path.isabs(raster):
            raster = os.path.join(base_dir, raster)
        if not os.path.exists(raster):
            raise CampaignError(f"surfaces.{name}.raster: file not found: {raster}")

    noise_toggles = None
    if "noise" in block:
        noise_toggles = tuple(dict.fromkeys(_as_bool(v, f"surfaces.{name}.noise") for v in _as_list(block["noise"])))

    spec = SurfaceSpec(
        name=name,
        kind=kind,
        grid=grid,
        noise_variance=_as_float(block.get("noise_variance", base.noise_variance if base else 0.02), "noise_variance"),
        raster_path=raster,
        true_minimum=_as_position(block["true_minimum"], f"surfaces.{name}.true_minimum")
        if "true_minimum" in block
        else (base.true_minimum if base else None),
        budget=_as_int(block.get("budget", base.budget if base else 219), f"surfaces.{name}.budget", 1),
        blind_step=_as_int(block.get("blind_step", base.blind_step if base else 2), f"surfaces.{name}.blind_step", 1),
        noise=noise_toggles,
    )
    if spec.noise_variance < 0:
        raise CampaignError(f"surfaces.{name}.noise_variance must be >= 0")
    if spec.noise_variance not in (0.0, 0.02):
        logger.warning(f"Surface {name}: noise variance {spec.noise_variance} is non-canonical (benchmarks use 0 or 0.02)")
    if kind is SurfaceKind.RASTER:
        if raster is None:
            raise CampaignError(f"surface {name!r} is a raster surface; set surfaces.{name}.raster")
        try:
            spec.build(False)
        except (SurfaceError, OSError) as e:
            raise CampaignError(f"surfaces.{name}: {e}") from None
    return spec


def _gp_settings(block: Optional[dict]) -> GPSettings:
    block = block or {}
    _reject_unknown(block, GP_KEYS, "gp")
    d = GPSettings()
    settings = GPSettings(
        iterations=_as_int(block.get("iterations", d.iterations), "gp.iterations", 0),
        length_scale=_as_float(block.get("length_scale", d.length_scale), "gp.length_scale"),
        jitter=_as_float(block.get("jitter", d.jitter), "gp.jitter"),
        step_size=_as_float(block.get("step_size", d.step_size), "gp.step_size"),
        normalize_inputs=_as_bool(block.get("normalize_inputs", d.normalize_inputs), "gp.normalize_inputs"),
        warm_start=_as_bool(block.get("warm_start", d.warm_start), "gp.warm_start"),
    )
    if settings.length_scale <= 0 or settings.jitter < 0 or settings.step_size <= 0:
        raise CampaignError("gp: length_scale and step_size must be > 0, jitter >= 0")
    return settings


def _bnn_settings(block: Optional[dict], seed: int) -> BNNSettings:
    block = block or {}
    _reject_unknown(block, BNN_KEYS, "bnn")
    d = TrainConfig()
    optimizer = str(block.get("optimizer", d.optimizer)).lower()
    if optimizer not in OPTIMIZERS:
        raise CampaignError(f"bnn.optimizer must be one of {', '.join(OPTIMIZERS)}, got {optimizer!r}")
    try:
        train = TrainConfig(
            epochs=_as_int(block.get("epochs", d.epochs), "bnn.epochs", 0),
            learning_rate=_as_float(block.get("learning_rate", d.learning_rate), "bnn.learning_rate"),
            mc_passes=_as_int(block.get("mc_passes", d.mc_passes), "bnn.mc_passes", 1),
            seed=seed,
            optimizer=optimizer,
            standardize=_as_bool(block.get("standardize", d.standardize), "bnn.standardize"),
            warm_start=_as_bool(block.get("warm_start", d.warm_start), "bnn.warm_start"),
        )
    except ValueError as e:
        raise CampaignError(f"bnn: {e}") from None
    defaults = BNNSettings()
    settings = BNNSettings(
        train=train,
        dropout_rate=_as_float(block.get("dropout_rate", defaults.dropout_rate), "bnn.dropout_rate"),
        l2_weight=_as_float(block.get("l2_weight", defaults.l2_weight), "bnn.l2_weight"),
    )
    if not 0 <= settings.dropout_rate < 1 or settings.l2_weight < 0:
        raise CampaignError("bnn: dropout_rate must be in [0, 1) and l2_weight >= 0")
    return settings


# ---------------------------------------------------------------------------
# Entry points
# ---------------------------------------------------------------------------


def parse_document(doc: Optional[dict], base_dir: str = ".") -> Campaign:
    """Resolve an already-loaded campaign mapping into a Campaign."""
    doc = {} if doc is None else doc
    if not isinstance(doc, dict):
        raise CampaignError("campaign document must be a mapping of keys to values")
    _reject_unknown(doc, TOP_LEVEL_KEYS, "campaign")

    surface_names = [str(s) for s in _as_list(doc.get("surface"))]
    if not surface_names:
        raise CampaignError("campaign names no surface (set 'surface')")
    definitions = doc.get("surfaces") or {}
    if not isinstance(definitions, dict):
        raise CampaignError("'surfaces' must be a mapping of surface name to settings")

    oracles = _enum_values(_as_list(doc.get("oracle", ["gp", "bnn"])), OracleKind, "oracle")
    strategies = _enum_values(_as_list(doc.get("strategy", ["snake", "spiral", "al"])), StrategyKind, "strategy")
    horizons = _enum_values(_as_list(doc.get("horizon", ["nn", "local", "global"])), HorizonKind, "horizon")
    noises = list(dict.fromkeys(_as_bool(v, "noise") for v in _as_list(doc.get("noise", False))))
    if not (oracles and strategies and noises):
        raise CampaignError("oracle, strategy and noise must not be empty")
    if StrategyKind.ACTIVE_LEARNING in strategies and not horizons:
        raise CampaignError("active learning needs at least one horizon")

    seed = _as_int(doc.get("seed", 0), "seed", 0)
    trials_each = _as_int(doc.get("trials_each", DEFAULT_TRIALS_EACH), "trials_each", 1)
    parallelism = _as_int(doc.get("parallelism", DEFAULT_PARALLELISM), "parallelism", 1)
    seed_points = _as_int(doc.get("seed_points", DEFAULT_SEED_POINTS), "seed_points", 1)
    budget = doc.get("budget")
    budget = None if budget is None else _as_int(budget, "budget", 1)
    start = None if doc.get("start") is None else _as_position(doc["start"], "start")
    measure_time = _as_bool(doc.get("measure_time", True), "measure_time")
    output_dir = str(doc.get("output_dir", DEFAULT_OUTPUT_DIR))
    gp = _gp_settings(doc.get("gp"))
    bnn = _bnn_settings(doc.get("bnn"), seed)

    configs: List[TrialConfig] = []
    for name in surface_names:
        spec = _surface_spec(name, definitions.get(name), base_dir)
        for noise in spec.noise or noises:
            for strategy in strategies:
                for horizon in horizons if strategy is StrategyKind.ACTIVE_LEARNING else [None]:
                    for oracle in oracles:
                        try:
                            configs.append(
                                TrialConfig(
                                    surface=spec,
                                    oracle=oracle,
                                    strategy=strategy,
                                    horizon=HorizonSpec.from_name(horizon.value) if horizon else None,
                                    step_cells=1 if horizon else spec.blind_step,
                                    noise=noise,
                                    sample_budget=budget if budget is not None else spec.budget,
                                    seed=seed,
                                    seed_points=seed_points,
                                    start=start,
                                    gp=gp,
                                    bnn=bnn,
                                    measure_time=measure_time,
                                )
                            )
                        except TrialConfigError as e:
                            raise CampaignError(f"surface {name!r}: {e}") from None

    settings = {
        "trials_each": trials_each,
        "seed": seed,
        "parallelism": parallelism,
        "output_dir": output_dir,
        "seed_points": seed_points,
    }
    logger.debug(f"Campaign resolved: {len(configs)} configs × {trials_each} trials")
    return Campaign(tuple(configs), trials_each, parallelism, output_dir, seed, settings)


def parse_campaign(text: str, base_dir: str = ".") -> Campaign:
    """Parse campaign YAML text. Raster paths resolve against ``base_dir``."""
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as e:
        mark = getattr(e, "problem_mark", None)
        line = mark.line + 1 if mark is not None else None
        problem = getattr(e, "problem", None) or str(e)
        raise CampaignError(f"syntax error: {problem}", line) from None
    return parse_document(doc, base_dir)


def load_campaign(path: str) -> Campaign:
    with open(path, "r", encoding="utf-8") as f:
        text = f.read()
    return parse_campaign(text, base_dir=os.path.dirname(os.path.abspath(path)))


def single_trial(
    surface: str,
    oracle: str,
    strategy: str,
    horizon: Optional[str] = None,
    noise: bool = False,
    budget: Optional[int] = None,
    seed: int = 0,
    extra: Optional[dict] = None,
) -> TrialConfig:
    """One TrialConfig from command-line style arguments."""
    doc: Dict[str, Any] = {"surface": surface, "oracle": oracle, "strategy": strategy, "noise": noise, "seed": seed}
    doc["horizon"] = horizon or "nn"
    if budget is not None:
        doc["budget"] = budget
    doc.update(extra or {})
    campaign = parse_document(doc)
    if len(campaign) != 1:
        raise CampaignError(f"expected exactly one trial configuration, got {len(campaign)}")
    return campaign.configs[0]


# ---------------------------------------------------------------------------
# Echo
# ---------------------------------------------------------------------------


def config_to_dict(cfg: TrialConfig) -> dict:
    """Plain mapping of a resolved configuration, for echo files."""
    spec = cfg.surface
    grid = spec.grid
    out = {
        "id": cfg.trial_id,
        "surface": {
            "name": spec.name,
            "kind": spec.kind.value,
            "x1": [grid.x1_min, grid.step, grid.x1_max] if grid else None,
            "x2": [grid.x2_min, grid.step, grid.x2_max] if grid else None,
            "raster": spec.raster_path,
            "noise_variance": spec.noise_variance,
            "true_minimum": list(spec.true_minimum) if spec.true_minimum else None,
        },
        "oracle": cfg.oracle.value,
        "strategy": cfg.strategy.value,
        "horizon": cfg.horizon.label if cfg.horizon else None,
        "step_cells": cfg.step_cells,
        "noise": cfg.noise,
        "sample_budget": cfg.sample_budget,
        "seed": cfg.seed,
        "trial": cfg.trial,
        "seed_points": cfg.seed_points,
        "start": list(cfg.start) if cfg.start else None,
        "measure_time": cfg.measure_time,
    }
    if cfg.oracle is OracleKind.GP:
        out["gp"] = {
            "iterations": cfg.gp.iterations,
            "length_scale": cfg.gp.length_scale,
            "jitter": cfg.gp.jitter,
            "step_size": cfg.gp.step_size,
            "normalize_inputs": cfg.gp.normalize_inputs,
            "warm_start": cfg.gp.warm_start,
        }
    else:
        t = cfg.bnn.train
        out["bnn"] = {
            "epochs": t.epochs,
            "learning_rate": t.learning_rate,
            "mc_passes": t.mc_passes,
            "dropout_rate": cfg.bnn.dropout_rate,
            "l2_weight": cfg.bnn.l2_weight,
            "optimizer": t.optimizer,
            "standardize": t.standardize,
            "warm_start": t.warm_start,
        }
    return out


def echo_text(settings: dict, configs: Sequence[TrialConfig]) -> str:
    doc = dict(settings)
    doc["trials"] = [config_to_dict(c) for c in configs]
    return yaml.safe_dump(doc, sort_keys=False, default_flow_style=None)
