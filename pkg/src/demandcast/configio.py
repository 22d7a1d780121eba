"""Config-file and payload parsing shared by the CLI and the service layer.

Config files are YAML with nested sections (series / model / plan / train /
ae_train) mirroring the plan and training dataclasses; every CLI flag
overrides its config key.  Bad structure or values raise ConfigError, which
callers map to usage-error exits (data problems stay DataError).
"""

from __future__ import annotations

from dataclasses import fields, replace

import yaml

from .dataset import Series, generate_synthetic, load_csv, loads_csv
from .harness import ExperimentPlan
from .optimizers import RpropConfig, TrainConfig
from .presets import PRESETS, ModelSpec


class ConfigError(Exception):
    """Malformed configuration (unknown key, bad value, missing section)."""


def load_config_file(path) -> dict:
    try:
        with open(path) as fh:
            cfg = yaml.safe_load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"config file {path} is not valid YAML: {exc}") from None
    if cfg is None:
        return {}
    if not isinstance(cfg, dict):
        raise ConfigError("config file must hold a mapping at the top level")
    return cfg


def deep_merge(base: dict, override: dict) -> dict:
    """Recursive dict merge; override wins, None values are ignored."""
    out = dict(base)
    for key, value in override.items():
        if value is None:
            continue
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = deep_merge(out[key], value)
        else:
            out[key] = value
    return out


def _check_keys(section: str, d: dict, allowed) -> None:
    unknown = set(d) - set(allowed)
    if unknown:
        raise ConfigError(f"unknown {section} key(s): {', '.join(sorted(unknown))}")


def parse_windows(value) -> tuple[int, ...]:
    """Window lengths: a list, an inclusive "120:132" range, "120,126", or one int."""
    if isinstance(value, int):
        return (value,)
    if isinstance(value, str):
        try:
            if ":" in value:
                start, stop = (int(p) for p in value.split(":"))
                if stop < start:
                    raise ConfigError(f"window range {value!r} is empty")
                return tuple(range(start, stop + 1))
            return tuple(int(p) for p in value.split(","))
        except ValueError:
            raise ConfigError(
                f"cannot parse windows from {value!r}; use e.g. 120:132 or 120,126"
            ) from None
    if isinstance(value, (list, tuple)):
        try:
            return tuple(int(v) for v in value)
        except (TypeError, ValueError):
            raise ConfigError(f"window list {value!r} must hold integers") from None
    raise ConfigError(f"cannot parse windows from {value!r}")


def model_spec_from_dict(d: dict | None) -> ModelSpec:
    d = dict(d or {})
    allowed = ("preset", "name", "scheme", "hidden_sizes", "algorithm", "code_dims", "fine_tune")
    _check_keys("model", d, allowed)
    preset = d.pop("preset", None)
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError(
                f"unknown preset {preset!r}; available: {', '.join(sorted(PRESETS))}"
            )
        base = PRESETS[preset]
    else:
        base = ModelSpec(name=d.pop("name", "custom"))
    updates = {}
    if "name" in d:
        updates["name"] = str(d.pop("name"))
    if "scheme" in d:
        updates["scheme"] = str(d.pop("scheme"))
    if "hidden_sizes" in d:
        updates["hidden_sizes"] = tuple(int(h) for h in d.pop("hidden_sizes"))
    if "algorithm" in d:
        updates["algorithm"] = str(d.pop("algorithm"))
    if "code_dims" in d:
        updates["code_dims"] = tuple(int(k) for k in d.pop("code_dims"))
    if "fine_tune" in d:
        updates["fine_tune"] = bool(d.pop("fine_tune"))
    try:
        return replace(base, **updates)
    except ValueError as exc:
        raise ConfigError(f"bad model spec: {exc}") from None


def train_config_from_dict(d: dict | None) -> TrainConfig:
    d = dict(d or {})
    field_names = [f.name for f in fields(TrainConfig)]
    _check_keys("train", d, field_names)
    if "rprop" in d and d["rprop"] is not None:
        rp = dict(d["rprop"])
        _check_keys("train.rprop", rp, [f.name for f in fields(RpropConfig)])
        try:
            d["rprop"] = RpropConfig(**rp)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad rprop config: {exc}") from None
    try:
        return TrainConfig(**d)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad train config: {exc}") from None


def plan_from_config(cfg: dict) -> ExperimentPlan:
    """Build an ExperimentPlan from the model/plan/train/ae_train sections."""
    _check_keys("config", cfg, ("series", "model", "plan", "train", "ae_train", "output"))
    model = model_spec_from_dict(cfg.get("model"))
    plan_d = dict(cfg.get("plan") or {})
    allowed = ("window_lengths", "horizon", "runs_per_window", "base_seed", "workers")
    _check_keys("plan", plan_d, allowed)
    kwargs = {"model": model}
    if "window_lengths" in plan_d:
        kwargs["window_lengths"] = parse_windows(plan_d["window_lengths"])
    for key in ("horizon", "runs_per_window", "base_seed", "workers"):
        if key in plan_d:
            kwargs[key] = int(plan_d[key])
    kwargs["train"] = train_config_from_dict(cfg.get("train"))
    ae_cfg = cfg.get("ae_train")
    if ae_cfg:
        kwargs["ae_train"] = train_config_from_dict(ae_cfg)
    try:
        return ExperimentPlan(**kwargs)
    except ValueError as exc:
        raise ConfigError(f"bad plan: {exc}") from None


def series_from_source(source: dict | None) -> Series:
    """Resolve a series from {csv: path} | {csv_text: str} | {synthetic: {...}}."""
    source = dict(source or {})
    _check_keys("series", source, ("csv", "csv_text", "synthetic"))
    given = [k for k in ("csv", "csv_text", "synthetic") if source.get(k) is not None]
    if len(given) != 1:
        raise ConfigError("series needs exactly one of: csv, csv_text, synthetic")
    if source.get("csv") is not None:
        return load_csv(source["csv"])
    if source.get("csv_text") is not None:
        return loads_csv(source["csv_text"])
    synth = dict(source["synthetic"])
    _check_keys("series.synthetic", synth, ("seed", "n_months", "start_month"))
    return generate_synthetic(
        seed=int(synth.get("seed", 0)),
        n_months=int(synth.get("n_months", 176)),
        start_month=str(synth.get("start_month", "1999-01")),
    )
