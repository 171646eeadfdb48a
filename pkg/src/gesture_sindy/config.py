"""INI configuration for the command line.

Each subcommand reads one section of the config file ([simulate],
[segment], [discover], [analyze], [synth]). Keys are validated
strictly: unknown keys, unknown names, and missing input paths are
rejected before any work starts. Numeric defaults follow the standard
discovery protocol (thresholds 0.001/0.01/0.1, ridge weight 0.05,
relaxation 1.0, 80/20 split).
"""

import configparser
import hashlib
import math
import os
from dataclasses import dataclass

from . import features
from .errors import ConfigError
from .kinematics import CHANNELS, MAX_DURATION, PEAK_PROMINENCE
from .oscillators import MODEL_FORMS, ActivationSchedule, OscillatorParams, critical_damping
from .pipeline import CorpusSpec, DEFAULT_ALPHA, DEFAULT_NU, DEFAULT_THRESHOLDS

__all__ = [
    "load_config",
    "extract_simulate",
    "extract_segment",
    "extract_discover",
    "extract_analyze",
    "extract_synth",
    "make_library",
    "SimulateJob",
    "SegmentJob",
    "DiscoverJob",
    "AnalyzeJob",
    "SynthJob",
]


def load_config(path):
    """Read an INI file; returns (parser, sha256 of the raw bytes)."""
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        parser.read_string(raw.decode("utf-8"))
    except (UnicodeDecodeError, configparser.Error) as exc:
        raise ConfigError(f"bad config {path}: {exc}") from None
    return parser, hashlib.sha256(raw).hexdigest()


def _section(parser, name, allowed):
    if not parser.has_section(name):
        raise ConfigError(f"config is missing the [{name}] section")
    section = dict(parser.items(name))
    unknown = sorted(set(section) - set(allowed))
    if unknown:
        raise ConfigError(f"unknown key(s) in [{name}]: {', '.join(unknown)}")
    return section


def _get_float(section, name, key, default=None):
    if key not in section:
        if default is None:
            raise ConfigError(f"[{name}] is missing required key {key}")
        return float(default)
    try:
        value = float(section[key])
    except ValueError:
        raise ConfigError(f"[{name}] {key} must be a number, got {section[key]!r}") from None
    if not math.isfinite(value):
        raise ConfigError(f"[{name}] {key} must be finite")
    return value


def _get_int(section, name, key, default=None):
    if key not in section:
        if default is None:
            raise ConfigError(f"[{name}] is missing required key {key}")
        return int(default)
    try:
        return int(section[key])
    except ValueError:
        raise ConfigError(f"[{name}] {key} must be an integer, got {section[key]!r}") from None


def _get_list(section, key, default):
    if key not in section:
        return list(default)
    return [item.strip() for item in section[key].split(",") if item.strip()]


def _get_float_list(section, name, key, default):
    items = _get_list(section, key, [str(v) for v in default])
    try:
        return tuple(float(item) for item in items)
    except ValueError:
        raise ConfigError(f"[{name}] {key} must be a comma list of numbers") from None


def _get_range(section, name, key, default):
    if key not in section:
        return tuple(default)
    text = section[key]
    parts = text.split(":")
    if len(parts) == 1:
        parts = [parts[0], parts[0]]
    if len(parts) != 2:
        raise ConfigError(f"[{name}] {key} must be 'lo:hi', got {text!r}")
    try:
        lo, hi = float(parts[0]), float(parts[1])
    except ValueError:
        raise ConfigError(f"[{name}] {key} must be 'lo:hi' numbers, got {text!r}") from None
    if not (math.isfinite(lo) and math.isfinite(hi) and lo <= hi):
        raise ConfigError(f"[{name}] {key} range is invalid: {text!r}")
    return lo, hi


def _existing_path(section, name, key, required=True):
    value = section.get(key)
    if not value:
        if required:
            raise ConfigError(f"[{name}] is missing required key {key}")
        return None
    if not os.path.exists(value):
        raise ConfigError(f"[{name}] {key}: path does not exist: {value}")
    return value


def _channels(section, name):
    channels = tuple(_get_list(section, "channels", CHANNELS))
    for channel in channels:
        if channel not in CHANNELS:
            raise ConfigError(f"[{name}] unknown channel {channel!r}")
    if not channels:
        raise ConfigError(f"[{name}] channels must not be empty")
    return channels


def make_library(spec, order, section="discover"):
    """Build a feature library from a spec string.

    ``poly:N`` is the full polynomial library of degree N; ``custom:``
    followed by comma-separated term names picks terms explicitly.
    """
    spec = spec.strip()
    if spec.startswith("poly:"):
        try:
            degree = int(spec[5:])
        except ValueError:
            raise ConfigError(f"[{section}] bad library spec {spec!r}") from None
        try:
            return spec, features.polynomial_library(degree, arity=order)
        except ValueError as exc:
            raise ConfigError(f"[{section}] {exc}") from None
    if spec.startswith("custom:"):
        names = [part.strip() for part in spec[7:].split(",") if part.strip()]
        if not names:
            raise ConfigError(f"[{section}] empty custom library: {spec!r}")
        try:
            return spec, features.custom_library(names, arity=order)
        except ValueError as exc:
            raise ConfigError(f"[{section}] {exc}") from None
    raise ConfigError(
        f"[{section}] library must be 'poly:N' or 'custom:terms', got {spec!r}"
    )


@dataclass(frozen=True)
class SimulateJob:
    model: str
    combos: tuple
    activation: object
    t_end: float
    dt: float
    rtol: float
    atol: float


_SIMULATE_KEYS = (
    "model", "k", "b", "d", "target", "x0", "v0", "t_end", "dt",
    "activation", "ta", "tb", "tc", "td", "rtol", "atol",
)


def extract_simulate(parser):
    name = "simulate"
    section = _section(parser, name, _SIMULATE_KEYS)
    model = section.get("model", "linear").strip()
    if model not in MODEL_FORMS:
        raise ConfigError(
            f"[{name}] unknown model {model!r}; choose from "
            f"{', '.join(sorted(MODEL_FORMS))}"
        )
    sweeps = {}
    for key, default in (("k", None), ("b", None), ("d", "0"), ("target", "0"),
                         ("x0", None), ("v0", "0")):
        raw = section.get(key, default)
        if raw is None:
            raise ConfigError(f"[{name}] is missing required key {key}")
        values = []
        for item in str(raw).split(","):
            item = item.strip()
            if key == "b" and item == "critical":
                values.append("critical")
                continue
            try:
                values.append(float(item))
            except ValueError:
                raise ConfigError(f"[{name}] {key} has a bad value {item!r}") from None
        sweeps[key] = values
    combos = []
    for k in sweeps["k"]:
        for b in sweeps["b"]:
            for d in sweeps["d"]:
                for T in sweeps["target"]:
                    for x0 in sweeps["x0"]:
                        for v0 in sweeps["v0"]:
                            bb = critical_damping(k) if b == "critical" else b
                            try:
                                combos.append(OscillatorParams(
                                    k=k, b=bb, d=d, T=T, x0=x0, v0=v0
                                ))
                            except ValueError as exc:
                                raise ConfigError(f"[{name}] {exc}") from None
    t_end = _get_float(section, name, "t_end")
    dt = _get_float(section, name, "dt", 0.001)
    if t_end <= 0 or dt <= 0 or dt > t_end:
        raise ConfigError(f"[{name}] needs 0 < dt <= t_end")
    activation = _activation(section, name)
    return SimulateJob(
        model=model,
        combos=tuple(combos),
        activation=activation,
        t_end=t_end,
        dt=dt,
        rtol=_get_float(section, name, "rtol", 1e-8),
        atol=_get_float(section, name, "atol", 1e-10),
    )


def _activation(section, name):
    kind = section.get("activation", "none").strip()
    if kind == "none":
        return None
    if kind not in ("step", "ramped"):
        raise ConfigError(f"[{name}] unknown activation {kind!r}")
    ta = _get_float(section, name, "ta")
    tb = _get_float(section, name, "tb")
    try:
        if kind == "step":
            return ActivationSchedule(kind="step", ta=ta, tb=tb)
        tc = _get_float(section, name, "tc")
        td = _get_float(section, name, "td")
        return ActivationSchedule(kind="ramped", ta=ta, tb=tb, tc=tc, td=td)
    except ValueError as exc:
        raise ConfigError(f"[{name}] {exc}") from None


@dataclass(frozen=True)
class SegmentJob:
    recording: str
    pauses: str
    channels: tuple
    speaker: str
    max_duration: float
    prominence: float


_SEGMENT_KEYS = (
    "recording", "pauses", "channels", "speaker", "max_duration", "prominence",
)


def extract_segment(parser):
    name = "segment"
    section = _section(parser, name, _SEGMENT_KEYS)
    return SegmentJob(
        recording=_existing_path(section, name, "recording"),
        pauses=_existing_path(section, name, "pauses", required=False),
        channels=_channels(section, name),
        speaker=section.get("speaker", "").strip(),
        max_duration=_get_float(section, name, "max_duration", MAX_DURATION),
        prominence=_get_float(section, name, "prominence", PEAK_PROMINENCE),
    )


@dataclass(frozen=True)
class DiscoverJob:
    tokens: str
    order: int
    library_spec: str
    compare_specs: tuple
    thresholds: tuple
    alpha: float
    nu: float
    train_fraction: float
    seed: int
    channels: tuple
    rtol: float
    atol: float


_DISCOVER_KEYS = (
    "tokens", "order", "library", "compare_libraries", "thresholds", "alpha",
    "nu", "train_fraction", "seed", "channels", "rtol", "atol",
)


def extract_discover(parser, seed_override=None):
    name = "discover"
    section = _section(parser, name, _DISCOVER_KEYS)
    tokens = _existing_path(section, name, "tokens")
    order = _get_int(section, name, "order", 2)
    if order not in (1, 2):
        raise ConfigError(f"[{name}] order must be 1 or 2, got {order}")
    library_spec = section.get("library", "poly:1").strip()
    make_library(library_spec, order, section=name)
    compare_specs = tuple(_get_list(
        section, "compare_libraries", ["poly:1", "poly:2", "poly:3", "poly:4"]
    ))
    for spec in compare_specs:
        make_library(spec, order, section=name)
    thresholds = _get_float_list(section, name, "thresholds", DEFAULT_THRESHOLDS)
    if not thresholds or any(t < 0 or not math.isfinite(t) for t in thresholds):
        raise ConfigError(f"[{name}] thresholds must be nonnegative numbers")
    fraction = _get_float(section, name, "train_fraction", 0.8)
    if not 0.0 < fraction <= 1.0:
        raise ConfigError(f"[{name}] train_fraction must be in (0, 1]")
    seed = _get_int(section, name, "seed", 0) if seed_override is None else seed_override
    return DiscoverJob(
        tokens=tokens,
        order=order,
        library_spec=library_spec,
        compare_specs=compare_specs,
        thresholds=thresholds,
        alpha=_get_float(section, name, "alpha", DEFAULT_ALPHA),
        nu=_get_float(section, name, "nu", DEFAULT_NU),
        train_fraction=fraction,
        seed=seed,
        channels=_channels(section, name),
        rtol=_get_float(section, name, "rtol", 1e-8),
        atol=_get_float(section, name, "atol", 1e-10),
    )


@dataclass(frozen=True)
class AnalyzeJob:
    tokens: str
    fits: str
    cutoffs: tuple
    percentiles: tuple
    channels: tuple


_ANALYZE_KEYS = ("tokens", "fits", "cutoffs", "percentiles", "channels")


def extract_analyze(parser):
    name = "analyze"
    section = _section(parser, name, _ANALYZE_KEYS)
    tokens = _existing_path(section, name, "tokens")
    fits = _existing_path(section, name, "fits", required=False)
    cutoffs = _get_float_list(section, name, "cutoffs", (0.95, 0.90))
    percentiles = _get_float_list(section, name, "percentiles", (1, 5, 50, 100))
    for p in percentiles:
        if not 0.0 < p <= 100.0:
            raise ConfigError(f"[{name}] percentiles must be in (0, 100]")
    return AnalyzeJob(
        tokens=tokens,
        fits=fits,
        cutoffs=cutoffs,
        percentiles=percentiles,
        channels=_channels(section, name),
    )


@dataclass(frozen=True)
class SynthJob:
    spec: CorpusSpec


_SYNTH_KEYS = (
    "n_linear", "n_cubic", "k", "damping_ratio", "d_over_k", "x0", "amplitude",
    "sample_rate", "noise", "seed", "channels", "horizon",
)


def extract_synth(parser, seed_override=None):
    name = "synth"
    section = _section(parser, name, _SYNTH_KEYS)
    seed = _get_int(section, name, "seed", 0) if seed_override is None else seed_override
    try:
        spec = CorpusSpec(
            n_linear=_get_int(section, name, "n_linear"),
            n_cubic=_get_int(section, name, "n_cubic", 0),
            k_range=_get_range(section, name, "k", (500.0, 2500.0)),
            damping_ratio_range=_get_range(section, name, "damping_ratio", (0.02, 0.1)),
            d_over_k_range=_get_range(section, name, "d_over_k", (0.5, 0.95)),
            x0_range=_get_range(section, name, "x0", (-0.5, 0.5)),
            amplitude_range=_get_range(section, name, "amplitude", (0.6, 1.0)),
            sample_rate=_get_float(section, name, "sample_rate", 160.0),
            noise=_get_float(section, name, "noise", 0.0),
            seed=seed,
            channels=_channels(section, name),
            horizon=_get_float(section, name, "horizon", 0.5),
        )
    except ValueError as exc:
        raise ConfigError(f"[{name}] {exc}") from None
    return SynthJob(spec=spec)
