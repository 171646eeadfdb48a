"""Per-token model discovery and corpus-level aggregation.

The pipeline fits one sparse model per gesture token: first-order fits
regress x' on functions of x with sequentially thresholded least
squares; second-order fits regress (x', x'') on functions of (x, x')
with constrained relaxed regression, the first equation pinned to
x' = x'. Every candidate threshold is scored by re-integrating the
discovered system from the token's initial state and comparing the
resimulated (x, v) against the measured signals with a
variance-weighted R^2. Corpus helpers split tokens per channel,
majority-vote an ensemble structure, re-fit it on held-out tokens,
compare feature libraries, and generate synthetic corpora with known
ground truth.
"""

import json
import math
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from . import features
from .errors import DataFormatError, EmptyModelError, IntegrationError
from .integrate import integrate, integrate_terms
from .kinematics import CHANNELS, GestureToken, estimate_derivatives
from .optimizers import (
    ConstraintSet,
    OptimizerConfig,
    SparseCoefficients,
    model_to_dict,
    refit_support,
    sr3_constrained,
    stlsq,
    threshold_sweep,
)
from .oscillators import OscillatorParams, critical_damping
from .trajectory import Trajectory

__all__ = [
    "DEFAULT_THRESHOLDS",
    "DEFAULT_ALPHA",
    "DEFAULT_NU",
    "TokenFit",
    "EnsembleModel",
    "CorpusSpec",
    "split",
    "first_equation_identity",
    "fit_token",
    "predict",
    "variance_weighted_r2",
    "ensemble",
    "refit_test",
    "library_comparison",
    "generate_synthetic_corpus",
    "fit_from_record",
    "write_fit_reports",
    "read_fit_reports",
]

DEFAULT_THRESHOLDS = (0.001, 0.01, 0.1)
DEFAULT_ALPHA = 0.05
DEFAULT_NU = 1.0

LHS_BY_ORDER = {1: ("x'",), 2: ("x'", "x''")}


@dataclass(frozen=True)
class TokenFit:
    """One discovered model for one token, with its resimulation score."""

    token_id: str
    channel: str
    order: int
    library: features.FeatureLibrary
    coefficients: SparseCoefficients
    threshold: float
    r2: float
    diverged: bool
    optimizer: str

    @property
    def structure(self):
        """Retained term names per equation, in library order."""
        names = self.library.names
        return tuple(
            tuple(names[j] for j in range(len(names)) if self.coefficients.support[j, e])
            for e in range(self.coefficients.n_equations)
        )

    def to_record(self):
        """JSON-ready dict, one line of a fit report."""
        record = model_to_dict(
            self.coefficients, self.library, LHS_BY_ORDER[self.order],
            self.threshold, self.optimizer,
        )
        record.update({
            "token_id": self.token_id,
            "channel": self.channel,
            "order": self.order,
            "r2": float(self.r2),
            "diverged": bool(self.diverged),
        })
        return record


def split(tokens, fraction=0.8, seed=0):
    """Seeded train/test split, stratified per channel.

    Each channel contributes max(1, floor(fraction * n)) tokens to the
    training side. Both halves come back sorted by token id.
    """
    if not 0.0 < fraction <= 1.0:
        raise ValueError(f"fraction must be in (0, 1], got {fraction!r}")
    rng = np.random.default_rng(seed)
    by_channel = {}
    for token in tokens:
        by_channel.setdefault(token.channel, []).append(token)
    train, test = [], []
    for channel in sorted(by_channel):
        group = sorted(by_channel[channel], key=lambda tok: tok.token_id)
        n = len(group)
        n_train = max(1, int(math.floor(fraction * n)))
        perm = rng.permutation(n)
        chosen = set(perm[:n_train].tolist())
        for i, token in enumerate(group):
            (train if i in chosen else test).append(token)
    train.sort(key=lambda tok: tok.token_id)
    test.sort(key=lambda tok: tok.token_id)
    return train, test


def first_equation_identity(library):
    """Constraints pinning equation one to x' = x'.

    Every coefficient of the first equation is fixed: 1 on the x' term
    and 0 elsewhere, so a second-order model's first row is the
    kinematic identity.
    """
    p = len(library)
    target = None
    for j, term in enumerate(library.terms):
        if term.exponents == (0, 1):
            target = j
            break
    if target is None:
        raise ValueError("library must contain the x' term to pin equation one")
    C = np.zeros((p, 2 * p))
    d = np.zeros(p)
    for j in range(p):
        C[j, j] = 1.0
        d[j] = 1.0 if j == target else 0.0
    return ConstraintSet(C=C, d=d)


def _build_targets(token, order):
    if order == 1:
        states = token.x[:, None]
        targets = token.v[:, None]
    elif order == 2:
        states = np.column_stack([token.x, token.v])
        targets = np.column_stack([token.v, token.a])
    else:
        raise ValueError(f"order must be 1 or 2, got {order!r}")
    return states, targets


def _fit_at(theta, targets, order, threshold, alpha, nu, constraints, max_iter=None):
    config = OptimizerConfig(threshold=threshold, alpha=alpha, nu=nu, max_iter=max_iter)
    if order == 1:
        return stlsq(theta, targets, config)
    return sr3_constrained(theta, targets, config, constraints)


def _simulate(coefficients, library, order, token, rtol, atol, backend):
    exps = features.exponent_matrix(library)
    n = len(token)
    dt = 1.0 / token.sample_rate
    tspan = (0.0, (n - 1) / token.sample_rate)
    if order == 1:
        y0 = [float(token.x[0])]
        coeffs = coefficients.matrix.T
    else:
        y0 = [float(token.x[0]), float(token.v[0])]
        coeffs = coefficients.matrix.T
    t, Y, F = integrate_terms(
        coeffs, exps, y0, tspan, dt, rtol=rtol, atol=atol, backend=backend
    )
    if Y.shape[0] != n:
        raise IntegrationError(
            f"resimulation produced {Y.shape[0]} samples for a {n}-sample token"
        )
    if order == 1:
        return Trajectory(t=t, x=Y[:, 0], v=F[:, 0])
    return Trajectory(t=t, x=Y[:, 0], v=Y[:, 1], a=F[:, 1])


def predict(fit, token, rtol=1e-8, atol=1e-10, backend=None):
    """Re-integrate a discovered model over a token's time grid.

    Returns a Trajectory; the velocity (order 1) or acceleration
    (order 2) column is the model right-hand side at the resimulated
    states. An unstable model raises IntegrationError.
    """
    return _simulate(
        fit.coefficients, fit.library, fit.order, token, rtol, atol, backend
    )


def variance_weighted_r2(Y, Y_pred):
    """R^2 per signal, averaged with variance weights.

    Y and Y_pred are (n,) or (n, m) arrays (or sequences of 1-D
    arrays). Zero-variance signals carry zero weight; if every signal
    is constant the result is 1.0 on an exact match and -inf otherwise.
    The weighted score can be negative when predictions do worse than
    the data mean.
    """
    Y = _as_signal_matrix(Y)
    P = _as_signal_matrix(Y_pred)
    if Y.shape != P.shape:
        raise ValueError(f"shape mismatch {Y.shape} vs {P.shape}")
    if Y.shape[0] < 2:
        raise ValueError("need at least two samples")
    sst = np.sum((Y - Y.mean(axis=0)) ** 2, axis=0)
    sse = np.sum((Y - P) ** 2, axis=0)
    weights = sst.copy()
    total = weights.sum()
    if total == 0.0:
        return 1.0 if np.array_equal(Y, P) else -math.inf
    keep = weights > 0.0
    r2 = 1.0 - sse[keep] / sst[keep]
    return float(np.sum(weights[keep] * r2) / total)


def _as_signal_matrix(Y):
    if isinstance(Y, (list, tuple)):
        Y = np.column_stack([np.asarray(col, dtype=float) for col in Y])
    else:
        Y = np.asarray(Y, dtype=float)
    if Y.ndim == 1:
        Y = Y[:, None]
    if Y.ndim != 2:
        raise ValueError("signals must form a 1-D or 2-D array")
    return Y


def _score_fit(coefficients, library, order, token, rtol, atol, backend):
    """(r2, diverged) for one candidate; -inf when resimulation fails."""
    try:
        sim = _simulate(coefficients, library, order, token, rtol, atol, backend)
    except IntegrationError:
        return -math.inf, True
    r2 = variance_weighted_r2(
        (token.x, token.v), (sim.x, sim.v)
    )
    if math.isnan(r2):
        return -math.inf, True
    return r2, False


def fit_token(token, library, order=2, thresholds=DEFAULT_THRESHOLDS,
              alpha=DEFAULT_ALPHA, nu=DEFAULT_NU, rtol=1e-8, atol=1e-10,
              backend=None, max_iter=None):
    """Discover one sparse model for one token across a threshold sweep.

    The library arity must equal the model order. Candidates whose
    resimulation blows up stay in the sweep with r2 = -inf and are
    flagged ``diverged`` if selected.
    """
    if order not in (1, 2):
        raise ValueError(f"order must be 1 or 2, got {order!r}")
    if library.arity != order:
        raise ValueError(
            f"library arity {library.arity} does not match order {order}"
        )
    states, targets = _build_targets(token, order)
    theta = features.evaluate(library, states)
    constraints = first_equation_identity(library) if order == 2 else None
    flags = {}
    candidates = []

    def fit_fn(lam):
        coeffs = _fit_at(theta, targets, order, lam, alpha, nu, constraints, max_iter)
        candidates.append(coeffs)
        return coeffs

    def score_fn(coeffs):
        r2, diverged = _score_fit(coeffs, library, order, token, rtol, atol, backend)
        flags[id(coeffs)] = diverged
        return r2

    lam, coeffs, score, _ = threshold_sweep(fit_fn, score_fn, thresholds)
    return TokenFit(
        token_id=token.token_id,
        channel=token.channel,
        order=order,
        library=library,
        coefficients=coeffs,
        threshold=lam,
        r2=score,
        diverged=flags.get(id(coeffs), False),
        optimizer="stlsq" if order == 1 else "sr3",
    )


@dataclass(frozen=True)
class EnsembleModel:
    """Majority structure over many fits plus coefficient statistics."""

    order: int
    majority_structure: tuple
    histogram: tuple
    coefficient_stats: dict
    n_fits: int

    def to_dict(self):
        return {
            "order": self.order,
            "lhs": list(LHS_BY_ORDER[self.order]),
            "majority_structure": [list(eq) for eq in self.majority_structure],
            "histogram": [
                {"structure": [list(eq) for eq in key], "count": count}
                for key, count in self.histogram
            ],
            "coefficients": self.coefficient_stats,
            "n_fits": self.n_fits,
        }


def _coefficient_stats(values):
    arr = np.asarray(values, dtype=float)
    q = np.percentile(arr, [5, 25, 50, 75, 95])
    return {
        "n": int(arr.size),
        "mean": float(arr.mean()),
        "sd": float(arr.std(ddof=1)) if arr.size > 1 else 0.0,
        "q05": float(q[0]),
        "q25": float(q[1]),
        "q50": float(q[2]),
        "q75": float(q[3]),
        "q95": float(q[4]),
    }


def ensemble(fits):
    """Majority vote over per-token model structures.

    The winning structure is the most common exact per-equation term
    set; ties prefer fewer total terms, then lexicographic order.
    Coefficient statistics are computed over every fit that retained
    the term (not only fits matching the majority structure).
    """
    fits = list(fits)
    if not fits:
        raise ValueError("need at least one fit")
    orders = {fit.order for fit in fits}
    if len(orders) != 1:
        raise ValueError("fits mix model orders")
    order = orders.pop()
    counts = Counter(fit.structure for fit in fits)
    majority = min(
        counts.items(),
        key=lambda item: (-item[1], sum(len(eq) for eq in item[0]), item[0]),
    )[0]
    histogram = tuple(sorted(
        counts.items(), key=lambda item: (-item[1], sum(len(eq) for eq in item[0]), item[0])
    ))
    lhs = LHS_BY_ORDER[order]
    pools = {}
    for fit in fits:
        names = fit.library.names
        for e in range(fit.coefficients.n_equations):
            for j, name in enumerate(names):
                if fit.coefficients.support[j, e]:
                    pools.setdefault((lhs[e], name), []).append(
                        float(fit.coefficients.matrix[j, e])
                    )
    stats = {}
    for (eq_name, term_name), values in sorted(pools.items()):
        stats.setdefault(eq_name, {})[term_name] = _coefficient_stats(values)
    return EnsembleModel(
        order=order,
        majority_structure=majority,
        histogram=histogram,
        coefficient_stats=stats,
        n_fits=len(fits),
    )


def _support_from_structure(structure, library, order):
    names = library.names
    n_eqs = len(LHS_BY_ORDER[order])
    if len(structure) != n_eqs:
        raise ValueError(
            f"structure has {len(structure)} equations, order {order} needs {n_eqs}"
        )
    support = np.zeros((len(names), n_eqs), dtype=bool)
    for e, eq_names in enumerate(structure):
        for name in eq_names:
            if name not in names:
                raise ValueError(f"structure term {name!r} not in library")
            support[names.index(name), e] = True
    return support


def refit_test(tokens, structure, library, order=2, rtol=1e-8, atol=1e-10,
               backend=None):
    """Plain least-squares re-fit of a fixed structure on held-out tokens.

    No thresholding, no constraints; the reported threshold is 0. An
    empty token list yields an empty result.
    """
    support = _support_from_structure(structure, library, order)
    fits = []
    for token in tokens:
        states, targets = _build_targets(token, order)
        theta = features.evaluate(library, states)
        coeffs = refit_support(theta, targets, support)
        r2, diverged = _score_fit(coeffs, library, order, token, rtol, atol, backend)
        fits.append(TokenFit(
            token_id=token.token_id,
            channel=token.channel,
            order=order,
            library=library,
            coefficients=coeffs,
            threshold=0.0,
            r2=r2,
            diverged=diverged,
            optimizer="refit",
        ))
    return fits


def _channel_order(tokens):
    present = {token.channel for token in tokens}
    ordered = [ch for ch in CHANNELS if ch in present]
    ordered.extend(sorted(present - set(CHANNELS)))
    return ordered


def library_comparison(tokens, libraries, order=2, thresholds=DEFAULT_THRESHOLDS,
                       alpha=DEFAULT_ALPHA, nu=DEFAULT_NU, rtol=1e-8, atol=1e-10,
                       backend=None, max_iter=None):
    """Fit every library to every channel at its best shared threshold.

    For each (library, channel) pair the threshold maximizing the mean
    resimulation R^2 across the channel's tokens is selected, and the
    summary statistics of the per-token scores at that threshold are
    reported. Returns a list of records ordered by library then
    channel. A token whose fit fails at a threshold scores -inf there.
    """
    records = []
    channels = _channel_order(tokens)
    for name, library in libraries:
        constraints = first_equation_identity(library) if order == 2 else None
        for channel in channels:
            group = sorted(
                (tok for tok in tokens if tok.channel == channel),
                key=lambda tok: tok.token_id,
            )
            if not group:
                continue
            prepared = []
            for token in group:
                states, targets = _build_targets(token, order)
                prepared.append((token, features.evaluate(library, states), targets))

            def fit_fn(lam):
                scores = []
                for token, theta, targets in prepared:
                    try:
                        coeffs = _fit_at(
                            theta, targets, order, lam, alpha, nu, constraints, max_iter
                        )
                    except EmptyModelError:
                        scores.append(-math.inf)
                        continue
                    r2, _ = _score_fit(
                        coeffs, library, order, token, rtol, atol, backend
                    )
                    scores.append(r2)
                return scores

            def score_fn(scores):
                finite = np.asarray(scores, dtype=float)
                return float(finite.mean()) if finite.size else -math.inf

            lam, scores, _, _ = threshold_sweep(fit_fn, score_fn, thresholds)
            arr = np.asarray(scores, dtype=float)
            if arr.size > 1:
                # a diverged fit scores -inf; std would warn on inf - inf
                sd = float(arr.std(ddof=1)) if np.all(np.isfinite(arr)) else float("nan")
            else:
                sd = 0.0
            records.append({
                "library": name,
                "channel": channel,
                "threshold": float(lam),
                "mean": float(arr.mean()),
                "sd": sd,
                "min": float(arr.min()),
                "max": float(arr.max()),
                "n": int(arr.size),
            })
    return records


@dataclass(frozen=True)
class CorpusSpec:
    """Recipe for a synthetic half-cycle gesture corpus.

    Each token simulates a damped spring (linear or cubic) released
    from rest at x0 toward a target one movement amplitude away, cut at
    the first velocity zero crossing, optionally position-noised, and
    re-differentiated exactly like recorded data. ``noise`` is the
    noise standard deviation as a fraction of the movement amplitude.
    """

    n_linear: int
    n_cubic: int = 0
    k_range: tuple = (500.0, 2500.0)
    damping_ratio_range: tuple = (0.02, 0.1)
    d_over_k_range: tuple = (0.5, 0.95)
    x0_range: tuple = (-0.5, 0.5)
    amplitude_range: tuple = (0.6, 1.0)
    sample_rate: float = 160.0
    noise: float = 0.0
    seed: int = 0
    channels: tuple = CHANNELS
    horizon: float = 0.5

    def __post_init__(self):
        if self.n_linear < 0 or self.n_cubic < 0 or self.n_linear + self.n_cubic == 0:
            raise ValueError("need a positive number of tokens")
        for name in ("k_range", "damping_ratio_range", "d_over_k_range",
                     "x0_range", "amplitude_range"):
            lo, hi = getattr(self, name)
            if not (math.isfinite(lo) and math.isfinite(hi) and lo <= hi):
                raise ValueError(f"bad {name}: {getattr(self, name)!r}")
        if self.k_range[0] <= 0:
            raise ValueError("stiffness range must be positive")
        if self.amplitude_range[0] <= 0:
            raise ValueError("amplitude range must be positive")
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")
        if self.noise < 0:
            raise ValueError("noise must be >= 0")
        if self.horizon <= 0:
            raise ValueError("horizon must be positive")
        if not self.channels:
            raise ValueError("need at least one channel label")


def _first_rest_index(v):
    """Index of the first velocity zero after release, snapped."""
    for i in range(1, v.size - 1):
        vi, vj = v[i], v[i + 1]
        if vi == 0.0:
            return i
        if (vi > 0) != (vj > 0):
            frac = vi / (vi - vj)
            return i + int(math.floor(frac + 0.5))
    return v.size - 1


def generate_synthetic_corpus(spec, rtol=1e-10, atol=1e-12, backend=None):
    """Simulate a corpus of half-cycle gesture tokens.

    Returns (tokens, truths): kept tokens in generation order and a
    dict token id -> ground-truth parameters. Two independent seeded
    streams drive parameters and noise, so changing ``noise`` alters
    position samples only, never the drawn dynamics or boundaries.
    """
    rng_params = np.random.default_rng([spec.seed, 0])
    rng_noise = np.random.default_rng([spec.seed, 1])
    kinds = ["linear"] * spec.n_linear + ["cubic"] * spec.n_cubic
    kinds = [kinds[i] for i in rng_params.permutation(len(kinds))]
    dt = 1.0 / spec.sample_rate
    tokens = []
    truths = {}
    for i, kind in enumerate(kinds):
        k = rng_params.uniform(*spec.k_range)
        ratio = rng_params.uniform(*spec.damping_ratio_range)
        d_over_k = rng_params.uniform(*spec.d_over_k_range)
        x0 = rng_params.uniform(*spec.x0_range)
        amplitude = rng_params.uniform(*spec.amplitude_range)
        sign = 1.0 if rng_params.integers(2) else -1.0
        b = ratio * critical_damping(k)
        T = x0 + sign * amplitude
        d = d_over_k * k if kind == "cubic" else 0.0
        params = OscillatorParams(k=k, b=b, d=d, T=T, x0=x0, v0=0.0)
        traj = integrate(
            kind, params, (0.0, spec.horizon), dt,
            rtol=rtol, atol=atol, backend=backend,
        )
        end = max(2, _first_rest_index(traj.v))
        x = traj.x[:end + 1].copy()
        if spec.noise > 0.0:
            x = x + rng_noise.normal(0.0, spec.noise * amplitude, x.size)
        v, a = estimate_derivatives(x, spec.sample_rate)
        channel = spec.channels[i % len(spec.channels)]
        token_id = f"{channel}-{i:05d}"
        tokens.append(GestureToken(
            token_id=token_id,
            channel=channel,
            x=x, v=v, a=a,
            sample_rate=spec.sample_rate,
            t0=0.0,
            speaker="synth",
        ))
        truths[token_id] = {
            "kind": kind,
            "k": float(k),
            "b": float(b),
            "d": float(d),
            "T": float(T),
            "x0": float(x0),
            "damping_ratio": float(ratio),
            "d_over_k": float(d_over_k) if kind == "cubic" else 0.0,
            "amplitude": float(amplitude),
            "noise": float(spec.noise),
        }
    return tokens, truths


def fit_from_record(record):
    """Rebuild a TokenFit from a fit-report record.

    The reconstructed library holds exactly the retained terms, which
    is enough to resimulate or inspect the model.
    """
    order = int(record["order"])
    names = set()
    for equation in record["equations"]:
        for term in equation["terms"]:
            names.add(term["name"])
    if not names:
        names = {"1"}
    library = features.custom_library(sorted(names), arity=order)
    lib_names = library.names
    lhs = LHS_BY_ORDER[order]
    matrix = np.zeros((len(library), len(lhs)))
    support = np.zeros_like(matrix, dtype=bool)
    for e, lhs_name in enumerate(lhs):
        for equation in record["equations"]:
            if equation["lhs"] != lhs_name:
                continue
            for term in equation["terms"]:
                j = lib_names.index(term["name"])
                matrix[j, e] = float(term["coefficient"])
                support[j, e] = True
    coeffs = SparseCoefficients(
        matrix=matrix, support=support,
        iterations=int(record.get("iterations", 0)),
        converged=bool(record.get("converged", True)),
    )
    return TokenFit(
        token_id=record["token_id"],
        channel=record.get("channel", ""),
        order=order,
        library=library,
        coefficients=coeffs,
        threshold=float(record.get("threshold", 0.0)),
        r2=float(record.get("r2", math.nan)),
        diverged=bool(record.get("diverged", False)),
        optimizer=record.get("optimizer", ""),
    )


def write_fit_reports(path, fits):
    """Write fits (TokenFit or record dicts) as sorted-key JSON lines."""
    with open(path, "w") as fh:
        for fit in fits:
            record = fit.to_record() if isinstance(fit, TokenFit) else fit
            fh.write(json.dumps(record, sort_keys=True) + "\n")


def read_fit_reports(path):
    """Read a fit report back into a list of record dicts."""
    records = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                records.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise DataFormatError(f"bad JSON: {exc}", path=path, line=lineno) from None
    return records
