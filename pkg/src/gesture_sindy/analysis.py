"""Post-discovery analysis of gesture dynamics.

Quantifies how linear each token's restoring force is (ordinary least
squares of acceleration on position), tabulates those scores across a
corpus, assembles plot-ready phase/force portraits, infers dynamical
targets from discovered coefficients, and picks percentile exemplar
fits. Fits are consumed as plain record dicts, the same objects that
fit reports serialize.
"""

import math
from dataclasses import dataclass

import numpy as np

from .pipeline import fit_from_record, predict

__all__ = [
    "HookeScore",
    "hooke_linearity",
    "portrait_data",
    "nonlinearity_census",
    "derived_target",
    "target_correlation",
    "percentile_fit",
]


@dataclass(frozen=True)
class HookeScore:
    """Linear fit of acceleration against position for one token."""

    r2: float
    slope: float
    intercept: float
    degenerate: bool


def hooke_linearity(x, a):
    """R^2 of the straight-line fit a ~ x.

    A perfectly linear restoring force scores 1; curvature lowers the
    score. Tokens whose acceleration (or position) has no variance are
    flagged degenerate with r2 = nan.
    """
    x = np.asarray(x, dtype=float)
    a = np.asarray(a, dtype=float)
    if x.shape != a.shape or x.ndim != 1:
        raise ValueError("x and a must be 1-D with equal length")
    if x.size < 3:
        raise ValueError("need at least 3 samples")
    sst = float(np.sum((a - a.mean()) ** 2))
    var_x = float(np.sum((x - x.mean()) ** 2))
    if sst == 0.0 or var_x == 0.0:
        return HookeScore(r2=math.nan, slope=math.nan, intercept=math.nan,
                          degenerate=True)
    slope = float(np.sum((x - x.mean()) * (a - a.mean())) / var_x)
    intercept = float(a.mean() - slope * x.mean())
    sse = float(np.sum((a - slope * x - intercept) ** 2))
    return HookeScore(
        r2=1.0 - sse / sst, slope=slope, intercept=intercept, degenerate=False
    )


def portrait_data(token, fit=None, rtol=1e-8, atol=1e-10, backend=None):
    """Aligned plot-ready columns for phase and force portraits.

    Always emits x, v, a from the token; with a fit (a TokenFit or a
    fit-report record dict), adds the resimulated x_pred, v_pred (and
    a_pred for second-order fits). Column order is fixed:
    x, v, a, x_pred, v_pred, a_pred.
    """
    columns = {"x": token.x.copy(), "v": token.v.copy(), "a": token.a.copy()}
    if fit is not None:
        if isinstance(fit, dict):
            fit = fit_from_record(fit)
        sim = predict(fit, token, rtol=rtol, atol=atol, backend=backend)
        columns["x_pred"] = sim.x.copy()
        columns["v_pred"] = sim.v.copy()
        if sim.a is not None:
            columns["a_pred"] = sim.a.copy()
    return columns


def nonlinearity_census(tokens, cutoffs=(0.95, 0.90)):
    """Fractions of tokens above/below linearity cutoffs, per channel.

    Comparisons are strict; degenerate tokens are counted separately
    and excluded from the fractions.
    """
    per_channel = {}
    for token in tokens:
        per_channel.setdefault(token.channel, []).append(
            hooke_linearity(token.x, token.a)
        )
    census = {"channels": {}, "overall": None, "cutoffs": [float(c) for c in cutoffs]}
    all_scores = []
    for channel in sorted(per_channel):
        scores = [s.r2 for s in per_channel[channel] if not s.degenerate]
        degenerate = sum(1 for s in per_channel[channel] if s.degenerate)
        census["channels"][channel] = _census_block(scores, degenerate, cutoffs)
        all_scores.extend(scores)
    total_degenerate = sum(
        census["channels"][ch]["degenerate"] for ch in census["channels"]
    )
    census["overall"] = _census_block(all_scores, total_degenerate, cutoffs)
    return census


def _census_block(scores, degenerate, cutoffs):
    n = len(scores)
    block = {"n": n, "degenerate": int(degenerate), "fractions": {}}
    for cutoff in cutoffs:
        key = f"{float(cutoff):g}"
        if n == 0:
            block["fractions"][key] = {"above": math.nan, "below": math.nan}
        else:
            above = sum(1 for s in scores if s > cutoff) / n
            below = sum(1 for s in scores if s < cutoff) / n
            block["fractions"][key] = {"above": above, "below": below}
    return block


def _equation_terms(record, lhs):
    for equation in record["equations"]:
        if equation["lhs"] == lhs:
            return {term["name"]: term["coefficient"] for term in equation["terms"]}
    raise ValueError(f"no equation with lhs {lhs!r}")


def derived_target(record, x0):
    """Virtual and actual target implied by a fit record.

    The discovered force equation's fixed point gives the virtual
    target constant/k (with k the negated coefficient of x); doubling
    its distance from the onset position recovers the actual target.
    Returns (virtual, actual) or None when the fit has no usable
    stiffness (x absent from the support or zero).
    """
    lhs = "x''" if record["order"] == 2 else "x'"
    terms = _equation_terms(record, lhs)
    k = -terms.get("x", 0.0)
    if k == 0.0:
        return None
    constant = terms.get("1", 0.0)
    virtual = constant / k
    return virtual, 2.0 * virtual - x0


def target_correlation(records, tokens):
    """Correlate model-derived targets with end-of-movement positions.

    For every fit whose token ends at a velocity zero, the empirical
    target is the token's final position sample. Returns per-channel
    and overall Pearson r with the paired values. Fits without a
    usable stiffness are skipped.
    """
    by_id = {token.token_id: token for token in tokens}
    pairs = {}
    for record in records:
        token = by_id.get(record["token_id"])
        if token is None:
            continue
        derived = derived_target(record, float(token.x[0]))
        if derived is None:
            continue
        pairs.setdefault(token.channel, []).append(
            (derived[1], float(token.x[-1]))
        )
    result = {"channels": {}, "overall": None}
    everything = []
    for channel in sorted(pairs):
        result["channels"][channel] = _correlation_block(pairs[channel])
        everything.extend(pairs[channel])
    result["overall"] = _correlation_block(everything)
    return result


def _correlation_block(pairs):
    derived = np.asarray([p[0] for p in pairs], dtype=float)
    empirical = np.asarray([p[1] for p in pairs], dtype=float)
    n = derived.size
    if n < 2 or derived.std() == 0.0 or empirical.std() == 0.0:
        r = math.nan
    else:
        r = float(np.corrcoef(derived, empirical)[0, 1])
    return {
        "r": r,
        "n": int(n),
        "derived": derived.tolist(),
        "empirical": empirical.tolist(),
    }


def percentile_fit(records, percentile):
    """Record at the nearest-rank percentile of the r2 distribution.

    Records are ordered by (r2, token_id); the nearest rank is
    ceil(p/100 * n). percentile must be in (0, 100].
    """
    records = sorted(records, key=lambda rec: (rec["r2"], rec["token_id"]))
    if not records:
        raise ValueError("need at least one record")
    if not 0.0 < percentile <= 100.0:
        raise ValueError(f"percentile must be in (0, 100], got {percentile!r}")
    rank = max(1, math.ceil(percentile / 100.0 * len(records)))
    return records[rank - 1]
