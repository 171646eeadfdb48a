import math

import numpy as np
import pytest

from gesture_sindy.analysis import (
    derived_target,
    hooke_linearity,
    nonlinearity_census,
    percentile_fit,
    portrait_data,
    target_correlation,
)
from gesture_sindy.features import polynomial_library
from gesture_sindy.kinematics import GestureToken
from gesture_sindy.oscillators import virtual_target
from gesture_sindy.pipeline import CorpusSpec, fit_token, generate_synthetic_corpus


def make_token(x, a, token_id="t-0", channel="TT", v=None):
    x = np.asarray(x, dtype=float)
    a = np.asarray(a, dtype=float)
    if v is None:
        v = np.zeros_like(x)
    return GestureToken(token_id=token_id, channel=channel, x=x, v=v, a=a,
                        sample_rate=100.0, t0=0.0, speaker="", status="kept")


class TestHookeLinearity:
    def test_exact_line(self):
        x = np.linspace(-1.0, 1.0, 20)
        score = hooke_linearity(x, -1600.0 * x + 3.0)
        assert score.r2 == pytest.approx(1.0, abs=1e-12)
        assert score.slope == pytest.approx(-1600.0)
        assert score.intercept == pytest.approx(3.0)
        assert not score.degenerate

    def test_curvature_lowers_score(self):
        x = np.linspace(-1.0, 1.0, 200)
        pure = hooke_linearity(x, -x)
        bent = hooke_linearity(x, -x + 0.9 * x ** 3)
        assert bent.r2 < pure.r2 < 1.0 + 1e-12

    def test_degenerate_inputs(self):
        x = np.linspace(0.0, 1.0, 10)
        flat = hooke_linearity(x, np.zeros(10))
        assert flat.degenerate and math.isnan(flat.r2)
        frozen = hooke_linearity(np.zeros(10), x)
        assert frozen.degenerate

    def test_input_validation(self):
        with pytest.raises(ValueError):
            hooke_linearity(np.zeros(3), np.zeros(4))
        with pytest.raises(ValueError):
            hooke_linearity(np.zeros(2), np.zeros(2))


class TestCensus:
    def test_hand_built_fractions(self):
        x = np.linspace(-1.0, 1.0, 50)
        linear = make_token(x, -2.0 * x, token_id="a", channel="LA")
        curved = make_token(x, -x + 2.0 * x ** 3, token_id="b", channel="LA")
        census = nonlinearity_census([linear, curved], cutoffs=(0.95,))
        block = census["channels"]["LA"]
        assert block["n"] == 2
        assert block["fractions"]["0.95"]["above"] == 0.5
        assert block["fractions"]["0.95"]["below"] == 0.5
        assert census["overall"]["n"] == 2

    def test_strict_comparison_excludes_boundary(self):
        # a token scoring exactly at the cutoff lands in neither bin
        x = np.linspace(-1.0, 1.0, 50)
        exact = make_token(x, -2.0 * x, token_id="a")
        census = nonlinearity_census([exact], cutoffs=(1.0,))
        frac = census["channels"]["TT"]["fractions"]["1"]
        assert frac["above"] == 0.0
        assert frac["below"] == 0.0

    def test_degenerate_tokens_counted_separately(self):
        x = np.linspace(-1.0, 1.0, 50)
        good = make_token(x, -x, token_id="a")
        dead = make_token(x, np.zeros(50), token_id="b")
        census = nonlinearity_census([good, dead])
        block = census["channels"]["TT"]
        assert block["n"] == 1
        assert block["degenerate"] == 1


class TestDerivedTarget:
    @staticmethod
    def record(terms, order=2):
        lhs = "x''" if order == 2 else "x'"
        return {
            "order": order,
            "token_id": "t-0",
            "equations": [
                {"lhs": lhs,
                 "terms": [{"name": n, "coefficient": c} for n, c in terms.items()]},
            ],
        }

    def test_recovers_virtual_and_actual(self):
        # force equation a = -k x + k Tv has its fixed point at Tv
        k, x0, T = 2000.0, 14.65, 19.75
        Tv = virtual_target(x0, T)
        rec = self.record({"x": -k, "x'": -80.0, "1": k * Tv})
        virtual, actual = derived_target(rec, x0)
        assert virtual == pytest.approx(Tv)
        assert actual == pytest.approx(T)

    def test_no_constant_means_origin(self):
        rec = self.record({"x": -100.0})
        virtual, actual = derived_target(rec, 1.0)
        assert virtual == 0.0
        assert actual == -1.0

    def test_unusable_fit_returns_none(self):
        assert derived_target(self.record({"x'": -3.0}), 0.0) is None
        assert derived_target(self.record({"x": 0.0, "1": 5.0}), 0.0) is None


def test_target_correlation_perfect_line():
    rng = np.random.default_rng(0)
    records, tokens = [], []
    for i in range(12):
        k = rng.uniform(500.0, 3000.0)
        x0 = rng.uniform(-1.0, 1.0)
        T = x0 + rng.uniform(0.5, 1.5)
        Tv = virtual_target(x0, T)
        x = np.linspace(x0, T, 30)  # ends exactly at the true target
        tok = make_token(x, -k * (x - Tv), token_id=f"t-{i}",
                         channel="LA" if i % 2 else "TT")
        tokens.append(tok)
        records.append({
            "order": 2, "token_id": tok.token_id,
            "equations": [{"lhs": "x''", "terms": [
                {"name": "x", "coefficient": -k},
                {"name": "1", "coefficient": k * Tv},
            ]}],
        })
    result = target_correlation(records, tokens)
    assert result["overall"]["r"] == pytest.approx(1.0, abs=1e-9)
    assert result["overall"]["n"] == 12
    for block in result["channels"].values():
        assert block["r"] == pytest.approx(1.0, abs=1e-9)


def test_target_correlation_skips_unusable_fits():
    x = np.linspace(0.0, 1.0, 10)
    tok = make_token(x, -x, token_id="t-0")
    rec = {"order": 2, "token_id": "t-0",
           "equations": [{"lhs": "x''", "terms": [{"name": "x'", "coefficient": -1.0}]}]}
    result = target_correlation([rec], [tok])
    assert result["overall"]["n"] == 0


class TestPercentileFit:
    RECORDS = [
        {"token_id": "c", "r2": 0.5},
        {"token_id": "a", "r2": 0.9},
        {"token_id": "b", "r2": 0.9},
        {"token_id": "d", "r2": 0.99},
    ]

    def test_nearest_rank(self):
        assert percentile_fit(self.RECORDS, 25)["token_id"] == "c"
        assert percentile_fit(self.RECORDS, 50)["token_id"] == "a"
        assert percentile_fit(self.RECORDS, 75)["token_id"] == "b"
        assert percentile_fit(self.RECORDS, 100)["token_id"] == "d"

    def test_ties_break_by_token_id(self):
        # equal r2 orders lexicographically, so rank 2 is "a"
        assert percentile_fit(self.RECORDS, 50)["token_id"] == "a"

    def test_small_percentile_clamps_to_first(self):
        assert percentile_fit(self.RECORDS, 1)["token_id"] == "c"

    def test_bounds(self):
        with pytest.raises(ValueError):
            percentile_fit(self.RECORDS, 0)
        with pytest.raises(ValueError):
            percentile_fit(self.RECORDS, 101)
        with pytest.raises(ValueError):
            percentile_fit([], 50)


def test_portrait_data_columns():
    tokens, _ = generate_synthetic_corpus(CorpusSpec(n_linear=1, n_cubic=0, seed=4))
    tok = tokens[0]
    bare = portrait_data(tok)
    assert list(bare) == ["x", "v", "a"]
    assert np.array_equal(bare["x"], tok.x)
    fit = fit_token(tok, polynomial_library(1))
    full = portrait_data(tok, fit)
    assert list(full) == ["x", "v", "a", "x_pred", "v_pred", "a_pred"]
    assert len(full["x_pred"]) == len(tok.x)
    # the resimulation tracks the data closely on a clean token
    assert np.max(np.abs(full["x_pred"] - tok.x)) < 0.05


def test_portrait_data_accepts_record_dict():
    import json
    import tempfile

    from gesture_sindy.pipeline import read_fit_reports, write_fit_reports

    tokens, _ = generate_synthetic_corpus(CorpusSpec(n_linear=1, n_cubic=0, seed=4))
    tok = tokens[0]
    fit = fit_token(tok, polynomial_library(1))
    with tempfile.NamedTemporaryFile(suffix=".jsonl", delete=False) as fh:
        path = fh.name
    write_fit_reports(path, [fit])
    record = read_fit_reports(path)[0]
    cols = portrait_data(tok, record)
    assert "x_pred" in cols and len(cols["x_pred"]) == len(tok.x)
