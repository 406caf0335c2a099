import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from misgender_meta.corpus import DecodeParams
from misgender_meta.model_client import (
    CapabilityError, MockModel, MockModelSpec, RemoteModel, ScoreResult, TransportError,
    derive_seed, filter_distribution, perplexity, serve_mock,
)

SPEC = {
    "vocabulary": ["a", "b", "c", "d", "."],
    "order": 2,
    "conditionals": [
        {"context": [], "probs": [0.2, 0.2, 0.2, 0.2, 0.2]},
        {"context": ["a"], "probs": {"b": 0.5, "c": 0.3, "d": 0.15, ".": 0.05}},
    ],
}


@pytest.fixture
def small():
    return MockModel(MockModelSpec.from_dict(SPEC), "small")


def naive_filter(p, k, top_p):
    """Reference: sort, keep k, then smallest prefix of the renormalized top-k reaching top_p."""
    idx = sorted(range(len(p)), key=lambda i: (-p[i], i))
    if k:
        idx = idx[:k]
    mass = sum(p[i] for i in idx)
    kept, acc = [], 0.0
    for i in idx:
        kept.append(i)
        acc += p[i] / mass
        if top_p < 1.0 and acc >= top_p - 1e-12:
            break
    out = [p[i] if i in kept else 0.0 for i in range(len(p))]
    s = sum(out)
    return [x / s for x in out]


@given(
    st.lists(st.floats(0.01, 1.0), min_size=2, max_size=12),
    st.integers(0, 12),
    st.floats(0.05, 1.0),
)
def test_filter_matches_reference(raw, k, top_p):
    p = np.array(raw) / sum(raw)
    got = filter_distribution(p, top_k=k, top_p=top_p)
    assert np.allclose(got, naive_filter(list(p), k, top_p), atol=1e-12)
    assert math.isclose(got.sum(), 1.0, abs_tol=1e-12)


def test_filters_disabled_is_identity():
    p = np.array([0.5, 0.3, 0.2])
    assert np.array_equal(filter_distribution(p, 0, 1.0), p)


def test_temperature_sharpens():
    p = np.array([0.5, 0.3, 0.2])
    cold = filter_distribution(p, temperature=0.5)
    assert np.allclose(cold, p**2 / (p**2).sum())


def test_derive_seed_is_stable():
    assert derive_seed(0, "x", 1) == derive_seed(0, "x", 1)
    assert derive_seed(0, "x", 1) != derive_seed(0, "x", 2)
    assert derive_seed(0, "x", 1) != derive_seed(1, "x", 1)


def test_score_and_perplexity(small):
    res = small.score("a b")
    assert res.tokens == ("a", "b")
    assert res.logprobs == pytest.approx((math.log(0.2), math.log(0.5)))
    assert perplexity(res) == pytest.approx(math.exp(-(math.log(0.2) + math.log(0.5)) / 2))


def test_perplexity_skips_null_positions():
    r = ScoreResult(("a", "b"), (None, math.log(0.5)))
    assert r.token_count == 1 and perplexity(r) == pytest.approx(2.0)


def test_empty_text_rejected(small):
    with pytest.raises(ValueError):
        small.score("  ")


def test_spec_must_normalize():
    bad = dict(SPEC, conditionals=[{"context": ["a"], "probs": {"b": 0.5}}])
    with pytest.raises(ValueError):
        MockModelSpec.from_dict(bad)


def test_spec_round_trip():
    spec = MockModelSpec.from_dict(SPEC)
    again = MockModelSpec.from_dict(spec.to_dict())
    assert again.vocabulary == spec.vocabulary
    for ctx, vec in spec.conditionals.items():
        assert np.allclose(again.conditionals[ctx], vec)


def test_sampling_is_seeded_and_order_free(small):
    params = DecodeParams(top_k=0, top_p=1.0, max_tokens=6, num_samples=4, seed=3)
    first = small.generate("a", params, "c")
    again = small.generate("a", params, "c")
    assert [g.text for g in first] == [g.text for g in again]
    assert [g.seed for g in first] == [derive_seed(3, "a", i) for i in range(4)]


@settings(deadline=None, max_examples=10)
@given(st.integers(0, 2**31))
def test_first_token_frequencies(seed):
    model = MockModel(MockModelSpec.from_dict(SPEC))
    params = DecodeParams(top_k=0, top_p=1.0, max_tokens=1, num_samples=1)
    draws = [model.sample_completion("a", params, seed + i) for i in range(2000)]
    # b has mass 0.5; a 5-sigma band is about +/- 0.056
    assert abs(draws.count("b") / 2000 - 0.5) < 0.06


def test_top_k_one_is_greedy(small):
    params = DecodeParams(top_k=1, top_p=1.0, max_tokens=1, num_samples=3)
    assert {g.text for g in small.generate("a", params)} == {"b"}


def test_next_token_distribution(small):
    dist = small.next_token_distribution("x y a")
    assert dist["b"] == pytest.approx(0.5) and sum(dist.values()) == pytest.approx(1.0)


def test_wire_protocol_matches_local(small):
    server = serve_mock(small, first_token_logprob=True)
    try:
        url = f"http://127.0.0.1:{server.server_address[1]}"
        remote = RemoteModel(url, "small", timeout_ms=5000)
        local = small.score("a b c")
        got = remote.score("a b c")
        assert got.tokens == local.tokens and got.logprobs == pytest.approx(local.logprobs)
        params = DecodeParams(top_k=2, top_p=0.9, max_tokens=5, num_samples=3, seed=11)
        assert [g.text for g in remote.generate("a", params, "c")] == [g.text for g in small.generate("a", params, "c")]
        with pytest.raises(CapabilityError):
            remote.next_token_distribution("a")
        remote.close()
    finally:
        server.shutdown()


def test_null_first_logprob_is_skipped(small):
    server = serve_mock(small)
    try:
        remote = RemoteModel(f"http://127.0.0.1:{server.server_address[1]}", "small")
        res = remote.score("a b")
        assert res.logprobs[0] is None and res.token_count == 1
        with pytest.raises(CapabilityError):
            remote.score("a")
    finally:
        server.shutdown()


def test_unreachable_endpoint_raises_transport_error():
    remote = RemoteModel("http://127.0.0.1:9", "x", timeout_ms=200, retries=1, backoff_s=0.0)
    with pytest.raises(TransportError) as err:
        remote.score("a")
    assert err.value.attempts == 2


def test_from_env(monkeypatch):
    monkeypatch.delenv("MM_ENDPOINT", raising=False)
    with pytest.raises(TransportError):
        RemoteModel.from_env()
    monkeypatch.setenv("MM_ENDPOINT", "http://h:1/")
    monkeypatch.setenv("MM_MODEL", "m7")
    r = RemoteModel.from_env()
    assert (r.endpoint, r.model_id) == ("http://h:1", "m7")
