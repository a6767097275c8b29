import json
import threading
import time

import httpx
import numpy as np
import pytest

from restl.rl.backends import (
    GeneratorError,
    HttpGenerator,
    PolicyBackend,
    ReferenceMutationGenerator,
    candidate_set,
    parse_candidates,
)
from restl.rl.policy import GrammarPolicy, GrammarSpec
from restl.stl import parse


def _client(handler):
    return httpx.Client(transport=httpx.MockTransport(handler))


def test_mock_endpoint_text():
    seen = []

    def handler(request):
        seen.append(json.loads(request.content))
        return httpx.Response(200, json={"choices": [{"text": "G[0,5](x > 1)"}]})

    gen = HttpGenerator("http://gen", client=_client(handler), batch_n=False, backoff=0)
    assert gen.generate("keep x high", 3, seed=10) == ["G[0,5](x > 1)"] * 3
    assert len(seen) == 3
    assert sorted(p["seed"] for p in seen) == [10, 11, 12]
    assert all("keep x high" in p["prompt"] and p["n"] == 1 for p in seen)


def test_timeout_fails_after_three_attempts():
    calls = []

    def handler(request):
        calls.append(1)
        raise httpx.ReadTimeout("slow", request=request)

    gen = HttpGenerator("http://gen", client=_client(handler), attempts=3, backoff=0)
    with pytest.raises(GeneratorError, match="3 attempts"):
        gen.generate("x", 2, seed=0)
    assert len(calls) == 3


def test_retry_recovers_from_server_error():
    calls = []

    def handler(request):
        calls.append(1)
        if len(calls) < 2:
            return httpx.Response(503)
        return httpx.Response(200, json={"choices": [{"text": "x > 1"}, {"text": "y < 2"}]})

    gen = HttpGenerator("http://gen", client=_client(handler), backoff=0)
    assert gen.generate("x", 2, seed=0) == ["x > 1", "y < 2"]
    assert len(calls) == 2


def test_malformed_body_is_retried_then_fails():
    gen = HttpGenerator("http://gen", client=_client(lambda r: httpx.Response(200, json={"oops": 1})), backoff=0)
    with pytest.raises(GeneratorError):
        gen.generate("x", 1, seed=0)


def test_bearer_token_from_environment(monkeypatch):
    headers = []

    def handler(request):
        headers.append(request.headers.get("authorization"))
        return httpx.Response(200, json={"choices": [{"text": "x > 1"}]})

    gen = HttpGenerator("http://gen", client=_client(handler), token_env="TEST_GEN_TOKEN")
    monkeypatch.delenv("TEST_GEN_TOKEN", raising=False)
    gen.generate("x", 1, 0)
    monkeypatch.setenv("TEST_GEN_TOKEN", "s3cret")
    gen.generate("x", 1, 0)
    assert headers == [None, "Bearer s3cret"]


def test_prompt_template_needs_placeholder():
    with pytest.raises(ValueError):
        HttpGenerator("http://gen", prompt_template="no slot here")


def test_concurrency_is_bounded():
    active, peak = [0], [0]
    lock = threading.Lock()

    def handler(request):
        with lock:
            active[0] += 1
            peak[0] = max(peak[0], active[0])
        time.sleep(0.02)
        with lock:
            active[0] -= 1
        return httpx.Response(200, json={"choices": [{"text": "x > 1"}]})

    gen = HttpGenerator("http://gen", client=_client(handler), batch_n=False, max_concurrency=3)
    assert len(gen.generate("x", 9, 0)) == 9
    assert 1 < peak[0] <= 3


def test_candidate_set_keeps_at_most_k_with_provenance():
    texts = ["G[0,5](x > 1)", "F[0,5](x > 1)", "x > 1 & y < 2", "not a formula", "G[0,5](x > 1)"]

    def handler(request):
        n = json.loads(request.content)["n"]
        return httpx.Response(200, json={"choices": [{"text": t} for t in texts[:n]]})

    gen = HttpGenerator("http://gen", client=_client(handler), name="mock-llm")
    with pytest.warns(UserWarning):
        cs, parsed = candidate_set(gen, "x", n=2, k=3, seed=0)
    assert len(cs.candidates) <= 3 and cs.provenance == "mock-llm"
    cs, parsed = candidate_set(gen, "x", n=5, k=3, seed=0)
    assert len(cs.candidates) == 3 and len(parsed.failures) == 1


def test_parse_candidates_splits_failures():
    parsed = parse_candidates(["x > 1", "G[3,1](x > 1)", "))"])
    assert parsed.formulas == (parse("x > 1"),)
    assert len(parsed.failures) == 2


def test_reference_mutation_generator():
    ref = parse("G[0,10]((speed < 40) & (rpm > 5))")
    gen = ReferenceMutationGenerator({"keep it slow": ref})
    a = gen.generate("keep it slow", 20, seed=1)
    assert a == gen.generate("keep it slow", 20, seed=1)
    assert a != gen.generate("keep it slow", 20, seed=2)
    formulas = [parse(t) for t in a]
    assert ref in formulas and len(set(a)) > 3
    with pytest.raises(GeneratorError):
        gen.generate("unknown input", 3, 0)


def test_policy_backend():
    spec = GrammarSpec(max_depth=2)
    policy = GrammarPolicy(spec, np.random.default_rng(0).normal(size=GrammarPolicy(spec).n_params))
    backend = PolicyBackend(policy)
    out = backend.generate("x", 5, seed=3)
    assert out == backend.generate("x", 5, seed=3)
    assert all(parse(t) for t in out)
