"""Candidate generators: the grammar policy, a reference mutator, and an HTTP client."""

from __future__ import annotations

import logging
import os
import random
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import List, Mapping, Optional, Protocol, Sequence, Tuple

import httpx
import numpy as np
from tenacity import RetryError, Retrying, retry_if_exception_type, stop_after_attempt, wait_exponential

from ..reward_model import CandidateSet, select_diverse_candidates
from ..stl import (
    And,
    Atomic,
    Finally,
    Formula,
    Globally,
    Interval,
    Not,
    Or,
    STLError,
    Until,
    parse,
    render,
)
from ..stl.syntax import map_atoms
from .policy import GrammarPolicy

log = logging.getLogger(__name__)

PROMPT_PLACEHOLDER = "{input}"
# Deliberately minimal: supply your own instruction text around {input}.
DEFAULT_PROMPT_TEMPLATE = "Translate into Signal Temporal Logic.\nInput: {input}\nOutput:"


class GeneratorBackend(Protocol):
    name: str

    def generate(self, x: str, n: int, seed: int) -> List[str]: ...


class GeneratorError(RuntimeError):
    pass


@dataclass(frozen=True)
class ParsedCandidates:
    formulas: Tuple[Formula, ...]
    failures: Tuple[Tuple[str, str], ...]  # (raw text, error)


def parse_candidates(texts: Sequence[str]) -> ParsedCandidates:
    ok, bad = [], []
    for t in texts:
        try:
            ok.append(parse(t))
        except STLError as exc:
            bad.append((t, str(exc)))
    return ParsedCandidates(tuple(ok), tuple(bad))


def candidate_set(backend: GeneratorBackend, x: str, n: int, k: int, seed: int) -> Tuple[CandidateSet, ParsedCandidates]:
    """Generate ``n`` samples, parse them, and keep ``k`` diverse ones."""
    parsed = parse_candidates(backend.generate(x, n, seed))
    for raw, err in parsed.failures:
        log.warning("%s produced an unparseable candidate %r: %s", backend.name, raw, err)
    chosen = select_diverse_candidates(parsed.formulas, k) if parsed.formulas else []
    return CandidateSet(x, tuple(chosen), backend.name), parsed


class PolicyBackend:
    def __init__(self, policy: GrammarPolicy, name: str = "grammar-policy"):
        self.policy = policy
        self.name = name

    def generate(self, x: str, n: int, seed: int) -> List[str]:
        rng = np.random.default_rng(seed)
        return [render(self.policy.sample(x, rng).formula) for _ in range(n)]


def _swap_temporal(f: Formula, rng: random.Random) -> Formula:
    if isinstance(f, Globally):
        return Finally(f.interval, f.child)
    if isinstance(f, Finally):
        return Globally(f.interval, f.child)
    return f


def _shift_interval(iv: Optional[Interval], rng: random.Random) -> Optional[Interval]:
    if iv is None or iv.symbolic:
        return iv
    lo = max(0.0, iv.lo + rng.choice((-1, 1, 2)))
    hi = max(lo + 1.0, iv.hi + rng.choice((-2, -1, 1, 3)))
    return Interval(lo, hi)


def _mutate(f: Formula, rng: random.Random, variables: Sequence[str]) -> Formula:
    kind = rng.randrange(6)
    if kind == 0:
        return _swap_temporal(f, rng) if isinstance(f, (Globally, Finally)) else _mutate_inner(f, rng, variables)
    if kind == 1:
        def nudge(a: Atomic) -> Atomic:
            if a.rhs is None or rng.random() < 0.5:
                return a
            return Atomic(a.lhs, a.op, a.rhs + rng.choice((-10, -5, 5, 10)))
        return map_atoms(f, nudge)
    if kind == 2:
        def flip(a: Atomic) -> Atomic:
            if a.op in ("<", "<=", ">", ">=") and rng.random() < 0.5:
                return Atomic(a.lhs, {"<": ">", "<=": ">=", ">": "<", ">=": "<="}[a.op], a.rhs)
            return a
        return map_atoms(f, flip)
    if kind == 3 and isinstance(f, (Globally, Finally, Until)):
        if isinstance(f, Until):
            return Until(_shift_interval(f.interval, rng), f.left, f.right)
        return type(f)(_shift_interval(f.interval, rng), f.child)
    if kind == 4 and variables:
        extra = Atomic.of(rng.choice(list(variables)), rng.choice(("<", ">")), rng.choice((0, 10, 50)))
        if isinstance(f, (Globally, Finally)):
            return type(f)(f.interval, And(f.child, extra))
        return And(f, extra)
    return _mutate_inner(f, rng, variables)


def _mutate_inner(f: Formula, rng: random.Random, variables: Sequence[str]) -> Formula:
    if isinstance(f, And):
        return rng.choice((f.left, f.right))
    if isinstance(f, (Globally, Finally)):
        return type(f)(f.interval, _mutate(f.child, rng, variables))
    if isinstance(f, (Or,)):
        return And(f.left, f.right)
    if isinstance(f, Atomic):
        return Not(f)
    return Finally(Interval(0, 5), f)


class ReferenceMutationGenerator:
    """Stands in for a fine-tuned generator by perturbing the known reference.

    Samples are the reference itself or one to two random edits of it
    (operator swaps, constant nudges, comparator flips, interval shifts,
    added or dropped conjuncts), so candidate sets contain realistic near
    misses without an LLM.
    """

    name = "reference-mutation"

    def __init__(self, references: Mapping[str, Formula], keep_prob: float = 0.2):
        self.references = dict(references)
        self.keep_prob = keep_prob
        self.variables = sorted({v for f in self.references.values() for v in _variables(f)})

    def generate(self, x: str, n: int, seed: int) -> List[str]:
        try:
            ref = self.references[x]
        except KeyError:
            raise GeneratorError(f"no reference registered for input {x!r}") from None
        rng = random.Random(f"{seed}:{x}")
        out = []
        for _ in range(n):
            f = ref
            if rng.random() >= self.keep_prob:
                for _ in range(rng.choice((1, 1, 2))):
                    f = _mutate(f, rng, self.variables)
            out.append(render(f))
        return out


def _variables(f: Formula):
    from ..stl import atoms

    for a in atoms(f):
        yield from a.variables


class HttpGenerator:
    """Client for a completion endpoint.

    Request ``{"prompt", "n", "temperature"}`` (plus ``"seed"``), response
    ``{"choices": [{"text": ...}]}``. A bearer token is read from the
    environment variable named by ``token_env`` when it is set. When
    ``batch_n`` is false the client issues ``n`` single-sample requests, at
    most ``max_concurrency`` at a time. Each request is retried up to
    ``attempts`` times with exponential backoff on timeouts, transport errors,
    non-success statuses and malformed bodies.
    """

    def __init__(
        self,
        url: str,
        prompt_template: str = DEFAULT_PROMPT_TEMPLATE,
        temperature: float = 0.7,
        token_env: str = "RESTL_GENERATOR_TOKEN",
        timeout: float = 30.0,
        attempts: int = 3,
        backoff: float = 0.5,
        max_concurrency: int = 4,
        batch_n: bool = True,
        client: Optional[httpx.Client] = None,
        name: str = "http",
    ):
        if PROMPT_PLACEHOLDER not in prompt_template:
            raise ValueError(f"prompt template must contain {PROMPT_PLACEHOLDER}")
        self.url = url
        self.prompt_template = prompt_template
        self.temperature = temperature
        self.token_env = token_env
        self.attempts = attempts
        self.backoff = backoff
        self.max_concurrency = max_concurrency
        self.batch_n = batch_n
        self.name = name
        self._client = client or httpx.Client(timeout=timeout)

    def _headers(self):
        token = os.environ.get(self.token_env)
        return {"Authorization": f"Bearer {token}"} if token else {}

    def _request_once(self, payload: dict) -> List[str]:
        resp = self._client.post(self.url, json=payload, headers=self._headers())
        resp.raise_for_status()
        try:
            return [str(c["text"]) for c in resp.json()["choices"]]
        except (KeyError, TypeError, ValueError) as exc:
            raise GeneratorError(f"malformed completion response: {exc!r}") from None

    def _request(self, payload: dict) -> List[str]:
        retrying = Retrying(
            stop=stop_after_attempt(self.attempts),
            wait=wait_exponential(multiplier=self.backoff, max=30),
            retry=retry_if_exception_type((httpx.TransportError, httpx.HTTPStatusError, GeneratorError)),
            reraise=False,
        )
        try:
            return retrying(self._request_once, payload)
        except RetryError as exc:
            last = exc.last_attempt.exception()
            raise GeneratorError(f"request to {self.url} failed after {self.attempts} attempts: {last!r}") from last

    def generate(self, x: str, n: int, seed: int) -> List[str]:
        prompt = self.prompt_template.replace(PROMPT_PLACEHOLDER, x)
        if self.batch_n:
            texts = self._request({"prompt": prompt, "n": n, "temperature": self.temperature, "seed": seed})
            return texts[:n]
        payloads = [{"prompt": prompt, "n": 1, "temperature": self.temperature, "seed": seed + i} for i in range(n)]
        with ThreadPoolExecutor(max_workers=self.max_concurrency) as pool:
            results = list(pool.map(self._request, payloads))
        return [t for texts in results for t in texts[:1]]

    def close(self):
        self._client.close()
