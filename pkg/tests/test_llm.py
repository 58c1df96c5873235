"""LLM bridge tests: prompt rendering, transport, extraction, reports."""
from __future__ import annotations

import json

import numpy as np
import pytest
import requests
from hypothesis import given, settings
from hypothesis import strategies as st

from gpshop.errors import ConfigError
from gpshop.expr import Terminal, depth, random_tree, size, terminal_histogram
from gpshop.llm import (
    PreferenceWeights,
    PromptSpec,
    ProviderAuthError,
    ProviderConfig,
    ProviderProtocolError,
    ProviderTimeoutError,
    ReferenceHeuristic,
    build_explain_prompt,
    build_init_prompt,
    build_transfer_prompt,
    extract_heuristics,
    generate_report,
    query,
)
from gpshop.llm import provider as provider_mod
from gpshop.llm.prompts import SECTION_KEYS
from gpshop.llm.report import NARRATIVE_UNAVAILABLE
from gpshop.rules import RulePair, rules_to_text
from gpshop.sim import Scenario

FMEAN = Scenario(
    objectives=("Fmean",), lambdas=(1.0,), utilization=0.85,
    training_seeds=(1,), test_seeds=(2,),
)
MIXED = Scenario(
    objectives=("Fmean", "WTmean"), lambdas=(0.2, 0.8), utilization=0.85,
    training_seeds=(1,), test_seeds=(2,),
)
REFS = [
    ReferenceHeuristic("WIQ", "PT", label="baseline"),
    ReferenceHeuristic("(WIQ + PT) + TRANT", "PT", label="transport aware", fitness_note="strong"),
    ReferenceHeuristic("NIQ", "SLACK"),
    ReferenceHeuristic("max(WIQ, MWT)", "(PT + WKR)"),
    ReferenceHeuristic("(WIQ / W)", "min(PT, rDD)"),
]


def write_mock(tmp_path, prompt, reply: str) -> ProviderConfig:
    (tmp_path / (prompt.digest + ".txt")).write_text(reply, encoding="utf-8")
    return ProviderConfig(endpoint=f"mock:{tmp_path}")


class TestPreferenceWeights:
    def test_from_scenario_and_equation(self):
        prefs = PreferenceWeights.from_scenario(MIXED)
        assert prefs.equation() == "0.2×Fmean + 0.8×WTmean"
        assert PreferenceWeights.from_scenario(FMEAN).equation() == "Fmean"

    @pytest.mark.parametrize(
        "items",
        [
            (),
            (("Fmean", 0.5), ("Fmean", 0.5)),
            (("Bogus", 1.0),),
            (("Fmean", 0.7), ("WTmean", 0.7)),
            (("Fmean", 1.5), ("WTmean", -0.5)),
        ],
    )
    def test_validation(self, items):
        with pytest.raises(ConfigError):
            PreferenceWeights(items=items)


class TestReferenceHeuristic:
    def test_must_parse(self):
        with pytest.raises(Exception):
            ReferenceHeuristic("exp(PT)", "PT")
        with pytest.raises(Exception):
            ReferenceHeuristic("WIQ", "PT +")

    def test_from_pair_round_trip(self):
        pair = RulePair.from_text("(WIQ + PT) + TRANT", "min(PT, SLACK)")
        ref = ReferenceHeuristic.from_pair(pair, label="x")
        assert ref.pair() == pair
        assert ref.text() == "routing: ((WIQ + PT) + TRANT)\nsequencing: min(PT, SLACK)"


class TestInitPrompt:
    def test_sections_and_glossary(self):
        prompt = build_init_prompt(MIXED, REFS, PreferenceWeights.from_scenario(MIXED), 30)
        assert prompt.kind == "init"
        assert tuple(t for t, _ in prompt.sections) == SECTION_KEYS
        assert all(body.strip() for _, body in prompt.sections)
        for t in Terminal:
            assert f"- {t.name}: {t.value}" in prompt.section("reference heuristics")

    def test_objective_equation_appears_once(self):
        prompt = build_init_prompt(MIXED, REFS, PreferenceWeights.from_scenario(MIXED), 30)
        assert prompt.text.count("0.2×Fmean + 0.8×WTmean") == 1

    def test_candidate_count_contract(self):
        prompt = build_init_prompt(FMEAN, REFS, PreferenceWeights.from_scenario(FMEAN), 30)
        assert "exactly 30 candidate pairs" in prompt.text
        assert "INSIGHTS:" in prompt.section("output format")

    def test_references_verbatim(self):
        prompt = build_init_prompt(FMEAN, REFS, PreferenceWeights.from_scenario(FMEAN), 10)
        body = prompt.section("reference heuristics")
        for ref in REFS:
            assert ref.text() in body
        assert "transport aware; strong" in body

    def test_zero_shot_flagged(self):
        prompt = build_init_prompt(FMEAN, [], PreferenceWeights.from_scenario(FMEAN), 5)
        assert prompt.zero_shot
        assert "zero-shot" in prompt.section("reference heuristics")
        assert all(body.strip() for _, body in prompt.sections)

    def test_rejects_bad_count(self):
        with pytest.raises(ConfigError):
            build_init_prompt(FMEAN, REFS, PreferenceWeights.from_scenario(FMEAN), 0)

    def test_rendering_is_pure(self):
        a = build_init_prompt(MIXED, REFS, PreferenceWeights.from_scenario(MIXED), 30)
        b = build_init_prompt(MIXED, REFS, PreferenceWeights.from_scenario(MIXED), 30)
        assert a.text == b.text
        assert a.digest == b.digest
        c = build_init_prompt(MIXED, REFS, PreferenceWeights.from_scenario(MIXED), 31)
        assert c.digest != a.digest

    def test_spec_invariants(self):
        bad = (("problem context", "x"), ("reference heuristics", ""),
               ("task preferences", "y"), ("output format", "z"))
        with pytest.raises(ConfigError):
            PromptSpec(kind="init", sections=bad)
        with pytest.raises(ConfigError):
            PromptSpec(kind="init", sections=(("wrong", "x"),))


class TestTransferPrompt:
    def test_rejects_identical_scenarios(self):
        with pytest.raises(ConfigError):
            build_transfer_prompt(REFS, FMEAN, FMEAN, PreferenceWeights.from_scenario(FMEAN))

    def test_target_statistics_present(self):
        target = Scenario(
            objectives=("WTmean",), lambdas=(1.0,), utilization=0.95,
            training_seeds=(1,), test_seeds=(2,),
        )
        prompt = build_transfer_prompt(
            REFS, FMEAN, target, PreferenceWeights.from_scenario(target)
        )
        prefs_body = prompt.section("task preferences")
        assert "utilization 0.95" in prefs_body
        assert "WTmean" in prefs_body
        for step in ("1.", "2.", "3."):
            assert step in prefs_body
        for ref in REFS:
            assert ref.text() in prompt.section("reference heuristics")
        assert "exactly 5 candidate pairs" in prompt.text  # defaults to len(refs)

    def test_explicit_count(self):
        target = Scenario(
            objectives=("Tmax",), lambdas=(1.0,), utilization=0.85,
            training_seeds=(1,), test_seeds=(2,),
        )
        prompt = build_transfer_prompt(
            REFS, FMEAN, target, PreferenceWeights.from_scenario(target), n_requested=12
        )
        assert "exactly 12 candidate pairs" in prompt.text


class TestExplainPrompt:
    def test_genome_and_skeleton(self):
        best = RulePair.from_text("(WIQ + PT) + TRANT", "(PT + PT) + WKR")
        prompt = build_explain_prompt(best, MIXED)
        assert prompt.kind == "explain"
        assert rules_to_text(best).strip() in prompt.section("reference heuristics")
        contract = prompt.section("output format")
        for heading in (
            "## Decision logic",
            "## Dominant terminals",
            "## Preference alignment",
            "## Summary for non-experts",
        ):
            assert heading in contract
        assert "0.2×Fmean + 0.8×WTmean" in prompt.section("task preferences")


class SpyTransport:
    """Scripted replacement for provider._http_post."""

    def __init__(self, outcomes):
        self.outcomes = list(outcomes)
        self.calls = []

    def __call__(self, url, payload, headers, timeout):
        self.calls.append((url, payload, headers, timeout))
        outcome = self.outcomes.pop(0)
        if isinstance(outcome, Exception):
            raise outcome
        return outcome


def ok_reply(text="hello"):
    return (200, {"choices": [{"message": {"content": text}}]})


@pytest.fixture
def prompt():
    return build_init_prompt(FMEAN, REFS[:2], PreferenceWeights.from_scenario(FMEAN), 3)


class TestQuery:
    def test_mock_replay_is_deterministic(self, tmp_path, prompt, monkeypatch):
        monkeypatch.delenv("LLM_API_KEY", raising=False)
        monkeypatch.setattr(
            provider_mod, "_http_post",
            lambda *a, **k: pytest.fail("mock mode must not touch the network"),
        )
        cfg = write_mock(tmp_path, prompt, "canned reply\n")
        assert query(cfg, prompt) == "canned reply\n"
        assert query(cfg, prompt) == "canned reply\n"

    def test_mock_missing_reply(self, tmp_path, prompt):
        cfg = ProviderConfig(endpoint=f"mock:{tmp_path}")
        with pytest.raises(ProviderProtocolError, match="canned reply"):
            query(cfg, prompt)

    def test_auth_error_before_network(self, prompt, monkeypatch):
        monkeypatch.delenv("LLM_API_KEY", raising=False)
        spy = SpyTransport([ok_reply()])
        monkeypatch.setattr(provider_mod, "_http_post", spy)
        with pytest.raises(ProviderAuthError, match="LLM_API_KEY"):
            query(ProviderConfig(), prompt)
        assert spy.calls == []

    def test_success_and_wire_format(self, prompt, monkeypatch):
        monkeypatch.setenv("LLM_API_KEY", "sk-test")
        spy = SpyTransport([ok_reply("the reply")])
        monkeypatch.setattr(provider_mod, "_http_post", spy)
        cfg = ProviderConfig(model="gpt-4", temperature=0.7)
        assert query(cfg, prompt) == "the reply"
        url, payload, headers, timeout = spy.calls[0]
        assert url == cfg.endpoint
        assert payload["model"] == "gpt-4"
        assert payload["temperature"] == 0.7
        assert payload["messages"] == [{"role": "user", "content": prompt.text}]
        assert payload["max_tokens"] == cfg.max_reply_tokens
        assert headers["Authorization"] == "Bearer sk-test"
        assert timeout == cfg.timeout

    def test_timeout_uses_whole_retry_budget(self, prompt, monkeypatch, tmp_path):
        monkeypatch.setenv("LLM_API_KEY", "sk-test")
        spy = SpyTransport([requests.Timeout(), requests.Timeout(), requests.Timeout()])
        monkeypatch.setattr(provider_mod, "_http_post", spy)
        audit = tmp_path / "audit.jsonl"
        cfg = ProviderConfig(retry_budget=2, audit_path=str(audit))
        with pytest.raises(ProviderTimeoutError, match="3 attempts"):
            query(cfg, prompt)
        assert len(spy.calls) == 3
        records = [json.loads(line) for line in audit.read_text().splitlines()]
        assert [r["status"] for r in records] == ["timeout"] * 3
        assert [r["attempt"] for r in records] == [1, 2, 3]
        assert all(r["digest"] == prompt.digest for r in records)

    def test_transient_500_then_success(self, prompt, monkeypatch):
        monkeypatch.setenv("LLM_API_KEY", "sk-test")
        spy = SpyTransport([(500, None), ok_reply("eventually")])
        monkeypatch.setattr(provider_mod, "_http_post", spy)
        assert query(ProviderConfig(retry_budget=2), prompt) == "eventually"
        assert len(spy.calls) == 2

    def test_rejected_credential(self, prompt, monkeypatch):
        monkeypatch.setenv("LLM_API_KEY", "sk-test")
        spy = SpyTransport([(401, None)])
        monkeypatch.setattr(provider_mod, "_http_post", spy)
        with pytest.raises(ProviderAuthError):
            query(ProviderConfig(retry_budget=2), prompt)
        assert len(spy.calls) == 1  # auth failures are not retried

    @pytest.mark.parametrize(
        "outcome",
        [
            (200, None),
            (200, {"choices": []}),
            (200, {"choices": [{"message": {}}]}),
            (200, {"choices": [{"message": {"content": 5}}]}),
            (418, {"error": "teapot"}),
        ],
    )
    def test_protocol_errors(self, prompt, monkeypatch, outcome):
        monkeypatch.setenv("LLM_API_KEY", "sk-test")
        monkeypatch.setattr(provider_mod, "_http_post", SpyTransport([outcome]))
        with pytest.raises(ProviderProtocolError):
            query(ProviderConfig(), prompt)

    def test_mock_audit_written(self, tmp_path, prompt):
        audit = tmp_path / "a.jsonl"
        cfg = write_mock(tmp_path, prompt, "x").with_audit(str(audit))
        query(cfg, prompt)
        record = json.loads(audit.read_text().splitlines()[0])
        assert record["status"] == "ok"
        assert record["reply"] == "x"

    def test_config_validation(self):
        with pytest.raises(ConfigError):
            ProviderConfig(retry_budget=-1)
        with pytest.raises(ConfigError):
            ProviderConfig(timeout=0)


GOOD_REPLY = """Here are my candidates.

```
routing: (WIQ + PT)
sequencing: PT
```

```text
routing: max(NIQ, TRANT)
sequencing: (SLACK / W)
```

```
routing: exp(PT)
sequencing: PT
```

```
routing: WIQ
```

```
fenced prose, not a candidate
```

INSIGHTS: Balance queue load against transport cost.
Short rules generalize better.
"""


class TestExtraction:
    def test_mixed_reply_accounting(self):
        result = extract_heuristics(GOOD_REPLY)
        assert len(result.accepted) == 2
        assert len(result.rejected) == 2
        assert result.candidates == 4
        assert result.accepted[0] == RulePair.from_text("(WIQ + PT)", "PT")
        assert result.accepted[1] == RulePair.from_text("max(NIQ, TRANT)", "(SLACK / W)")
        assert "unknown symbol" in result.rejected[0].cause
        assert "exp" in result.rejected[0].cause
        assert "sequencing" in result.rejected[1].cause
        assert result.insights.startswith("Balance queue load")
        assert "generalize" in result.insights
        assert result.raw == GOOD_REPLY

    def test_prose_only_reply(self):
        result = extract_heuristics("No code here, just words.")
        assert result.candidates == 0
        assert result.accepted == []
        assert result.insights == ""

    def test_depth_cap_rejection(self):
        deep = "(" * 8 + "PT" + " + PT)" * 8
        reply = f"```\nrouting: {deep}\nsequencing: PT\n```\n"
        result = extract_heuristics(reply)
        assert result.accepted == []
        assert result.rejected[0].cause == "max depth exceeded (9 > 8)"

    def test_many_well_formed_pairs(self):
        blocks = "\n".join(
            f"```\nrouting: (WIQ + PT)\nsequencing: (PT + TIS)\n```" for _ in range(30)
        )
        result = extract_heuristics(blocks)
        assert len(result.accepted) == 30
        assert result.rejected == []

    @settings(max_examples=50, deadline=None)
    @given(seed=st.integers(min_value=0, max_value=2**32 - 1))
    def test_round_trip_through_reply_format(self, seed):
        rng = np.random.default_rng(seed)
        pair = RulePair(
            routing=random_tree(rng, "grow", (1, 5)),
            sequencing=random_tree(rng, "grow", (1, 5)),
        )
        reply = f"some text\n```\n{rules_to_text(pair)}```\nINSIGHTS: n/a\n"
        result = extract_heuristics(reply)
        assert result.accepted == [pair]
        assert result.rejected == []


class TestGenerateReport:
    BEST = RulePair.from_text("(WIQ + PT) + TRANT", "(PT / W) + WKR")

    def test_with_canned_narrative(self, tmp_path):
        prompt = build_explain_prompt(self.BEST, MIXED)
        cfg = write_mock(tmp_path, prompt, "A fine pair of rules.\n")
        report = generate_report(self.BEST, MIXED, cfg, test_score=123.5)
        assert report.narrative_ok
        assert report.error is None
        assert "A fine pair of rules." in report.text
        assert "## Appendix (machine generated)" in report.text
        assert rules_to_text(self.BEST).strip() in report.text
        assert f"routing tree: depth {depth(self.BEST.routing)}, {size(self.BEST.routing)} nodes" in report.text
        assert "Held-out test fitness: 123.5" in report.text
        counts = dict(terminal_histogram(self.BEST.routing))
        for t, n in terminal_histogram(self.BEST.sequencing).items():
            counts[t] = counts.get(t, 0) + n
        for t, n in counts.items():
            assert f"- {t.name}: {n}" in report.text

    def test_provider_failure_degrades_gracefully(self, tmp_path):
        cfg = ProviderConfig(endpoint=f"mock:{tmp_path}")  # no canned reply
        report = generate_report(self.BEST, FMEAN, cfg)
        assert not report.narrative_ok
        assert report.error is not None
        assert NARRATIVE_UNAVAILABLE in report.text
        assert "## Appendix (machine generated)" in report.text
        assert "Held-out test fitness" not in report.text
