"""Turning raw model replies into validated rule pairs.

A candidate is any fenced code block containing a routing: or sequencing:
line.  Candidates either parse into a RulePair within the depth cap or are
rejected with a cause; they are never repaired.  Free text after an
INSIGHTS: line (outside the fences) is captured for audit and reuse.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field

from ..errors import DataError
from ..expr import MAX_DEPTH, depth
from ..rules import RulePair, rules_from_text

_FENCE = re.compile(r"```[^\n]*\n(.*?)```", re.DOTALL)
_RULE_LINE = re.compile(r"(?mi)^\s*(routing|sequencing)\s*:")
_INSIGHTS = re.compile(r"(?m)^INSIGHTS:\s*")


@dataclass(frozen=True)
class RejectedCandidate:
    snippet: str
    cause: str


@dataclass
class ExtractionResult:
    """Outcome of scanning one reply; accepted + rejected = candidates."""

    accepted: list[RulePair] = field(default_factory=list)
    rejected: list[RejectedCandidate] = field(default_factory=list)
    insights: str = ""
    raw: str = ""

    @property
    def candidates(self) -> int:
        return len(self.accepted) + len(self.rejected)


def extract_heuristics(reply: str) -> ExtractionResult:
    """Scan a reply for fenced rule pairs; never raises on bad candidates."""
    result = ExtractionResult(raw=reply)
    for block in _FENCE.findall(reply):
        if not _RULE_LINE.search(block):
            continue  # fenced prose, not a candidate
        snippet = block.strip()
        try:
            pair = rules_from_text(block)
        except DataError as exc:
            result.rejected.append(RejectedCandidate(snippet=snippet, cause=str(exc)))
            continue
        d = max(depth(pair.routing), depth(pair.sequencing))
        if d > MAX_DEPTH:
            result.rejected.append(
                RejectedCandidate(snippet=snippet, cause=f"max depth exceeded ({d} > {MAX_DEPTH})")
            )
            continue
        result.accepted.append(pair)
    prose = _FENCE.sub("", reply)
    match = _INSIGHTS.search(prose)
    if match:
        result.insights = prose[match.end():].strip()
    return result
