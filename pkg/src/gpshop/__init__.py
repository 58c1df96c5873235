"""Evolution of interpretable dispatching-rule pairs for dynamic flexible
job shop scheduling, plus an LLM bridge for seeding and explanation."""
from __future__ import annotations

__version__ = "0.1.0"

from .expr import (  # noqa: F401
    DecisionContext,
    Expression,
    Function,
    Terminal,
    compile_expression,
    evaluate,
    format_expr,
    parse,
    random_tree,
)
from .rules import RulePair  # noqa: F401
