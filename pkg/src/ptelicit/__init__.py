"""Prospect theory elicitation for binary-choice agents, with epistemic
marker mapping and marker-substituted re-estimation."""

__version__ = "0.1.0"

from .pt_core import PTParams, Prospect, choice_probability, prospect_utility, value, weight  # noqa: E402,F401
