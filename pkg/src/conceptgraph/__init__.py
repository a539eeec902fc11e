"""Concept-graph toolkit: recovery from pairwise judgments, supervised
link prediction, and graph-grounded tutoring answers."""
from __future__ import annotations

__version__ = "0.1.0"
