"""Reference server for the external labeling-function wire protocol.

Wraps a pluggable scorer behind the protocol endpoint; ships with a
deterministic stub scorer so integration tests and golden files never need
model weights. A real QA/NLI model plugs in by implementing the same scorer
interface.
"""

from .scorer import ScoredSpan, ScorerPlugin, StubScorer
from .server import create_app

__all__ = ["ScoredSpan", "ScorerPlugin", "StubScorer", "create_app"]
