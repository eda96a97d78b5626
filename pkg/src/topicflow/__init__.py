"""Streaming hierarchical topic-flow engine.

Incremental tree-cut inference over a sequence of multi-branch topic trees,
evaluation metrics, and deterministic river/sedimentation layout geometry,
served to an interactive client over HTTP.
"""

__version__ = "0.1.0"
