"""Metacognition-enhanced few-shot prompting harness for aspect-based sentiment classification."""

__version__ = "0.1.0"
