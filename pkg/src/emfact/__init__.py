"""Toolkit for editing physician responses for empathy and scoring the result.

Two measurement axes: perceived empathy via three-way pairwise LLM judging,
and factual fidelity via bidirectional fact decomposition plus entailment.
"""

__version__ = "0.1.0"
