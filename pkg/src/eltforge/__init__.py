"""Dialogue-driven ELT pipeline synthesis.

Turns natural-language data-movement requests into a validated, executable
pipeline IR through an explicit clarify-then-act loop, retrieval-backed tool
selection, static safety validation, and a local DAG executor, with an
evaluation harness for generation-variance and end-to-end success metrics.
"""

__version__ = "0.1.0"
