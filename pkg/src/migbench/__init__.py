"""migbench: continuous code-migration benchmark generation and evaluation.

Builds benchmark suites by mapping diff hunks from migrated services onto
developer-authored knowledge-base documents, and scores agent patches
against those suites with line-edit and per-KB precision/recall.
"""

__version__ = "0.1.0"
