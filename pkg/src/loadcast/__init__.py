"""Flight load-factor forecasting toolkit.

Subpackages cover the full pipeline: synthetic corpus generation and
ingestion, feature engineering, stream-specific feature selection,
sequence assembly, a from-scratch recurrent/attention model zoo,
training with plateau and early-stop callbacks, and evaluation.
"""

__version__ = "0.1.0"
