"""Character-word LSTM language models in numpy."""

__version__ = "0.1.0"
