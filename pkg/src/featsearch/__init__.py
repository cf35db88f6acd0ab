"""Feature-transformation search over postfix programs.

Collect (program, score) records with cascading value-network agents, embed
programs with an LSTM encoder/evaluator/decoder, climb the evaluator in
embedding space and decode back to programs.
"""
from .errors import InputError, InvariantError

__version__ = "0.1.0"

__all__ = ["InputError", "InvariantError", "__version__"]
