"""Modern Hopfield networks and attention-based repertoire classification."""

from rephop.repertoire import ALPHABET, Dataset, Repertoire, Sequence

__version__ = "0.1.0"

__all__ = ["ALPHABET", "Dataset", "Repertoire", "Sequence", "__version__"]
