"""neural_implicit_dict package.

Metrics, benchmarking and the `nid` console script tying the dictionary
pipelines together.
"""

__all__ = ["Metrics", "Bench", "NidClient", "cli"]

__version__ = "0.1.0"
