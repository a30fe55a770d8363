"""
Evolve & Merge
Hebbian plasticity rules evolved with ES and compressed by K-Means merging, with the
harness to compare their robustness against static networks.
"""

__version__ = "0.1.0"
