#!/usr/bin/env python3
"""
Error types
Every failure raised by evolve_merge derives from EvolveMergeError so callers can tell
user-facing problems (bad config, bad files) apart from internal bugs.
"""


class EvolveMergeError(Exception):
    """Base class for all evolve_merge errors."""


class ConfigurationError(EvolveMergeError, ValueError):
    """Invalid or inconsistent configuration."""


class ArgumentError(EvolveMergeError, ValueError):
    """Invalid argument to an operation."""


class InputShapeError(EvolveMergeError):
    """Observation or action has the wrong length."""


class NetworkStateError(EvolveMergeError):
    """Network used in a state that does not allow the operation."""


class EncodingError(EvolveMergeError):
    """Genome or assignment map does not match the network it encodes."""


class ClusteringError(EvolveMergeError):
    """K-Means cannot produce the requested number of clusters."""


class FormatError(EvolveMergeError):
    """Artifact file or blob is corrupt or has an unsupported version."""


class EnvironmentStateError(EvolveMergeError):
    """Environment stepped after the episode ended or before reset."""


class ModelKindError(EvolveMergeError):
    """Operation not supported for this kind of model."""
