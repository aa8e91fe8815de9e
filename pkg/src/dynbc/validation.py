"""Input validation helpers, in the spirit of ``sklearn.utils.validation``."""

import numbers

import numpy as np

from .exceptions import ConfigurationError


def check_field(u, n_nodes, name="u"):
    """Return ``u`` as a finite 1-D float array of length ``n_nodes``.

    NaN or infinite entries are rejected here so that no downstream code
    has to branch on them.
    """
    arr = np.asarray(u, dtype=float)
    if arr.shape != (n_nodes,):
        raise ValueError(
            f"{name} has shape {np.shape(u)}, expected ({n_nodes},) to match the mesh"
        )
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains NaN or infinite values")
    return arr


def check_positive(value, name, strict=True):
    if not isinstance(value, numbers.Real) or isinstance(value, bool):
        raise ConfigurationError(f"expected a real number, got {value!r}", key=name)
    if not np.isfinite(value) or (value <= 0 if strict else value < 0):
        bound = "> 0" if strict else ">= 0"
        raise ConfigurationError(f"must be {bound}, got {value!r}", key=name)
    return float(value)


def check_int(value, name, minimum=None):
    if isinstance(value, bool) or not isinstance(value, numbers.Integral):
        raise ConfigurationError(f"expected an integer, got {value!r}", key=name)
    if minimum is not None and value < minimum:
        raise ConfigurationError(f"must be >= {minimum}, got {value}", key=name)
    return int(value)


def check_mu(mu):
    if isinstance(mu, bool) or mu not in (0, 1):
        raise ConfigurationError(f"must be 0 or 1, got {mu!r}", key="mu")
    return int(mu)
