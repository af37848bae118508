"""dB / linear conversions used throughout.

Gains are carried in dB, powers in dBm (milliwatts in linear form), so
interference integrals come out in mW*s directly. Both conversions always run
through the numpy kernels so that scalar and vectorized call sites produce
bit-identical values.
"""

import numpy as np


def db_to_lin(db):
    """Convert a dB quantity (gain or dBm power) to linear scale."""
    out = np.power(10.0, np.asarray(db, dtype=float) / 10.0)
    return float(out) if np.ndim(out) == 0 else out


def lin_to_db(x):
    """Convert a linear quantity to dB; 0 maps to -inf."""
    with np.errstate(divide="ignore"):
        out = 10.0 * np.log10(np.asarray(x, dtype=float))
    return float(out) if np.ndim(out) == 0 else out
