"""Independent reference computations used by the acceptance suite.

Everything here is deliberately naive (per-component loops, direct
formulas) so it cannot share a bug with the library paths it audits.
"""

import numpy as np


def direct_consistency_map(instance, x, z, U):
    """Plain evaluation of the 2M-output measurement map."""
    m = instance.num_anchors
    u = U[:, 0]
    out = np.empty(2 * m)
    for mm in range(m):
        out[mm] = instance.y[mm] - u[mm]
        out[m + mm] = (
            instance.y[mm] ** 2
            - instance.anchors[mm] @ instance.anchors[mm]
            + 2.0 * instance.anchors[mm] @ x
            - z
            - 2.0 * instance.y[mm] * u[mm]
            + u[mm] ** 2
        )
    return out


def admissible_uncertainty(sigma, rng, margin=1.0):
    """Random M x M matrix with whitened spectral norm at most `margin`."""
    m = sigma.shape[0]
    w, v = np.linalg.eigh(sigma)
    sqrt = (v * np.sqrt(w)) @ v.T
    Z = rng.standard_normal((m, m))
    Z *= margin * rng.random() / max(np.linalg.norm(Z, 2), 1e-12)
    return sqrt @ Z


def whitened_norm(sigma, U):
    w, v = np.linalg.eigh(sigma)
    inv_sqrt = (v / np.sqrt(w)) @ v.T
    return float(np.linalg.norm(inv_sqrt @ U, 2))
