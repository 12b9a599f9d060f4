"""Central finite-difference gradient oracle used across the test suite.

The oracle re-evaluates a pure forward closure at perturbed parameter
values; it never touches the tape machinery it is checking.
"""

import numpy as np


def central_difference(loss_fn, arrays, h=1e-4):
    """Numerical gradient of ``loss_fn()`` w.r.t. every entry of ``arrays``.

    ``loss_fn`` must be a zero-argument callable returning a float and
    reading the current contents of the ndarrays in ``arrays``; entries are
    perturbed in place and restored.  Returns one gradient array per input.
    """
    grads = []
    for arr in arrays:
        g = np.zeros_like(arr)
        flat = arr.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            keep = flat[i]
            flat[i] = keep + h
            up = loss_fn()
            flat[i] = keep - h
            down = loss_fn()
            flat[i] = keep
            gflat[i] = (up - down) / (2.0 * h)
        grads.append(g)
    return grads


def max_relative_error(analytic, numeric, floor=1e-8):
    """max |a - n| / max(|a|, |n|, floor) over all coordinates."""
    a = np.asarray(analytic).reshape(-1)
    n = np.asarray(numeric).reshape(-1)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
    return float(np.max(np.abs(a - n) / denom))
