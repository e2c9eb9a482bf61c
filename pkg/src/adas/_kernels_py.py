"""Pure-numpy implementations of the hot per-mode and pointwise kernels.

Every function writes into ``out`` (or operates in place) and has the same
signature as its counterpart in the compiled ``_kernels`` extension.
"""

import numpy as np

NAME = "python"


def contract(a, g, out, transpose=False, accumulate=False):
    """out_i (+)= sum_j a_j g[i, j]  (or g[j, i] when ``transpose``)."""
    if transpose:
        res = a[0] * g[0] + a[1] * g[1] + a[2] * g[2]
    else:
        res = a[0] * g[:, 0] + a[1] * g[:, 1] + a[2] * g[:, 2]
    if accumulate:
        out += res
    else:
        out[...] = res
    return out


def project_dealias(w, kx, ky, kz, inv_k2, mask):
    """In-place Leray projection of a spectral vector followed by masking."""
    kxb = kx[:, None, None]
    kyb = ky[None, :, None]
    kzb = kz[None, None, :]
    s = (kxb * w[0] + kyb * w[1] + kzb * w[2]) * inv_k2
    w[0] = (w[0] - kxb * s) * mask
    w[1] = (w[1] - kyb * s) * mask
    w[2] = (w[2] - kzb * s) * mask
    return w


def if_euler(v, n0, decay, dt, out):
    """out = E (v + dt N)."""
    np.multiply(decay, v + dt * n0, out=out)
    return out


def if_ab2(v, n0, n1, decay, dt, out):
    """out = E (v + dt (3/2 N^n - 1/2 E N^{n-1}))."""
    np.multiply(decay, v + dt * (1.5 * n0 - 0.5 * (decay * n1)), out=out)
    return out


def set_num_threads(n):
    """numpy kernels are single-threaded; accepted for interface parity."""
