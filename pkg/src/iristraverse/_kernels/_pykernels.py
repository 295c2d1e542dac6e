"""Pure-numpy implementations of the hot kernels.

Every function here has a twin with the same signature in ``_ckernels.pyx``.
Inputs are C-contiguous float64 arrays (uint8 for bit codes); callers in
:mod:`iristraverse.autodiff` and :mod:`iristraverse.identity` handle
padding, shape checks and clamping policy.
"""
import numpy as np

BACKEND = "python"


def conv2d_forward(xp, k, stride):
    C, Hp, Wp = xp.shape
    F, _, kh, kw = k.shape
    Ho = (Hp - kh) // stride + 1
    Wo = (Wp - kw) // stride + 1
    out = np.zeros((F, Ho, Wo))
    flat = out.reshape(F, -1)
    for i in range(kh):
        for j in range(kw):
            patch = xp[:, i:i + stride * (Ho - 1) + 1:stride, j:j + stride * (Wo - 1) + 1:stride]
            flat += k[:, :, i, j] @ patch.reshape(C, -1)
    return out


def conv2d_grad_input(g, k, stride, Hp, Wp):
    F, Ho, Wo = g.shape
    _, C, kh, kw = k.shape
    gxp = np.zeros((C, Hp, Wp))
    gflat = g.reshape(F, -1)
    for i in range(kh):
        for j in range(kw):
            contrib = (k[:, :, i, j].T @ gflat).reshape(C, Ho, Wo)
            gxp[:, i:i + stride * (Ho - 1) + 1:stride, j:j + stride * (Wo - 1) + 1:stride] += contrib
    return gxp


def conv2d_grad_kernel(g, xp, kh, kw, stride):
    F, Ho, Wo = g.shape
    C = xp.shape[0]
    gk = np.zeros((F, C, kh, kw))
    gflat = g.reshape(F, -1)
    for i in range(kh):
        for j in range(kw):
            patch = xp[:, i:i + stride * (Ho - 1) + 1:stride, j:j + stride * (Wo - 1) + 1:stride]
            gk[:, :, i, j] = gflat @ patch.reshape(C, -1).T
    return gk


def _corners(H, W, cx, cy):
    x0 = np.clip(np.floor(cx), 0, max(W - 2, 0)).astype(np.intp)
    y0 = np.clip(np.floor(cy), 0, max(H - 2, 0)).astype(np.intp)
    fx = cx - x0
    fy = cy - y0
    x1 = np.minimum(x0 + 1, W - 1)
    y1 = np.minimum(y0 + 1, H - 1)
    return x0, x1, y0, y1, fx, fy


def bilinear_forward(img, cx, cy):
    """Sample ``img`` at already-clamped continuous (col, row) positions."""
    H, W = img.shape
    x0, x1, y0, y1, fx, fy = _corners(H, W, cx, cy)
    v00 = img[y0, x0]
    v01 = img[y0, x1]
    v10 = img[y1, x0]
    v11 = img[y1, x1]
    top = v00 + fx * (v01 - v00)
    bot = v10 + fx * (v11 - v10)
    return top + fy * (bot - top)


def bilinear_backward(img, cx, cy, g):
    H, W = img.shape
    x0, x1, y0, y1, fx, fy = _corners(H, W, cx, cy)
    v00 = img[y0, x0]
    v01 = img[y0, x1]
    v10 = img[y1, x0]
    v11 = img[y1, x1]
    gcx = g * ((1.0 - fy) * (v01 - v00) + fy * (v11 - v10))
    gcy = g * ((1.0 - fx) * (v10 - v00) + fx * (v11 - v01))
    n = H * W
    gimg = (
        np.bincount(y0 * W + x0, weights=g * (1.0 - fx) * (1.0 - fy), minlength=n)
        + np.bincount(y0 * W + x1, weights=g * fx * (1.0 - fy), minlength=n)
        + np.bincount(y1 * W + x0, weights=g * (1.0 - fx) * fy, minlength=n)
        + np.bincount(y1 * W + x1, weights=g * fx * fy, minlength=n)
    )
    return gimg.reshape(H, W), gcx, gcy


def shifted_disagreement(a, b, valid_a, valid_b, shifts):
    """Per shift ``s``: (#disagreeing jointly-valid bits, #jointly-valid bits).

    Column ``c`` of ``a`` is compared with column ``c - s`` of ``b``.
    """
    shifts = np.asarray(shifts, dtype=np.intp)
    diff = np.empty(len(shifts), dtype=np.int64)
    count = np.empty(len(shifts), dtype=np.int64)
    for n, s in enumerate(shifts):
        joint = valid_a & np.roll(valid_b, s, axis=2)
        diff[n] = np.count_nonzero((a != np.roll(b, s, axis=2)) & joint)
        count[n] = np.count_nonzero(joint)
    return diff, count


def harmonic_forward(theta, rho, u, v, angular, radial, phase):
    """Texture ``sum_k u_k cos(a_k) + v_k sin(a_k)`` plus the K x N cos/sin tables."""
    arg = np.multiply.outer(angular, theta)
    arg += np.multiply.outer(radial, rho)
    arg += phase[:, None]
    c = np.cos(arg)
    s = np.sin(arg)
    return u @ c + v @ s, c, s


def harmonic_backward(c, s, u, v, angular, radial, g):
    """Gradients w.r.t. (theta, rho, u, v) given the cached tables."""
    d_arg = (v[:, None] * c - u[:, None] * s) * g
    return angular @ d_arg, radial @ d_arg, c @ g, s @ g
