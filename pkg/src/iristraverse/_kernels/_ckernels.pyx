# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled twins of the kernels in ``_pykernels``.

Loops run in a fixed order, so results are deterministic run to run. The
summation order differs from the numpy path, so the two backends agree to
rounding error, not bit for bit.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport floor, cos, sin

cnp.import_array()

BACKEND = "compiled"


def conv2d_forward(const double[:, :, ::1] xp, const double[:, :, :, ::1] k, Py_ssize_t stride):
    cdef Py_ssize_t C = xp.shape[0], Hp = xp.shape[1], Wp = xp.shape[2]
    cdef Py_ssize_t F = k.shape[0], kh = k.shape[2], kw = k.shape[3]
    cdef Py_ssize_t Ho = (Hp - kh) // stride + 1
    cdef Py_ssize_t Wo = (Wp - kw) // stride + 1
    out_arr = np.zeros((F, Ho, Wo))
    cdef double[:, :, ::1] out = out_arr
    cdef Py_ssize_t f, c, i, j, y, x
    cdef double w
    cdef const double* src
    cdef double* dst
    with nogil:
        for f in range(F):
            for y in range(Ho):
                dst = &out[f, y, 0]
                for c in range(C):
                    for i in range(kh):
                        for j in range(kw):
                            w = k[f, c, i, j]
                            src = &xp[c, y * stride + i, j]
                            if stride == 1:
                                for x in range(Wo):
                                    dst[x] += w * src[x]
                            else:
                                for x in range(Wo):
                                    dst[x] += w * src[x * stride]
    return out_arr


def conv2d_grad_input(const double[:, :, ::1] g, const double[:, :, :, ::1] k, Py_ssize_t stride,
                      Py_ssize_t Hp, Py_ssize_t Wp):
    cdef Py_ssize_t F = g.shape[0], Ho = g.shape[1], Wo = g.shape[2]
    cdef Py_ssize_t C = k.shape[1], kh = k.shape[2], kw = k.shape[3]
    gxp_arr = np.zeros((C, Hp, Wp))
    cdef double[:, :, ::1] gxp = gxp_arr
    cdef Py_ssize_t f, c, i, j, y, x
    cdef double w
    cdef const double* src
    cdef double* dst
    with nogil:
        for c in range(C):
            for y in range(Ho):
                for i in range(kh):
                    dst = &gxp[c, y * stride + i, 0]
                    for f in range(F):
                        src = &g[f, y, 0]
                        for j in range(kw):
                            w = k[f, c, i, j]
                            if stride == 1:
                                for x in range(Wo):
                                    dst[x + j] += w * src[x]
                            else:
                                for x in range(Wo):
                                    dst[x * stride + j] += w * src[x]
    return gxp_arr


def conv2d_grad_kernel(const double[:, :, ::1] g, const double[:, :, ::1] xp,
                       Py_ssize_t kh, Py_ssize_t kw, Py_ssize_t stride):
    cdef Py_ssize_t F = g.shape[0], Ho = g.shape[1], Wo = g.shape[2]
    cdef Py_ssize_t C = xp.shape[0]
    gk_arr = np.zeros((F, C, kh, kw))
    cdef double[:, :, :, ::1] gk = gk_arr
    cdef Py_ssize_t f, c, i, j, y, x
    cdef double ax
    cdef const double* a
    cdef const double* b
    cdef double* acc
    with nogil:
        # for each gradient sample, update the whole kernel row at once
        # (a short contiguous saxpy over j that the compiler vectorises)
        for f in range(F):
            for c in range(C):
                for y in range(Ho):
                    a = &g[f, y, 0]
                    for i in range(kh):
                        b = &xp[c, y * stride + i, 0]
                        acc = &gk[f, c, i, 0]
                        for x in range(Wo):
                            ax = a[x]
                            for j in range(kw):
                                acc[j] += ax * b[x * stride + j]
    return gk_arr


cdef inline void _corner(Py_ssize_t H, Py_ssize_t W, double cx, double cy,
                         Py_ssize_t* x0, Py_ssize_t* x1, Py_ssize_t* y0, Py_ssize_t* y1,
                         double* fx, double* fy) noexcept nogil:
    cdef Py_ssize_t xi = <Py_ssize_t>floor(cx)
    cdef Py_ssize_t yi = <Py_ssize_t>floor(cy)
    cdef Py_ssize_t xmax = W - 2 if W >= 2 else 0
    cdef Py_ssize_t ymax = H - 2 if H >= 2 else 0
    if xi < 0:
        xi = 0
    elif xi > xmax:
        xi = xmax
    if yi < 0:
        yi = 0
    elif yi > ymax:
        yi = ymax
    x0[0] = xi
    y0[0] = yi
    x1[0] = xi + 1 if xi + 1 < W else W - 1
    y1[0] = yi + 1 if yi + 1 < H else H - 1
    fx[0] = cx - xi
    fy[0] = cy - yi


def bilinear_forward(const double[:, ::1] img, const double[::1] cx, const double[::1] cy):
    cdef Py_ssize_t H = img.shape[0], W = img.shape[1], N = cx.shape[0], n
    cdef Py_ssize_t x0, x1, y0, y1
    cdef double fx, fy, top, bot
    out_arr = np.empty(N)
    cdef double[::1] out = out_arr
    with nogil:
        for n in range(N):
            _corner(H, W, cx[n], cy[n], &x0, &x1, &y0, &y1, &fx, &fy)
            top = img[y0, x0] + fx * (img[y0, x1] - img[y0, x0])
            bot = img[y1, x0] + fx * (img[y1, x1] - img[y1, x0])
            out[n] = top + fy * (bot - top)
    return out_arr


def bilinear_backward(const double[:, ::1] img, const double[::1] cx, const double[::1] cy,
                      const double[::1] g):
    cdef Py_ssize_t H = img.shape[0], W = img.shape[1], N = cx.shape[0], n
    cdef Py_ssize_t x0, x1, y0, y1
    cdef double fx, fy, gn, v00, v01, v10, v11
    gimg_arr = np.zeros((H, W))
    gcx_arr = np.empty(N)
    gcy_arr = np.empty(N)
    cdef double[:, ::1] gimg = gimg_arr
    cdef double[::1] gcx = gcx_arr
    cdef double[::1] gcy = gcy_arr
    with nogil:
        for n in range(N):
            _corner(H, W, cx[n], cy[n], &x0, &x1, &y0, &y1, &fx, &fy)
            gn = g[n]
            v00 = img[y0, x0]
            v01 = img[y0, x1]
            v10 = img[y1, x0]
            v11 = img[y1, x1]
            gcx[n] = gn * ((1.0 - fy) * (v01 - v00) + fy * (v11 - v10))
            gcy[n] = gn * ((1.0 - fx) * (v10 - v00) + fx * (v11 - v01))
            gimg[y0, x0] += gn * (1.0 - fx) * (1.0 - fy)
            gimg[y0, x1] += gn * fx * (1.0 - fy)
            gimg[y1, x0] += gn * (1.0 - fx) * fy
            gimg[y1, x1] += gn * fx * fy
    return gimg_arr, gcx_arr, gcy_arr


def shifted_disagreement(const unsigned char[:, :, ::1] a, const unsigned char[:, :, ::1] b,
                         const unsigned char[:, :, ::1] valid_a, const unsigned char[:, :, ::1] valid_b,
                         shifts):
    cdef Py_ssize_t F = a.shape[0], R = a.shape[1], Cn = a.shape[2]
    cdef cnp.intp_t[::1] sh = np.ascontiguousarray(shifts, dtype=np.intp)
    cdef Py_ssize_t S = sh.shape[0], n, f, r, c, s, lo
    diff_arr = np.zeros(S, dtype=np.int64)
    count_arr = np.zeros(S, dtype=np.int64)
    cdef long long[::1] diff = diff_arr
    cdef long long[::1] count = count_arr
    cdef long long dd, cc
    cdef unsigned char joint
    cdef const unsigned char* pa
    cdef const unsigned char* pb
    cdef const unsigned char* qa
    cdef const unsigned char* qb
    with nogil:
        for n in range(S):
            # b column (c - s) mod Cn; split the row at the wrap point
            s = sh[n] % Cn
            if s < 0:
                s = s + Cn
            dd = 0
            cc = 0
            for f in range(F):
                for r in range(R):
                    pa = &a[f, r, 0]
                    pb = &b[f, r, 0]
                    qa = &valid_a[f, r, 0]
                    qb = &valid_b[f, r, 0]
                    for c in range(s):
                        joint = qa[c] & qb[c - s + Cn]
                        cc += joint
                        dd += joint & (pa[c] ^ pb[c - s + Cn])
                    for c in range(s, Cn):
                        joint = qa[c] & qb[c - s]
                        cc += joint
                        dd += joint & (pa[c] ^ pb[c - s])
            diff[n] = dd
            count[n] = cc
    return diff_arr, count_arr


def harmonic_forward(const double[::1] theta, const double[::1] rho, const double[::1] u,
                     const double[::1] v, const double[::1] angular, const double[::1] radial,
                     const double[::1] phase):
    cdef Py_ssize_t N = theta.shape[0], K = angular.shape[0], n, k
    out_arr = np.zeros(N)
    c_arr = np.empty((K, N))
    s_arr = np.empty((K, N))
    cdef double[::1] out = out_arr
    cdef double[:, ::1] ct = c_arr
    cdef double[:, ::1] st = s_arr
    cdef double a, cv, sv, acc
    with nogil:
        for k in range(K):
            for n in range(N):
                a = angular[k] * theta[n] + radial[k] * rho[n] + phase[k]
                cv = cos(a)
                sv = sin(a)
                ct[k, n] = cv
                st[k, n] = sv
                out[n] += u[k] * cv + v[k] * sv
    return out_arr, c_arr, s_arr


def harmonic_backward(const double[:, ::1] c, const double[:, ::1] s, const double[::1] u,
                      const double[::1] v, const double[::1] angular, const double[::1] radial,
                      const double[::1] g):
    cdef Py_ssize_t K = c.shape[0], N = c.shape[1], n, k
    gt_arr = np.empty(N)
    gr_arr = np.empty(N)
    gu_arr = np.zeros(K)
    gv_arr = np.zeros(K)
    cdef double[::1] gt = gt_arr
    cdef double[::1] gr = gr_arr
    cdef double[::1] gu = gu_arr
    cdef double[::1] gv = gv_arr
    cdef double d, at, ar, gn
    with nogil:
        for n in range(N):
            gn = g[n]
            at = 0.0
            ar = 0.0
            for k in range(K):
                d = (v[k] * c[k, n] - u[k] * s[k, n]) * gn
                at = at + angular[k] * d
                ar = ar + radial[k] * d
                gu[k] += c[k, n] * gn
                gv[k] += s[k, n] * gn
            gt[n] = at
            gr[n] = ar
    return gt_arr, gr_arr, gu_arr, gv_arr
