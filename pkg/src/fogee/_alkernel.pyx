# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled augmented Lagrangian value and gradient.

Same contract as ``_alkernel_py.al_value_grad``.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport log, fmax

cnp.import_array()

cdef double LN2 = 0.6931471805599453


def al_value_grad(double complex[:, ::1] W, double complex[:, ::1] H,
                  long[::1] offsets, long[::1] col_fap,
                  double[::1] p_max, double[::1] cap_se, double[::1] uplink_coef,
                  double[::1] static, double p_fix, double bw_ptd, double bandwidth,
                  double delta, double scale,
                  double[::1] mu1, double[::1] mu2, double[::1] mu3, double rho):
    cdef Py_ssize_t K = W.shape[0], M = W.shape[1], R = p_max.shape[0]
    cdef Py_ssize_t k, j, m, r
    cdef double complex acc, hw
    cdef double re, im, x, D, N, f, value, df_dN, df_dD, s

    A_arr = np.empty((K, K), dtype=np.complex128)
    cdef double complex[:, ::1] A = A_arr
    cdef double[::1] T = np.empty(K), I = np.empty(K), rate = np.empty(K)
    cdef double[:, ::1] n = np.zeros((R, K)), phi = np.empty((R, K)), dphi = np.empty((R, K))
    cdef double[::1] pw = np.zeros(R), psi = np.empty(R), dpsi = np.empty(R)
    cdef double[::1] tau = np.zeros(R), pfd = np.empty(R)
    cdef double[::1] t1 = np.empty(R), t2 = np.empty(R), t3 = np.empty(K)
    cdef double[::1] phisum_k = np.zeros(K), alpha = np.empty(K)
    cdef double[:, ::1] gamma = np.empty((R, K))
    G_arr = np.zeros((K, M), dtype=np.complex128)
    cdef double complex[:, ::1] G = G_arr

    # received amplitudes a[k, j] = h_k^H w_j
    for k in range(K):
        T[k] = 1.0
        for j in range(K):
            acc = 0
            for m in range(M):
                acc = acc + H[k, m].conjugate() * W[j, m]
            A[k, j] = acc
            T[k] += acc.real * acc.real + acc.imag * acc.imag
        x = A[k, k].real * A[k, k].real + A[k, k].imag * A[k, k].imag
        I[k] = T[k] - x
        rate[k] = (log(T[k]) - log(I[k])) / LN2

    for k in range(K):
        for m in range(M):
            re = W[k, m].real
            im = W[k, m].imag
            n[col_fap[m], k] += re * re + im * im
    for r in range(R):
        for k in range(K):
            x = n[r, k] + delta
            phi[r, k] = n[r, k] / x
            dphi[r, k] = delta / (x * x)
            pw[r] += n[r, k]
            tau[r] += phi[r, k] * rate[k]
            phisum_k[k] += phi[r, k]
        x = pw[r] + delta
        psi[r] = pw[r] / x
        dpsi[r] = delta / (x * x)
        pfd[r] = p_fix + bw_ptd * tau[r]

    D = 0.0
    N = 0.0
    for r in range(R):
        s = 0.0
        for k in range(K):
            s += phi[r, k]
        D += static[r] + uplink_coef[r] * s + (pfd[r] + pw[r]) * psi[r]
    for k in range(K):
        N += rate[k]
    N *= bandwidth
    f = -scale * N / D

    value = f
    for r in range(R):
        t1[r] = fmax(pw[r] / p_max[r] - 1.0 + mu1[r] / rho, 0.0)
        t2[r] = fmax(tau[r] / cap_se[r] - 1.0 + mu2[r] / rho, 0.0)
        value += 0.5 * rho * (t1[r] * t1[r] + t2[r] * t2[r])
    for k in range(K):
        t3[k] = fmax(phisum_k[k] - 1.0 + mu3[k] / rho, 0.0)
        value += 0.5 * rho * t3[k] * t3[k]

    df_dN = -scale / D
    df_dD = scale * N / (D * D)
    for k in range(K):
        s = df_dN * bandwidth
        for r in range(R):
            s += df_dD * bw_ptd * phi[r, k] * psi[r] + rho * t2[r] / cap_se[r] * phi[r, k]
        alpha[k] = s
    for r in range(R):
        for k in range(K):
            gamma[r, k] = (df_dD * (uplink_coef[r] * dphi[r, k]
                                    + psi[r] * (bw_ptd * rate[k] * dphi[r, k] + 1.0)
                                    + (pfd[r] + pw[r]) * dpsi[r])
                           + rho * t1[r] / p_max[r]
                           + rho * t2[r] / cap_se[r] * rate[k] * dphi[r, k]
                           + rho * t3[k] * dphi[r, k])

    # G[j] = sum_k c[k, j] h_k + gamma[r(m), j] w_j
    for k in range(K):
        s = alpha[k] / LN2
        for j in range(K):
            if j == k:
                hw = s * A[k, j] / T[k]
            else:
                hw = s * A[k, j] * (1.0 / T[k] - 1.0 / I[k])
            for m in range(M):
                G[j, m] = G[j, m] + hw * H[k, m]
    for j in range(K):
        for m in range(M):
            G[j, m] = G[j, m] + gamma[col_fap[m], j] * W[j, m]
    return value, G_arr
