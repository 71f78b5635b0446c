"""Pure-numpy augmented Lagrangian value and gradient (fallback for the Cython kernel).

Returns ``(L, G)`` with ``G = dL/dW*`` (same shape as ``W``); the gradient with
respect to the stacked real coordinates ``[Re W, Im W]`` is ``2 [Re G, Im G]``.
Channels are noise-normalized, so the noise term in every SINR is 1.
"""
import numpy as np

LN2 = np.log(2.0)


def al_value_grad(W, H, offsets, col_fap, p_max, cap_se, uplink_coef, static,
                  p_fix, bw_ptd, bandwidth, delta, scale, mu1, mu2, mu3, rho):
    K = W.shape[0]
    A = H.conj() @ W.T
    a2 = A.real ** 2 + A.imag ** 2
    T = a2.sum(axis=1) + 1.0
    S = np.diagonal(a2)
    I = T - S
    rate = (np.log(T) - np.log(I)) / LN2

    n = np.add.reduceat(W.real ** 2 + W.imag ** 2, offsets[:-1], axis=1).T
    phi = n / (n + delta)
    dphi = delta / (n + delta) ** 2
    pw = n.sum(axis=1)
    psi = pw / (pw + delta)
    dpsi = delta / (pw + delta) ** 2

    tau = phi @ rate
    pfd = p_fix + bw_ptd * tau
    D = np.sum(static + uplink_coef * phi.sum(axis=1) + (pfd + pw) * psi)
    N = bandwidth * rate.sum()
    f = -scale * N / D

    t1 = np.maximum(pw / p_max - 1.0 + mu1 / rho, 0.0)
    t2 = np.maximum(tau / cap_se - 1.0 + mu2 / rho, 0.0)
    t3 = np.maximum(phi.sum(axis=0) - 1.0 + mu3 / rho, 0.0)
    value = f + 0.5 * rho * (t1 @ t1 + t2 @ t2 + t3 @ t3)
    pi1, pi2, pi3 = rho * t1, rho * t2, rho * t3

    df_dN = -scale / D
    df_dD = scale * N / D ** 2
    c2 = pi2 / cap_se
    alpha = (df_dN * bandwidth
             + df_dD * bw_ptd * (phi * psi[:, None]).sum(axis=0)
             + (c2[:, None] * phi).sum(axis=0))
    gamma = (df_dD * (uplink_coef[:, None] * dphi
                      + psi[:, None] * (bw_ptd * rate[None, :] * dphi + 1.0)
                      + ((pfd + pw) * dpsi)[:, None])
             + (pi1 / p_max)[:, None]
             + c2[:, None] * rate[None, :] * dphi
             + pi3[None, :] * dphi)

    inv = np.repeat((1.0 / T)[:, None], K, axis=1) - (1.0 / I)[:, None]
    inv[np.diag_indices(K)] = 1.0 / T
    coef = (alpha / LN2)[:, None] * A * inv
    G = coef.T @ H + gamma[col_fap, :].T * W
    return float(value), G
