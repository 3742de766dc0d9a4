"""Numpy implementations of the kernels in ``_ckernels.pyx``.

Same signatures and return conventions; used when the extension is not
built or when ``REHAB_ILC_BACKEND=python`` is set. Loops over time stay in
Python, only the per-step layer algebra is vectorised.
"""
import math

import numpy as np


def _unpack(theta, widths):
    layers = []
    off = 0
    for n_in, n_out in zip(widths[:-1], widths[1:]):
        n_in, n_out = int(n_in), int(n_out)
        w = theta[off:off + n_out * n_in].reshape(n_out, n_in)
        off += n_out * n_in
        b = theta[off:off + n_out]
        off += n_out
        layers.append((w, b))
    return layers


def _forward_one(layers, x):
    acts = [x]
    a = x
    for w, b in layers[:-1]:
        a = 1.0 / (1.0 + np.exp(-(w @ a + b)))
        acts.append(a)
    w, b = layers[-1]
    return float(w[0] @ a + b[0]), acts


def _backward_one(layers, acts, lam):
    """Return (d out/d theta * lam as flat array, d out/d input * lam)."""
    pieces = []
    w, _ = layers[-1]
    pieces.append(np.array([lam]))
    pieces.append(lam * acts[-1])
    d = lam * w[0]
    for idx in range(len(layers) - 2, -1, -1):
        w, _ = layers[idx]
        a = acts[idx + 1]
        dz = d * (a * (1.0 - a))
        pieces.append(dz)
        pieces.append(np.outer(dz, acts[idx]).ravel())
        d = dz @ w
    # pieces were collected output-first as (b, W) pairs; flip to layout order
    return np.concatenate(pieces[::-1]), d


def _inputs(t, u, fbsrc, exo, fb):
    x = np.empty(len(exo) + len(fb))
    for k, d in enumerate(exo):
        x[k] = u[t - d] if t >= d else 0.0
    ne = len(exo)
    for k, d in enumerate(fb):
        x[ne + k] = fbsrc[t - d] if t >= d else 0.0
    return x


def narx_forward(theta, widths, u, exo, fb, teacher=None):
    layers = _unpack(theta, widths)
    n = u.shape[0]
    y = np.zeros(n)
    src = y if teacher is None else teacher
    exo, fb = [int(d) for d in exo], [int(d) for d in fb]
    with np.errstate(over="ignore", invalid="ignore"):
        for t in range(n):
            yt, _ = _forward_one(layers, _inputs(t, u, src, exo, fb))
            y[t] = yt
            if not np.isfinite(yt):
                return y, t
    return y, -1


def narx_jacobian(theta, widths, u, exo, fb, teacher=None):
    layers = _unpack(theta, widths)
    n, p = u.shape[0], theta.shape[0]
    y = np.zeros(n)
    jac = np.zeros((n, p))
    closed = teacher is None
    src = y if closed else teacher
    exo, fb = [int(d) for d in exo], [int(d) for d in fb]
    ne = len(exo)
    with np.errstate(over="ignore", invalid="ignore"):
        for t in range(n):
            yt, acts = _forward_one(layers, _inputs(t, u, src, exo, fb))
            y[t] = yt
            if not np.isfinite(yt):
                return y, jac, t
            row, gx = _backward_one(layers, acts, 1.0)
            if closed:
                for k, d in enumerate(fb):
                    if t >= d:
                        row += gx[ne + k] * jac[t - d]
            jac[t] = row
    return y, jac, -1


def narx_gradient(theta, widths, u, target, exo, fb):
    layers = _unpack(theta, widths)
    n = u.shape[0]
    y = np.zeros(n)
    exo, fb = [int(d) for d in exo], [int(d) for d in fb]
    ne = len(exo)
    history = []
    with np.errstate(over="ignore", invalid="ignore"):
        for t in range(n):
            yt, acts = _forward_one(layers, _inputs(t, u, y, exo, fb))
            y[t] = yt
            history.append(acts)
            if not np.isfinite(yt):
                return np.zeros_like(theta), y, t
    adj = 2.0 * (y - target)
    grad = np.zeros_like(theta)
    for t in range(n - 1, -1, -1):
        g, gx = _backward_one(layers, history[t], adj[t])
        grad += g
        for k, d in enumerate(fb):
            if t >= d:
                adj[t - d] += gx[ne + k]
    return grad, y, -1


def rk4_simulate(tau_fine, substeps, dt, inertia, viscosity, stiffness, theta0, omega0):
    m2 = 2 * substeps
    n = (tau_fine.shape[0] - 1) // m2 + 1
    th_out = np.zeros(n)
    om_out = np.zeros(n)
    th, om = float(theta0), float(omega0)
    h, hh = dt / substeps, 0.5 * dt / substeps
    th_out[0], om_out[0] = th, om
    f = tau_fine.tolist()
    for i in range(n - 1):
        for s in range(substeps):
            q = i * m2 + 2 * s
            t0, tm, t1 = f[q], f[q + 1], f[q + 2]
            k1t = om
            k1o = (t0 - viscosity * om - stiffness * th) / inertia
            k2t = om + hh * k1o
            k2o = (tm - viscosity * k2t - stiffness * (th + hh * k1t)) / inertia
            k3t = om + hh * k2o
            k3o = (tm - viscosity * k3t - stiffness * (th + hh * k2t)) / inertia
            k4t = om + h * k3o
            k4o = (t1 - viscosity * k4t - stiffness * (th + h * k3t)) / inertia
            th = th + (h / 6.0) * (k1t + 2.0 * k2t + 2.0 * k3t + k4t)
            om = om + (h / 6.0) * (k1o + 2.0 * k2o + 2.0 * k3o + k4o)
        th_out[i + 1] = th
        om_out[i + 1] = om
        if not (math.isfinite(th) and math.isfinite(om)):
            return th_out, om_out, i + 1
    return th_out, om_out, -1
