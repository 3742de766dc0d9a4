# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot loops: NARX closed-loop recursion, its derivatives, and RK4.

Parameter layout (shared with ``_pykernels``): ``widths = [n_in, h1, .., hL, 1]``;
for every weight layer the row-major weight matrix ``(n_out, n_in)`` is
followed by its bias vector.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp, isfinite
from libc.stdlib cimport malloc, free

cnp.import_array()

ctypedef long long i64


cdef struct Layout:
    int nlayers
    i64* widths
    i64* woff
    i64* aoff
    i64 n_act
    i64 max_width


cdef int _layout_init(Layout* lay, const i64[::1] widths) except -1:
    cdef int l
    lay.nlayers = widths.shape[0] - 1
    lay.widths = <i64*> malloc(widths.shape[0] * sizeof(i64))
    lay.woff = <i64*> malloc(widths.shape[0] * sizeof(i64))
    lay.aoff = <i64*> malloc(widths.shape[0] * sizeof(i64))
    if lay.widths == NULL or lay.woff == NULL or lay.aoff == NULL:
        raise MemoryError()
    lay.max_width = 1
    cdef i64 w_acc = 0, a_acc = 0
    for l in range(widths.shape[0]):
        lay.widths[l] = widths[l]
        if widths[l] > lay.max_width:
            lay.max_width = widths[l]
    for l in range(lay.nlayers):
        lay.woff[l] = w_acc
        w_acc += widths[l + 1] * widths[l] + widths[l + 1]
        lay.aoff[l] = a_acc
        a_acc += widths[l]
    lay.n_act = a_acc
    return 0


cdef void _layout_free(Layout* lay):
    free(lay.widths)
    free(lay.woff)
    free(lay.aoff)


cdef double _forward_one(const double* theta, Layout* lay, double* act) noexcept nogil:
    # act[aoff[0]:] holds the input vector on entry; hidden outputs are written in place
    cdef int l
    cdef i64 i, j, nin, nout, wo, bo
    cdef double z
    for l in range(lay.nlayers - 1):
        nin = lay.widths[l]
        nout = lay.widths[l + 1]
        wo = lay.woff[l]
        bo = wo + nout * nin
        for i in range(nout):
            z = theta[bo + i]
            for j in range(nin):
                z += theta[wo + i * nin + j] * act[lay.aoff[l] + j]
            act[lay.aoff[l + 1] + i] = 1.0 / (1.0 + exp(-z))
    l = lay.nlayers - 1
    nin = lay.widths[l]
    wo = lay.woff[l]
    z = theta[wo + nin]
    for j in range(nin):
        z += theta[wo + j] * act[lay.aoff[l] + j]
    return z


cdef void _backward_one(const double* theta, Layout* lay, const double* act, double lam,
                        double* grad, double* gx, double* buf_a, double* buf_b) noexcept nogil:
    # accumulates lam * d(output)/d(theta) into grad, writes lam * d(output)/d(input) to gx
    cdef int l
    cdef i64 i, j, nin, nout, wo, bo
    cdef double a, dz
    cdef double* d_cur = buf_a
    cdef double* d_next = buf_b
    cdef double* tmp
    l = lay.nlayers - 1
    nin = lay.widths[l]
    wo = lay.woff[l]
    for j in range(nin):
        grad[wo + j] += lam * act[lay.aoff[l] + j]
        d_cur[j] = lam * theta[wo + j]
    grad[wo + nin] += lam
    for l in range(lay.nlayers - 2, -1, -1):
        nin = lay.widths[l]
        nout = lay.widths[l + 1]
        wo = lay.woff[l]
        bo = wo + nout * nin
        for j in range(nin):
            d_next[j] = 0.0
        for i in range(nout):
            a = act[lay.aoff[l + 1] + i]
            dz = d_cur[i] * (a * (1.0 - a))
            grad[bo + i] += dz
            for j in range(nin):
                grad[wo + i * nin + j] += dz * act[lay.aoff[l] + j]
                d_next[j] += dz * theta[wo + i * nin + j]
        tmp = d_cur
        d_cur = d_next
        d_next = tmp
    for j in range(lay.widths[0]):
        gx[j] = d_cur[j]


cdef inline void _load_inputs(double* act, i64 t, const double* u, const double* fbsrc,
                              const i64* exo, i64 ne, const i64* fb, i64 nf) noexcept nogil:
    cdef i64 k, d
    for k in range(ne):
        d = exo[k]
        act[k] = u[t - d] if t >= d else 0.0
    for k in range(nf):
        d = fb[k]
        act[ne + k] = fbsrc[t - d] if t >= d else 0.0


def narx_forward(const double[::1] theta, const i64[::1] widths, const double[::1] u,
                 const i64[::1] exo, const i64[::1] fb, teacher=None):
    """Run the recursion; returns ``(y, bad_step)`` with ``bad_step = -1`` if finite."""
    cdef Layout lay
    _layout_init(&lay, widths)
    cdef i64 n = u.shape[0], t, bad = -1
    cdef i64 ne = exo.shape[0], nf = fb.shape[0]
    y_arr = np.zeros(n, dtype=np.float64)
    cdef double[::1] y = y_arr
    cdef const double[::1] tv
    cdef const double* fbsrc = &y[0]
    if teacher is not None:
        tv = teacher
        fbsrc = &tv[0]
    act_arr = np.zeros(max(lay.n_act, 1), dtype=np.float64)
    cdef double[::1] act = act_arr
    cdef double yt
    try:
        with nogil:
            for t in range(n):
                _load_inputs(&act[0], t, &u[0], fbsrc, &exo[0], ne, &fb[0], nf)
                yt = _forward_one(&theta[0], &lay, &act[0])
                y[t] = yt
                if not isfinite(yt):
                    bad = t
                    break
    finally:
        _layout_free(&lay)
    return y_arr, bad


def narx_jacobian(const double[::1] theta, const i64[::1] widths, const double[::1] u,
                  const i64[::1] exo, const i64[::1] fb, teacher=None):
    """Forward-mode (real-time recurrent) Jacobian ``dy[t]/dtheta``.

    In closed loop the fed-back outputs are differentiated through; with a
    teacher signal the recursion term vanishes. Returns ``(y, jac, bad_step)``.
    """
    cdef Layout lay
    _layout_init(&lay, widths)
    cdef i64 n = u.shape[0], p = theta.shape[0], t, k, q, d, bad = -1
    cdef i64 ne = exo.shape[0], nf = fb.shape[0]
    cdef bint closed = teacher is None
    y_arr = np.zeros(n, dtype=np.float64)
    jac_arr = np.zeros((n, p), dtype=np.float64)
    cdef double[::1] y = y_arr
    cdef double[:, ::1] jac = jac_arr
    cdef const double[::1] tv
    cdef const double* fbsrc = &y[0]
    if not closed:
        tv = teacher
        fbsrc = &tv[0]
    act_arr = np.zeros(max(lay.n_act, 1), dtype=np.float64)
    gx_arr = np.zeros(widths[0] + 1, dtype=np.float64)
    bufs = np.zeros(2 * lay.max_width, dtype=np.float64)
    cdef double[::1] act = act_arr, gx = gx_arr, buf = bufs
    cdef double yt, g
    cdef double* row
    cdef double* prev
    try:
        with nogil:
            for t in range(n):
                _load_inputs(&act[0], t, &u[0], fbsrc, &exo[0], ne, &fb[0], nf)
                yt = _forward_one(&theta[0], &lay, &act[0])
                y[t] = yt
                if not isfinite(yt):
                    bad = t
                    break
                row = &jac[t, 0]
                _backward_one(&theta[0], &lay, &act[0], 1.0, row, &gx[0],
                              &buf[0], &buf[lay.max_width])
                if closed:
                    for k in range(nf):
                        d = fb[k]
                        if t >= d:
                            g = gx[ne + k]
                            prev = &jac[t - d, 0]
                            for q in range(p):
                                row[q] += g * prev[q]
    finally:
        _layout_free(&lay)
    return y_arr, jac_arr, bad


def narx_gradient(const double[::1] theta, const i64[::1] widths, const double[::1] u,
                  const double[::1] target, const i64[::1] exo, const i64[::1] fb):
    """Backpropagation through time for ``sum((y - target)**2)`` in closed loop.

    Returns ``(grad, y, bad_step)``.
    """
    cdef Layout lay
    _layout_init(&lay, widths)
    cdef i64 n = u.shape[0], p = theta.shape[0], t, k, d, bad = -1
    cdef i64 ne = exo.shape[0], nf = fb.shape[0]
    cdef i64 na = max(lay.n_act, 1)
    y_arr = np.zeros(n, dtype=np.float64)
    acts_arr = np.zeros((n, na), dtype=np.float64)
    grad_arr = np.zeros(p, dtype=np.float64)
    adj_arr = np.zeros(n, dtype=np.float64)
    gx_arr = np.zeros(widths[0] + 1, dtype=np.float64)
    bufs = np.zeros(2 * lay.max_width, dtype=np.float64)
    cdef double[::1] y = y_arr, grad = grad_arr, adj = adj_arr, gx = gx_arr, buf = bufs
    cdef double[:, ::1] acts = acts_arr
    cdef double yt
    try:
        with nogil:
            for t in range(n):
                _load_inputs(&acts[t, 0], t, &u[0], &y[0], &exo[0], ne, &fb[0], nf)
                yt = _forward_one(&theta[0], &lay, &acts[t, 0])
                y[t] = yt
                if not isfinite(yt):
                    bad = t
                    break
            if bad < 0:
                for t in range(n):
                    adj[t] = 2.0 * (y[t] - target[t])
                for t in range(n - 1, -1, -1):
                    _backward_one(&theta[0], &lay, &acts[t, 0], adj[t], &grad[0], &gx[0],
                                  &buf[0], &buf[lay.max_width])
                    for k in range(nf):
                        d = fb[k]
                        if t >= d:
                            adj[t - d] += gx[ne + k]
    finally:
        _layout_free(&lay)
    return grad_arr, y_arr, bad


def rk4_simulate(const double[::1] tau_fine, int substeps, double dt, double inertia,
                 double viscosity, double stiffness, double theta0, double omega0):
    """Classical RK4 for ``J th'' + B th' + K th = tau``.

    Each sample interval is split into ``substeps`` RK4 steps. ``tau_fine``
    holds the forcing on a grid of spacing ``dt / (2 * substeps)`` (step
    nodes and step midpoints). Returns ``(theta, omega, bad_step)`` sampled
    at the outer grid.
    """
    cdef i64 m2 = 2 * substeps
    cdef i64 n = (tau_fine.shape[0] - 1) // m2 + 1, i, s, q, bad = -1
    th_arr = np.zeros(n, dtype=np.float64)
    om_arr = np.zeros(n, dtype=np.float64)
    cdef double[::1] th_out = th_arr, om_out = om_arr
    cdef double th = theta0, om = omega0, h = dt / substeps, hh = 0.5 * dt / substeps
    cdef double k1t, k1o, k2t, k2o, k3t, k3o, k4t, k4o, t0, tm, t1
    th_out[0] = th
    om_out[0] = om
    with nogil:
        for i in range(n - 1):
            for s in range(substeps):
                q = i * m2 + 2 * s
                t0 = tau_fine[q]
                tm = tau_fine[q + 1]
                t1 = tau_fine[q + 2]
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
            if not (isfinite(th) and isfinite(om)):
                bad = i + 1
                break
    return th_arr, om_arr, bad
