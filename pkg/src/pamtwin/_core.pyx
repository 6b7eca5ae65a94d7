# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=False
"""Compiled twin of the pure-Python plant kernels (see pamtwin.plant).

Arithmetic mirrors the reference path operation-for-operation so that both
backends produce identical IEEE-754 results. Keep the two in sync.
"""

from libc.math cimport sin, cos, sqrt, fabs, copysign, pow, isfinite

from .errors import DomainError, StepFailure


cdef class Model:
    cdef double r_p, r, L0, M, g, P_tank, P_out, k, R, T
    cdef double J, k_s, c_s, D1, D2, D3
    cdef double p_v11, p_v21, p_w11, p_w21, p_v12, p_v22, p_w12, p_w22
    cdef double A_11, A_21, A_12, A_22
    cdef double k1, k2, Tp_coeff, mu_s, T_stp, l_min, l_max, p_floor
    cdef double crit, h
    cdef bint locked
    cdef object _keep  # keeps the map arrays alive
    cdef double[::1] m1u, m1a, m2u, m2a

    def __init__(self, tuple scalars, m1u, m1a, m2u, m2a, bint locked):
        (self.r_p, self.r, self.L0, self.M, self.g,
         self.P_tank, self.P_out, self.k, self.R, self.T,
         self.J, self.k_s, self.c_s,
         self.D1, self.D2, self.D3,
         self.p_v11, self.p_v21, self.p_w11, self.p_w21,
         self.p_v12, self.p_v22, self.p_w12, self.p_w22,
         self.A_11, self.A_21, self.A_12, self.A_22,
         self.k1, self.k2, self.Tp_coeff, self.mu_s,
         self.T_stp, self.l_min, self.l_max, self.p_floor) = scalars
        self._keep = (m1u, m1a, m2u, m2a)
        self.m1u = m1u
        self.m1a = m1a
        self.m2u = m2u
        self.m2a = m2a
        self.locked = locked
        self.crit = (2.0 / (self.k + 1.0)) ** (self.k / (self.k - 1.0))
        self.h = self.T_stp

    cdef double _open_rate(self, double u, int valve):
        cdef double[::1] us = self.m1u if valve == 1 else self.m2u
        cdef double[::1] aa = self.m1a if valve == 1 else self.m2a
        cdef Py_ssize_t n = us.shape[0]
        cdef Py_ssize_t i
        if u <= us[0]:
            return aa[0]
        if u >= us[n - 1]:
            return aa[n - 1]
        for i in range(1, n):
            if u <= us[i]:
                return aa[i - 1] + (aa[i] - aa[i - 1]) * (u - us[i - 1]) / (us[i] - us[i - 1])
        return aa[n - 1]

    cdef double _m_in(self, double P, double A0):
        cdef double k = self.k
        cdef double coef
        cdef double ratio
        if P < self.P_out: P = self.P_out
        if P > self.P_tank: P = self.P_tank
        coef = A0 * self.P_tank / sqrt(self.T)
        if P <= self.P_tank * self.crit:
            return coef * sqrt(k / self.R * pow(2.0 / (k + 1.0), (k + 1.0) / (k - 1.0)))
        ratio = P / self.P_tank
        return (coef * sqrt(2.0 * k / (self.R * (k - 1.0)))
                * pow(ratio, 1.0 / k) * sqrt(1.0 - pow(ratio, (k - 1.0) / k)))

    cdef double _m_out(self, double P, double A0):
        cdef double k = self.k
        cdef double coef
        cdef double ratio
        if P < self.P_out: P = self.P_out
        if P > self.P_tank: P = self.P_tank
        coef = A0 * P / sqrt(self.T)
        if self.P_out <= P * self.crit:
            return coef * sqrt(k / self.R * pow(2.0 / (k + 1.0), (k + 1.0) / (k - 1.0)))
        ratio = self.P_out / P
        return (coef * sqrt(2.0 * k / (self.R * (k - 1.0)))
                * pow(ratio, 1.0 / k) * sqrt(1.0 - pow(ratio, (k - 1.0) / k)))

    cdef double _net_flow(self, double u, double P, int valve):
        cdef double alpha = self._open_rate(u, valve)
        cdef double A_fwd = self.A_11 if valve == 1 else self.A_12
        cdef double A_rev = self.A_21 if valve == 1 else self.A_22
        cdef double probe = alpha * self._m_in(P, A_fwd) - (1.0 - alpha) * self._m_out(P, A_fwd)
        cdef double A0 = A_fwd if probe > 0.0 else A_rev
        return alpha * self._m_in(P, A0) - (1.0 - alpha) * self._m_out(P, A0)

    cdef double _vol(self, double l) except *:
        if not (self.l_min <= l <= self.l_max):
            raise DomainError(
                f"muscle length {l:.4f} m outside validity interval "
                f"[{self.l_min}, {self.l_max}] m"
            )
        return self.D1 * l * l + self.D2 * l + self.D3

    cdef double _force(self, double P, double l, int side):
        cdef double v, w
        if side == 1:
            v = self.p_v11 * l + self.p_v21
            w = self.p_w11 * l + self.p_w21
        else:
            v = self.p_v12 * l + self.p_v22
            w = self.p_w12 * l + self.p_w22
        return v * P + w

    cdef void _deriv(self, double* x, double u1, double u2, double T_f, double* dx) except *:
        cdef double psi = x[0]
        cdef double psi_dot = x[1]
        cdef double P1 = x[2]
        cdef double P2 = x[3]
        cdef double dL = self.r * sin(psi)
        cdef double l1 = self.L0 - dL
        cdef double l2 = self.L0 + dL
        cdef double V1 = self._vol(l1)
        cdef double V2 = self._vol(l2)
        cdef double l1_dot = -self.r * cos(psi) * psi_dot
        cdef double V1_dot = (2.0 * self.D1 * l1 + self.D2) * l1_dot
        cdef double V2_dot = (2.0 * self.D1 * l2 + self.D2) * (-l1_dot)
        cdef double F1 = self._force(P1, l1, 1)
        cdef double F2 = self._force(P2, l2, 2)
        cdef double tau = self.r * cos(psi) * (F1 - F2)
        cdef double m1 = self._net_flow(u1, P1, 1)
        cdef double m2 = self._net_flow(u2, P2, 2)
        dx[0] = psi_dot
        dx[1] = (tau - T_f - self.k_s * psi) / self.J
        dx[2] = self.k1 * self.R * self.T / V1 * m1 - self.k2 * (V1_dot / V1) * P1
        dx[3] = self.k1 * self.R * self.T / V2 * m2 - self.k2 * (V2_dot / V2) * P2

    cdef void _step_c(self, double* x, double u1, double u2, double* out) except *:
        cdef double psi = x[0]
        cdef double psi_dot = x[1]
        cdef double P1 = x[2]
        cdef double P2 = x[3]
        cdef double h = self.h
        cdef double dL, l1, l2, V1, V2
        cdef double a1, b1, a2, b2, a3, b3, a4, b4, P1n, P2n
        cdef double F1, F2, tau, T0, pred, T_s, T_p, Z, T_f, T_c
        cdef double floor_p, P1e, P2e, d1, d2
        cdef bint stick
        cdef double k1v[4]
        cdef double k2v[4]
        cdef double k3v[4]
        cdef double k4v[4]
        cdef double xs[4]
        cdef double psi_n, vel_n

        if self.locked:
            dL = self.r * sin(psi)
            l1 = self.L0 - dL
            l2 = self.L0 + dL
            V1 = self._vol(l1)
            V2 = self._vol(l2)
            a1 = self.k1 * self.R * self.T / V1 * self._net_flow(u1, P1, 1)
            b1 = self.k1 * self.R * self.T / V2 * self._net_flow(u2, P2, 2)
            a2 = self.k1 * self.R * self.T / V1 * self._net_flow(u1, P1 + 0.5 * h * a1, 1)
            b2 = self.k1 * self.R * self.T / V2 * self._net_flow(u2, P2 + 0.5 * h * b1, 2)
            a3 = self.k1 * self.R * self.T / V1 * self._net_flow(u1, P1 + 0.5 * h * a2, 1)
            b3 = self.k1 * self.R * self.T / V2 * self._net_flow(u2, P2 + 0.5 * h * b2, 2)
            a4 = self.k1 * self.R * self.T / V1 * self._net_flow(u1, P1 + h * a3, 1)
            b4 = self.k1 * self.R * self.T / V2 * self._net_flow(u2, P2 + h * b3, 2)
            P1n = P1 + h / 6.0 * (a1 + 2.0 * a2 + 2.0 * a3 + a4)
            P2n = P2 + h / 6.0 * (b1 + 2.0 * b2 + 2.0 * b3 + b4)
            if not (isfinite(P1n) and isfinite(P2n)):
                raise StepFailure(
                    f"locked step produced non-finite pressures from {(psi, psi_dot, P1, P2)}"
                )
            if P1n < self.P_out: P1n = self.P_out
            if P1n > self.P_tank: P1n = self.P_tank
            if P2n < self.P_out: P2n = self.P_out
            if P2n > self.P_tank: P2n = self.P_tank
            out[0] = psi
            out[1] = 0.0
            out[2] = P1n
            out[3] = P2n
            return

        dL = self.r * sin(psi)
        l1 = self.L0 - dL
        l2 = self.L0 + dL
        F1 = self._force(P1, l1, 1)
        F2 = self._force(P2, l2, 2)
        tau = self.r * cos(psi) * (F1 - F2)
        T0 = tau - self.k_s * psi
        pred = psi_dot + T0 * h / self.J
        T_s = self.r_p * self.mu_s * fabs(F1 + F2 - self.M * self.g)
        floor_p = self.P_out + self.p_floor
        P1e = P1 if P1 > floor_p else floor_p
        P2e = P2 if P2 > floor_p else floor_p
        d1 = P1e - self.P_out
        d2 = P2e - self.P_out
        T_p = self.Tp_coeff * (1.0 / (d1 * d1) + 1.0 / (d2 * d2))
        Z = self.J / h
        T_c = T_s + T_p
        stick = fabs(pred) <= Z * T_c
        if fabs(pred) > Z * T_c:
            T_f = (T_c * copysign(1.0, pred) + self.c_s * pred) / (1.0 + Z * self.c_s)
        else:
            T_f = pred / Z

        self._deriv(x, u1, u2, T_f, k1v)
        xs[0] = psi + 0.5 * h * k1v[0]
        xs[1] = psi_dot + 0.5 * h * k1v[1]
        xs[2] = P1 + 0.5 * h * k1v[2]
        xs[3] = P2 + 0.5 * h * k1v[3]
        self._deriv(xs, u1, u2, T_f, k2v)
        xs[0] = psi + 0.5 * h * k2v[0]
        xs[1] = psi_dot + 0.5 * h * k2v[1]
        xs[2] = P1 + 0.5 * h * k2v[2]
        xs[3] = P2 + 0.5 * h * k2v[3]
        self._deriv(xs, u1, u2, T_f, k3v)
        xs[0] = psi + h * k3v[0]
        xs[1] = psi_dot + h * k3v[1]
        xs[2] = P1 + h * k3v[2]
        xs[3] = P2 + h * k3v[3]
        self._deriv(xs, u1, u2, T_f, k4v)
        psi_n = psi + h / 6.0 * (k1v[0] + 2.0 * k2v[0] + 2.0 * k3v[0] + k4v[0])
        vel_n = psi_dot + h / 6.0 * (k1v[1] + 2.0 * k2v[1] + 2.0 * k3v[1] + k4v[1])
        P1n = P1 + h / 6.0 * (k1v[2] + 2.0 * k2v[2] + 2.0 * k3v[2] + k4v[2])
        P2n = P2 + h / 6.0 * (k1v[3] + 2.0 * k2v[3] + 2.0 * k3v[3] + k4v[3])

        if stick:
            vel_n = 0.0
        elif T_f * vel_n < 0.0:
            vel_n = 0.0

        if not (isfinite(psi_n) and isfinite(vel_n) and isfinite(P1n) and isfinite(P2n)):
            raise StepFailure(
                f"step produced non-finite state from {(psi, psi_dot, P1, P2)}"
            )
        if P1n < self.P_out: P1n = self.P_out
        if P1n > self.P_tank: P1n = self.P_tank
        if P2n < self.P_out: P2n = self.P_out
        if P2n > self.P_tank: P2n = self.P_tank
        out[0] = psi_n
        out[1] = vel_n
        out[2] = P1n
        out[3] = P2n

    def step(self, x, u):
        cdef double xin[4]
        cdef double xout[4]
        xin[0] = x[0]; xin[1] = x[1]; xin[2] = x[2]; xin[3] = x[3]
        self._step_c(xin, u[0], u[1], xout)
        return (xout[0], xout[1], xout[2], xout[3])

    def propagate(self, double[:, ::1] points, double u1, double u2, double[:, ::1] out):
        cdef Py_ssize_t i
        cdef double xin[4]
        cdef double xout[4]
        for i in range(points.shape[0]):
            xin[0] = points[i, 0]; xin[1] = points[i, 1]
            xin[2] = points[i, 2]; xin[3] = points[i, 3]
            self._step_c(xin, u1, u2, xout)
            out[i, 0] = xout[0]; out[i, 1] = xout[1]
            out[i, 2] = xout[2]; out[i, 3] = xout[3]

    def simulate(self, double[:, ::1] U, noise, double[:, ::1] out):
        """Fill out[1:] from out[0] under the input sequence U (N, 2)."""
        cdef Py_ssize_t n = U.shape[0]
        cdef Py_ssize_t k
        cdef double xin[4]
        cdef double xout[4]
        cdef bint noisy = noise is not None
        cdef double[:, ::1] w
        if noisy:
            w = noise
        xin[0] = out[0, 0]; xin[1] = out[0, 1]; xin[2] = out[0, 2]; xin[3] = out[0, 3]
        for k in range(n):
            self._step_c(xin, U[k, 0], U[k, 1], xout)
            if noisy:
                xout[0] = xout[0] + w[k, 0]
                xout[1] = xout[1] + w[k, 1]
                xout[2] = xout[2] + w[k, 2]
                xout[3] = xout[3] + w[k, 3]
                if xout[2] < self.P_out: xout[2] = self.P_out
                if xout[2] > self.P_tank: xout[2] = self.P_tank
                if xout[3] < self.P_out: xout[3] = self.P_out
                if xout[3] > self.P_tank: xout[3] = self.P_tank
            out[k + 1, 0] = xout[0]; out[k + 1, 1] = xout[1]
            out[k + 1, 2] = xout[2]; out[k + 1, 3] = xout[3]
            xin[0] = xout[0]; xin[1] = xout[1]; xin[2] = xout[2]; xin[3] = xout[3]
