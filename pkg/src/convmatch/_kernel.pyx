# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled RK4 kernels for the single-converter closed loop and the
two-converter network.

Mirrors ``_kernel_py`` line for line; the test suite runs both on the same
inputs and compares the traces.
"""

from libc.math cimport sin, cos, sqrt, isfinite
from libc.string cimport memcpy

from convmatch import _layout as _L

cdef int CTRL_FIXED = _L.CTRL_FIXED
cdef int CTRL_MATCHING = _L.CTRL_MATCHING
cdef int CTRL_INNER = _L.CTRL_INNER
cdef int CTRL_OPEN_LOOP = _L.CTRL_OPEN_LOOP
cdef int REF_SINE = _L.REF_SINE
cdef int REF_DROOP = _L.REF_DROOP
cdef int REF_POLAR = _L.REF_POLAR
cdef int REF_VDP = _L.REF_VDP
cdef int AMP_VOLTAGE = _L.AMP_VOLTAGE
cdef int ETA_EXACT = _L.ETA_EXACT
cdef int ETA_VSM = _L.ETA_VSM
cdef int SHAPE_MU = _L.SHAPE_MU
cdef int SHAPE_ETA = _L.SHAPE_ETA
cdef int SHAPE_IDC = _L.SHAPE_IDC

cdef int P_CDC = _L.P_CDC
cdef int P_GDC = _L.P_GDC
cdef int P_IDC = _L.P_IDC
cdef int P_R = _L.P_R
cdef int P_L = _L.P_L
cdef int P_C = _L.P_C
cdef int P_ETA = _L.P_ETA
cdef int P_MU = _L.P_MU
cdef int P_CTRL = _L.P_CTRL
cdef int P_AMP_MODE = _L.P_AMP_MODE
cdef int P_AMP_KP = _L.P_AMP_KP
cdef int P_AMP_KI = _L.P_AMP_KI
cdef int P_AMP_KX = _L.P_AMP_KX
cdef int P_AMP_IREF = _L.P_AMP_IREF
cdef int P_AMP_VREF = _L.P_AMP_VREF
cdef int P_AMP_KCP = _L.P_AMP_KCP
cdef int P_AMP_KCI = _L.P_AMP_KCI
cdef int P_PID_ON = _L.P_PID_ON
cdef int P_PID_KP = _L.P_PID_KP
cdef int P_PID_KI = _L.P_PID_KI
cdef int P_PID_KD = _L.P_PID_KD
cdef int P_PID_N = _L.P_PID_N
cdef int P_PID_VREF = _L.P_PID_VREF
cdef int P_PID_BIAS = _L.P_PID_BIAS
cdef int P_ETA_MODE = _L.P_ETA_MODE
cdef int P_ETA_TAU = _L.P_ETA_TAU
cdef int P_ETA_J = _L.P_ETA_J
cdef int P_ETA_WREF = _L.P_ETA_WREF
cdef int P_SHAPE_MODE = _L.P_SHAPE_MODE
cdef int P_SHAPE_BASE = _L.P_SHAPE_BASE
cdef int P_SHAPE_GAIN = _L.P_SHAPE_GAIN
cdef int P_SHAPE_LAMBDA = _L.P_SHAPE_LAMBDA
cdef int P_REF_KIND = _L.P_REF_KIND
cdef int P_KPC = _L.P_KPC
cdef int P_KIC = _L.P_KIC
cdef int P_KPL = _L.P_KPL
cdef int P_REF_W0 = _L.P_REF_W0
cdef int P_REF_AMP = _L.P_REF_AMP
cdef int P_REF_SCALE = _L.P_REF_SCALE
cdef int P_DROOP_P0 = _L.P_DROOP_P0
cdef int P_DROOP_Q0 = _L.P_DROOP_Q0
cdef int P_DROOP_NF = _L.P_DROOP_NF
cdef int P_DROOP_NA = _L.P_DROOP_NA
cdef int P_POLAR_LAMBDA = _L.P_POLAR_LAMBDA
cdef int P_VDP_MU = _L.P_VDP_MU
cdef int P_VDP_KAPPA = _L.P_VDP_KAPPA
cdef int P_OL_WREF = _L.P_OL_WREF
cdef int P_OL_MREF = _L.P_OL_MREF
cdef int P_OL_LAMBDA = _L.P_OL_LAMBDA
cdef int P_OL_SCALE = _L.P_OL_SCALE
cdef int P_OL_FEEDBACK = _L.P_OL_FEEDBACK
cdef int P_OL_VDCREF = _L.P_OL_VDCREF
cdef int P_FIX_MA = _L.P_FIX_MA
cdef int P_FIX_MB = _L.P_FIX_MB

cdef int X_VDC = _L.X_VDC
cdef int X_IA = _L.X_IA
cdef int X_IB = _L.X_IB
cdef int X_VA = _L.X_VA
cdef int X_VB = _L.X_VB
cdef int X_IG = _L.X_IG
cdef int X_VG = _L.X_VG
cdef int X_ESUP = _L.X_ESUP
cdef int X_EDIS = _L.X_EDIS
cdef int X_XI_A = _L.X_XI_A
cdef int X_XI_B = _L.X_XI_B
cdef int X_MU = _L.X_MU
cdef int X_INT_EL = _L.X_INT_EL
cdef int X_INT_EC = _L.X_INT_EC
cdef int X_PID_INT = _L.X_PID_INT
cdef int X_PID_FILT = _L.X_PID_FILT
cdef int X_ETA = _L.X_ETA
cdef int X_QF = _L.X_QF
cdef int X_INT_A = _L.X_INT_A
cdef int X_INT_B = _L.X_INT_B
cdef int X_THETA = _L.X_THETA
cdef int X_VHAT = _L.X_VHAT
cdef int X_X1A = _L.X_X1A
cdef int X_X2A = _L.X_X2A
cdef int X_X1B = _L.X_X1B
cdef int X_X2B = _L.X_X2B
cdef int X_OL_THETA = _L.X_OL_THETA
cdef int X_OL_VM = _L.X_OL_VM

cdef int A_MA = _L.A_MA
cdef int A_MB = _L.A_MB
cdef int A_IDC = _L.A_IDC
cdef int A_MU = _L.A_MU
cdef int A_ETA = _L.A_ETA
cdef int A_ILA = _L.A_ILA
cdef int A_ILB = _L.A_ILB
cdef int A_FLAGS = _L.A_FLAGS
cdef int A_VREFA = _L.A_VREFA
cdef int A_VREFB = _L.A_VREFB
cdef int A_VDC_DOT = _L.A_VDC_DOT

cdef int L_G = _L.L_G
cdef int L_B = _L.L_B
cdef int L_ICA = _L.L_ICA
cdef int L_ICB = _L.L_ICB

cdef int F_MOD_SAT = _L.F_MOD_SAT
cdef int F_MU_CLAMP = _L.F_MU_CLAMP
cdef int F_ETA_HOLD = _L.F_ETA_HOLD
cdef int F_IDC_CLAMP = _L.F_IDC_CLAMP
cdef int F_CTRL_UNDEF = _L.F_CTRL_UNDEF
cdef int F_OSC_DEGENERATE = _L.F_OSC_DEGENERATE
cdef int F_AMP_CLAMP = _L.F_AMP_CLAMP
cdef double EPS_DIV = _L.EPS_DIV
cdef double EPS_OSC = _L.EPS_OSC

cdef int TOPO_STAR = _L.TOPO_STAR
cdef int NB = _L.NB
cdef int NP_RNET = _L.NP_RNET
cdef int NP_LNET = _L.NP_LNET
cdef int NP_TOPO = _L.NP_TOPO
cdef int NP_OPEN1 = _L.NP_OPEN1
cdef int NXB = _L.NXB
cdef int NX_LINE = _L.NX_LINE
cdef int NX_ESUP = _L.NX_ESUP
cdef int NX_EDIS = _L.NX_EDIS
cdef int NL_G1 = _L.NL_G1
cdef int NL_B1 = _L.NL_B1
cdef int NL_G2 = _L.NL_G2
cdef int NL_B2 = _L.NL_B2
cdef int NL_R = _L.NL_R
cdef int NA_M1A = _L.NA_M1A
cdef int NA_IL1A = _L.NA_IL1A
cdef int NA_VLA = _L.NA_VLA
cdef int NA_VLB = _L.NA_VLB
cdef int NA_FLAGS = _L.NA_FLAGS

cdef enum:
    MAXX = 32

BACKEND = "compiled"


cdef int conv_deriv(const double* x, const double* p, const double* ld,
                    double* dx, double* aux, int nx) noexcept nogil:
    cdef int flags = 0
    cdef int code = <int>p[P_CTRL]
    cdef int i, kind = 0, amp_mode = 0, eta_mode = 0, shape = 0
    cdef double vdc = x[X_VDC]
    cdef double ia = x[X_IA]
    cdef double ib = x[X_IB]
    cdef double va = x[X_VA]
    cdef double vb = x[X_VB]
    cdef double g = ld[L_G]
    cdef double b = ld[L_B]
    cdef double ila = g * va - b * vb + ld[L_ICA]
    cdef double ilb = b * va + g * vb + ld[L_ICB]
    cdef double idc = p[P_IDC]
    cdef double mu = p[P_MU]
    cdef double eta = p[P_ETA]
    cdef double ma = 0.0, mb = 0.0, vra = 0.0, vrb = 0.0
    cdef double xa = 0.0, xb = 0.0, q_unit, qx, den, e, th, vh, amp, pw, qw, nm
    cdef double il_amp, v_amp, iref, e_l, e_c, vx_ref, e_x, dmu, w
    cdef double eca, ecb, ira, irb, ela, elb, x1a, x2a, x1b, x2b, fb
    cdef double dvdc, ix
    cdef int pid_frozen = 0, sat = 0, amp_frozen = 0

    for i in range(nx):
        dx[i] = 0.0

    if code == CTRL_MATCHING:
        xa = x[X_XI_A]
        xb = x[X_XI_B]
        amp_mode = <int>p[P_AMP_MODE]
        eta_mode = <int>p[P_ETA_MODE]
        shape = <int>p[P_SHAPE_MODE]
        # reactive power per unit of mu: Q_x = mu * q_unit
        q_unit = 0.5 * vdc * (xb * ia - xa * ib)
        if amp_mode != 0:
            mu = x[X_MU]
        elif shape == SHAPE_MU:
            if p[P_SHAPE_LAMBDA] > 0.0:
                mu = p[P_SHAPE_BASE] + p[P_SHAPE_GAIN] * x[X_QF]
                if mu > 1.0:
                    mu = 1.0
                    flags |= F_MU_CLAMP
                elif mu < 0.0:
                    mu = 0.0
                    flags |= F_MU_CLAMP
            else:
                den = 1.0 - p[P_SHAPE_GAIN] * q_unit
                if den <= p[P_SHAPE_BASE]:
                    mu = 1.0
                    flags |= F_MU_CLAMP
                else:
                    mu = p[P_SHAPE_BASE] / den
        qx = mu * q_unit
        if shape != 0 and p[P_SHAPE_LAMBDA] > 0.0:
            dx[X_QF] = p[P_SHAPE_LAMBDA] * (qx - x[X_QF])
            qx = x[X_QF]
        if p[P_PID_ON] != 0.0:
            e = p[P_PID_VREF] - vdc
            idc = (p[P_PID_BIAS] + p[P_PID_KP] * e + p[P_PID_KI] * x[X_PID_INT]
                   + p[P_PID_KD] * p[P_PID_N] * (e - x[X_PID_FILT]))
            if idc < 0.0:
                idc = 0.0
                flags |= F_IDC_CLAMP
                pid_frozen = 1
        elif shape == SHAPE_IDC:
            idc = p[P_SHAPE_BASE] + p[P_SHAPE_GAIN] * qx
            if idc < 0.0:
                idc = 0.0
                flags |= F_IDC_CLAMP
        if eta_mode != 0:
            eta = x[X_ETA]
        elif shape == SHAPE_ETA:
            eta = p[P_SHAPE_BASE] + p[P_SHAPE_GAIN] * qx
            if eta < EPS_OSC:
                eta = EPS_OSC
                flags |= F_ETA_HOLD
        ma = mu * xa
        mb = mu * xb
    elif code == CTRL_INNER:
        kind = <int>p[P_REF_KIND]
        if kind == REF_VDP:
            x1a = x[X_X1A]
            x2a = x[X_X2A]
            x1b = x[X_X1B]
            x2b = x[X_X2B]
            w = p[P_REF_W0]
            dx[X_X1A] = w * x2a
            dx[X_X2A] = -w * x1a + p[P_VDP_MU] * (1.0 - x1a * x1a) * x2a + p[P_VDP_KAPPA] * ila
            dx[X_X1B] = w * x2b
            dx[X_X2B] = -w * x1b + p[P_VDP_MU] * (1.0 - x1b * x1b) * x2b + p[P_VDP_KAPPA] * ilb
            den = sqrt(x1a * x1a + x1b * x1b)
            if den < EPS_OSC:
                flags |= F_OSC_DEGENERATE
            else:
                vra = p[P_REF_AMP] * x1a / den
                vrb = p[P_REF_AMP] * x1b / den
        else:
            th = x[X_THETA]
            if kind == REF_SINE:
                dx[X_THETA] = p[P_REF_W0]
                amp = p[P_REF_AMP]
            else:
                pw = va * ila + vb * ilb
                qw = vb * ila - va * ilb
                dx[X_THETA] = p[P_REF_W0] + p[P_DROOP_NF] * (p[P_DROOP_P0] - pw)
                if kind == REF_DROOP:
                    vh = p[P_REF_AMP] + p[P_DROOP_NA] * (p[P_DROOP_Q0] - qw)
                else:
                    vh = x[X_VHAT]
                    dx[X_VHAT] = p[P_POLAR_LAMBDA] * (
                        p[P_REF_AMP] + p[P_DROOP_NA] * (p[P_DROOP_Q0] - qw) - vh)
                if vh < 0.0:
                    vh = 0.0
                    flags |= F_AMP_CLAMP
                amp = p[P_REF_SCALE] * vh
            vra = -amp * sin(th)
            vrb = amp * cos(th)
        eca = vra - va
        ecb = vrb - vb
        ira = p[P_KPC] * eca + p[P_KIC] * x[X_INT_A] + ila
        irb = p[P_KPC] * ecb + p[P_KIC] * x[X_INT_B] + ilb
        ela = ira - ia
        elb = irb - ib
        if vdc <= EPS_DIV:
            flags |= F_CTRL_UNDEF
        else:
            ma = (2.0 / vdc) * (va + p[P_KPL] * ela + p[P_R] * ia)
            mb = (2.0 / vdc) * (vb + p[P_KPL] * elb + p[P_R] * ib)
        dx[X_INT_A] = eca
        dx[X_INT_B] = ecb
    elif code == CTRL_OPEN_LOOP:
        th = x[X_OL_THETA]
        vh = x[X_OL_VM]
        dx[X_OL_THETA] = p[P_OL_WREF]
        if p[P_OL_FEEDBACK] != 0.0:
            fb = 2.0 * sqrt(va * va + vb * vb) / (p[P_OL_SCALE] * p[P_OL_VDCREF])
        else:
            fb = vh
        dx[X_OL_VM] = p[P_OL_LAMBDA] * (p[P_OL_MREF] - fb)
        ma = -p[P_OL_SCALE] * vh * sin(th)
        mb = p[P_OL_SCALE] * vh * cos(th)
    else:
        ma = p[P_FIX_MA]
        mb = p[P_FIX_MB]

    nm = sqrt(ma * ma + mb * mb)
    if nm > 1.0:
        ma = ma / nm
        mb = mb / nm
        flags |= F_MOD_SAT
        sat = 1

    # averaged converter
    ix = 0.5 * (ma * ia + mb * ib)
    dvdc = (-p[P_GDC] * vdc + idc - ix) / p[P_CDC]
    dx[X_VDC] = dvdc
    dx[X_IA] = (-p[P_R] * ia + 0.5 * ma * vdc - va) / p[P_L]
    dx[X_IB] = (-p[P_R] * ib + 0.5 * mb * vdc - vb) / p[P_L]
    dx[X_VA] = (ia - ila) / p[P_C]
    dx[X_VB] = (ib - ilb) / p[P_C]
    dx[X_IG] = (-p[P_R] * x[X_IG] - x[X_VG]) / p[P_L]
    dx[X_VG] = x[X_IG] / p[P_C]
    dx[X_ESUP] = idc * vdc - (ila * va + ilb * vb)
    dx[X_EDIS] = p[P_GDC] * vdc * vdc + p[P_R] * (ia * ia + ib * ib)

    if code == CTRL_MATCHING:
        w = eta * vdc
        dx[X_XI_A] = -w * xb
        dx[X_XI_B] = w * xa
        if amp_mode != 0:
            if vdc <= EPS_DIV:
                flags |= F_CTRL_UNDEF
            else:
                il_amp = sqrt(ia * ia + ib * ib)
                v_amp = sqrt(va * va + vb * vb)
                if amp_mode == AMP_VOLTAGE:
                    e_c = v_amp - p[P_AMP_VREF]
                    iref = (sqrt(ila * ila + ilb * ilb) - p[P_AMP_KCP] * e_c
                            - p[P_AMP_KCI] * x[X_INT_EC])
                else:
                    e_c = 0.0
                    iref = p[P_AMP_IREF]
                e_l = il_amp - iref
                vx_ref = -p[P_AMP_KP] * e_l - p[P_AMP_KI] * x[X_INT_EL] + v_amp
                e_x = 0.5 * mu * vdc - vx_ref
                dmu = -(p[P_AMP_KX] / vdc) * e_x
                if (mu >= 1.0 and dmu > 0.0) or (mu <= 0.0 and dmu < 0.0):
                    flags |= F_MU_CLAMP
                else:
                    dx[X_MU] = dmu
                    dx[X_INT_EL] = e_l
                    dx[X_INT_EC] = e_c
        if p[P_PID_ON] != 0.0:
            e = p[P_PID_VREF] - vdc
            if pid_frozen == 0:
                dx[X_PID_INT] = e
            dx[X_PID_FILT] = p[P_PID_N] * (e - x[X_PID_FILT])
        if eta_mode != 0:
            if vdc <= EPS_DIV:
                flags |= F_ETA_HOLD
            elif eta_mode == ETA_EXACT:
                dx[X_ETA] = (p[P_ETA_TAU] / vdc) * (p[P_ETA_WREF] - eta * vdc) - (eta / vdc) * dvdc
            else:
                dx[X_ETA] = (-(p[P_ETA_TAU] / vdc) * (eta * vdc - p[P_ETA_WREF])
                             + eta * p[P_GDC] / p[P_CDC]
                             - p[P_ETA_J] * eta * dvdc / vdc) / (1.0 + p[P_ETA_J])
    elif code == CTRL_INNER and sat:
        # integrator freeze while the modulation is clamped
        dx[X_INT_A] = 0.0
        dx[X_INT_B] = 0.0

    aux[A_MA] = ma
    aux[A_MB] = mb
    aux[A_IDC] = idc
    aux[A_MU] = mu
    aux[A_ETA] = eta
    aux[A_ILA] = ila
    aux[A_ILB] = ilb
    aux[A_FLAGS] = flags
    aux[A_VREFA] = vra
    aux[A_VREFB] = vrb
    aux[A_VDC_DOT] = dvdc
    return flags


cdef inline void renorm(double* x, int ia, int ib) noexcept nogil:
    cdef double n = sqrt(x[ia] * x[ia] + x[ib] * x[ib])
    if n > 0.0:
        x[ia] = x[ia] / n
        x[ib] = x[ib] / n


def run_converter(double[::1] x0, double[::1] par, long[::1] seg_step,
                  double[:, ::1] seg_load, long n_steps, double dt,
                  long record_every, double[:, ::1] out_x, double[:, ::1] out_aux):
    """Integrate one converter with its controller by classical RK4.

    Returns ``(n_recorded, flags, status, last_step)``; ``status`` is 0 on
    success and 1 when a non-finite state appeared, in which case
    ``last_step`` is the last step whose state was finite.
    """
    cdef int nx = x0.shape[0]
    cdef int naux = out_aux.shape[1]
    cdef double x[MAXX]
    cdef double xs[MAXX]
    cdef double k1[MAXX]
    cdef double k2[MAXX]
    cdef double k3[MAXX]
    cdef double k4[MAXX]
    cdef double aux[MAXX]
    cdef double* p = &par[0]
    cdef const double* ld
    cdef long k, seg = 0, nseg = seg_step.shape[0], rec = 0
    cdef int i, flags = 0, status = 0
    cdef int code = <int>par[P_CTRL]
    cdef int clamp_mu = code == CTRL_MATCHING and par[P_AMP_MODE] != 0.0
    cdef double h2 = 0.5 * dt, h6 = dt / 6.0
    cdef long last_ok = 0
    if nx > MAXX:
        raise ValueError("state too large for the compiled kernel")
    for i in range(nx):
        x[i] = x0[i]
    with nogil:
        ld = &seg_load[0, 0]
        flags |= conv_deriv(x, p, ld, k1, aux, nx)
        for i in range(nx):
            out_x[0, i] = x[i]
        for i in range(naux):
            out_aux[0, i] = aux[i]
        rec = 1
        for k in range(n_steps):
            while seg + 1 < nseg and k >= seg_step[seg + 1]:
                seg += 1
            ld = &seg_load[seg, 0]
            flags |= conv_deriv(x, p, ld, k1, aux, nx)
            for i in range(nx):
                xs[i] = x[i] + h2 * k1[i]
            flags |= conv_deriv(xs, p, ld, k2, aux, nx)
            for i in range(nx):
                xs[i] = x[i] + h2 * k2[i]
            flags |= conv_deriv(xs, p, ld, k3, aux, nx)
            for i in range(nx):
                xs[i] = x[i] + dt * k3[i]
            flags |= conv_deriv(xs, p, ld, k4, aux, nx)
            for i in range(nx):
                xs[i] = x[i] + h6 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
            if code == CTRL_MATCHING:
                renorm(xs, X_XI_A, X_XI_B)
            if clamp_mu:
                if xs[X_MU] > 1.0:
                    xs[X_MU] = 1.0
                elif xs[X_MU] < 0.0:
                    xs[X_MU] = 0.0
            for i in range(nx):
                if not isfinite(xs[i]):
                    status = 1
                    break
            if status:
                break
            memcpy(x, xs, nx * sizeof(double))
            last_ok = k + 1
            if (k + 1) % record_every == 0:
                # the sample at step k+1 sees the segment active at that time
                while seg + 1 < nseg and k + 1 >= seg_step[seg + 1]:
                    seg += 1
                ld = &seg_load[seg, 0]
                flags |= conv_deriv(x, p, ld, k1, aux, nx)
                for i in range(nx):
                    out_x[rec, i] = x[i]
                for i in range(naux):
                    out_aux[rec, i] = aux[i]
                rec += 1
    return rec, flags, status, last_ok


cdef int net_deriv(const double* x, const double* p, const double* ld,
                   double* dx, double* aux) noexcept nogil:
    cdef int k, o, q, flags = 0
    cdef int star = <int>p[NP_TOPO] == TOPO_STAR
    cdef double rn = p[NP_RNET], ln = p[NP_LNET]
    cdef double vdc, ia, ib, va, vb, xa, xb, ma, mb, ila, ilb, g, b
    cdef double sa, sb, vla = 0.0, vlb = 0.0
    cdef double sup = 0.0, dis = 0.0
    cdef double ina[2]
    cdef double inb[2]
    if star:
        ina[0] = x[NX_LINE]
        inb[0] = x[NX_LINE + 1]
        ina[1] = x[NX_LINE + 2]
        inb[1] = x[NX_LINE + 3]
        vla = ld[NL_R] * (ina[0] + ina[1])
        vlb = ld[NL_R] * (inb[0] + inb[1])
    for k in range(2):
        o = k * NXB
        q = k * NB
        vdc = x[o]
        ia = x[o + 1]
        ib = x[o + 2]
        va = x[o + 3]
        vb = x[o + 4]
        xa = x[o + 5]
        xb = x[o + 6]
        ma = p[q + 7] * xa
        mb = p[q + 7] * xb
        if star:
            ila = 0.0
            ilb = 0.0
            sa = ina[k]
            sb = inb[k]
        else:
            g = ld[NL_G1 + 2 * k]
            b = ld[NL_B1 + 2 * k]
            ila = g * va - b * vb
            ilb = b * va + g * vb
            # bus 1 sources the line, bus 2 receives it
            if k == 0:
                sa = x[NX_LINE]
                sb = x[NX_LINE + 1]
            else:
                sa = -x[NX_LINE]
                sb = -x[NX_LINE + 1]
        dx[o] = (-p[q + 1] * vdc + p[q + 2] - 0.5 * (ma * ia + mb * ib)) / p[q]
        dx[o + 1] = (-p[q + 3] * ia + 0.5 * ma * vdc - va) / p[q + 4]
        dx[o + 2] = (-p[q + 3] * ib + 0.5 * mb * vdc - vb) / p[q + 4]
        dx[o + 3] = (ia - sa - ila) / p[q + 5]
        dx[o + 4] = (ib - sb - ilb) / p[q + 5]
        dx[o + 5] = -p[q + 6] * vdc * xb
        dx[o + 6] = p[q + 6] * vdc * xa
        sup += p[q + 2] * vdc - (ila * va + ilb * vb)
        dis += p[q + 1] * vdc * vdc + p[q + 3] * (ia * ia + ib * ib)
        aux[NA_M1A + 2 * k] = ma
        aux[NA_M1A + 2 * k + 1] = mb
        aux[NA_IL1A + 2 * k] = ila
        aux[NA_IL1A + 2 * k + 1] = ilb
    if star:
        for k in range(2):
            o = k * NXB
            if p[NP_OPEN1 + k] != 0.0:
                dx[NX_LINE + 2 * k] = 0.0
                dx[NX_LINE + 2 * k + 1] = 0.0
            else:
                dx[NX_LINE + 2 * k] = (-rn * ina[k] + x[o + 3] - vla) / ln
                dx[NX_LINE + 2 * k + 1] = (-rn * inb[k] + x[o + 4] - vlb) / ln
            dis += rn * (ina[k] * ina[k] + inb[k] * inb[k])
        sup -= vla * (ina[0] + ina[1]) + vlb * (inb[0] + inb[1])
    else:
        if p[NP_OPEN1] != 0.0 or p[NP_OPEN1 + 1] != 0.0:
            dx[NX_LINE] = 0.0
            dx[NX_LINE + 1] = 0.0
        else:
            dx[NX_LINE] = (-rn * x[NX_LINE] + x[3] - x[NXB + 3]) / ln
            dx[NX_LINE + 1] = (-rn * x[NX_LINE + 1] + x[4] - x[NXB + 4]) / ln
        dx[NX_LINE + 2] = 0.0
        dx[NX_LINE + 3] = 0.0
        dis += rn * (x[NX_LINE] * x[NX_LINE] + x[NX_LINE + 1] * x[NX_LINE + 1])
    dx[NX_ESUP] = sup
    dx[NX_EDIS] = dis
    aux[NA_VLA] = vla
    aux[NA_VLB] = vlb
    aux[NA_FLAGS] = flags
    return flags


def run_network(double[::1] x0, double[::1] par, long[::1] seg_step,
                double[:, ::1] seg_load, long n_steps, double dt,
                long record_every, double[:, ::1] out_x, double[:, ::1] out_aux):
    """Integrate the two-converter network; same return contract as
    :func:`run_converter`."""
    cdef int nx = x0.shape[0]
    cdef int naux = out_aux.shape[1]
    cdef double x[MAXX]
    cdef double xs[MAXX]
    cdef double k1[MAXX]
    cdef double k2[MAXX]
    cdef double k3[MAXX]
    cdef double k4[MAXX]
    cdef double aux[MAXX]
    cdef double* p = &par[0]
    cdef const double* ld
    cdef long k, seg = 0, nseg = seg_step.shape[0], rec = 0
    cdef int i, flags = 0, status = 0
    cdef double h2 = 0.5 * dt, h6 = dt / 6.0
    cdef long last_ok = 0
    if nx > MAXX:
        raise ValueError("state too large for the compiled kernel")
    for i in range(nx):
        x[i] = x0[i]
    with nogil:
        ld = &seg_load[0, 0]
        flags |= net_deriv(x, p, ld, k1, aux)
        for i in range(nx):
            out_x[0, i] = x[i]
        for i in range(naux):
            out_aux[0, i] = aux[i]
        rec = 1
        for k in range(n_steps):
            while seg + 1 < nseg and k >= seg_step[seg + 1]:
                seg += 1
            ld = &seg_load[seg, 0]
            flags |= net_deriv(x, p, ld, k1, aux)
            for i in range(nx):
                xs[i] = x[i] + h2 * k1[i]
            flags |= net_deriv(xs, p, ld, k2, aux)
            for i in range(nx):
                xs[i] = x[i] + h2 * k2[i]
            flags |= net_deriv(xs, p, ld, k3, aux)
            for i in range(nx):
                xs[i] = x[i] + dt * k3[i]
            flags |= net_deriv(xs, p, ld, k4, aux)
            for i in range(nx):
                xs[i] = x[i] + h6 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
            renorm(xs, 5, 6)
            renorm(xs, NXB + 5, NXB + 6)
            for i in range(nx):
                if not isfinite(xs[i]):
                    status = 1
                    break
            if status:
                break
            memcpy(x, xs, nx * sizeof(double))
            last_ok = k + 1
            if (k + 1) % record_every == 0:
                while seg + 1 < nseg and k + 1 >= seg_step[seg + 1]:
                    seg += 1
                ld = &seg_load[seg, 0]
                flags |= net_deriv(x, p, ld, k1, aux)
                for i in range(nx):
                    out_x[rec, i] = x[i]
                for i in range(naux):
                    out_aux[rec, i] = aux[i]
                rec += 1
    return rec, flags, status, last_ok


def run_linear(double[:, ::1] a, double[::1] x0, long n_steps, double dt,
               long record_every, double[:, ::1] out_x):
    """RK4 for the autonomous linear system ``x' = A x``.

    Exogenous rotating inputs are handled by augmenting the state with the
    generator, so this one routine covers every linear oracle in the suite.
    """
    cdef int nx = x0.shape[0]
    cdef double x[MAXX]
    cdef double xs[MAXX]
    cdef double k1[MAXX]
    cdef double k2[MAXX]
    cdef double k3[MAXX]
    cdef double k4[MAXX]
    cdef double h2 = 0.5 * dt, h6 = dt / 6.0, acc
    cdef long k, rec = 0, last_ok = 0
    cdef int i, j, status = 0
    if nx > MAXX:
        raise ValueError("state too large for the compiled kernel")
    for i in range(nx):
        x[i] = x0[i]
    with nogil:
        for i in range(nx):
            out_x[0, i] = x[i]
        rec = 1
        for k in range(n_steps):
            for i in range(nx):
                acc = 0.0
                for j in range(nx):
                    acc = acc + a[i, j] * x[j]
                k1[i] = acc
            for i in range(nx):
                xs[i] = x[i] + h2 * k1[i]
            for i in range(nx):
                acc = 0.0
                for j in range(nx):
                    acc = acc + a[i, j] * xs[j]
                k2[i] = acc
            for i in range(nx):
                xs[i] = x[i] + h2 * k2[i]
            for i in range(nx):
                acc = 0.0
                for j in range(nx):
                    acc = acc + a[i, j] * xs[j]
                k3[i] = acc
            for i in range(nx):
                xs[i] = x[i] + dt * k3[i]
            for i in range(nx):
                acc = 0.0
                for j in range(nx):
                    acc = acc + a[i, j] * xs[j]
                k4[i] = acc
            for i in range(nx):
                xs[i] = x[i] + h6 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
                if not isfinite(xs[i]):
                    status = 1
            if status:
                break
            memcpy(x, xs, nx * sizeof(double))
            last_ok = k + 1
            if (k + 1) % record_every == 0:
                for i in range(nx):
                    out_x[rec, i] = x[i]
                rec += 1
    return rec, 0, status, last_ok
