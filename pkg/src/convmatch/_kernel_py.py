"""Pure-Python twin of the compiled RK4 kernels.

Same algorithm, same array contracts, same operation order as
``_kernel.pyx``.  Used when the extension is not built, or when
``CONVMATCH_PURE_PYTHON=1`` is set; roughly two orders of magnitude slower.
"""

from math import cos, isfinite, sin, sqrt

from ._layout import (
    A_ETA, A_FLAGS, A_IDC, A_ILA, A_ILB, A_MA, A_MB, A_MU, A_VDC_DOT, A_VREFA,
    A_VREFB, AMP_VOLTAGE, CTRL_INNER, CTRL_MATCHING, CTRL_OPEN_LOOP, EPS_DIV,
    EPS_OSC, ETA_EXACT, F_AMP_CLAMP, F_CTRL_UNDEF, F_ETA_HOLD, F_IDC_CLAMP,
    F_MOD_SAT, F_MU_CLAMP, F_OSC_DEGENERATE, L_B, L_G, L_ICA, L_ICB, NA_FLAGS,
    NA_IL1A, NA_M1A, NA_VLA, NB, NL_B1, NL_G1, NL_R, NP_LNET, NP_OPEN1, NP_RNET, NP_TOPO,
    NX_EDIS, NX_ESUP, NX_LINE, NXB, P_AMP_IREF, P_AMP_KCI, P_AMP_KCP, P_AMP_KI,
    P_AMP_KP, P_AMP_KX, P_AMP_MODE, P_AMP_VREF, P_C, P_CDC, P_CTRL,
    P_DROOP_NA, P_DROOP_NF, P_DROOP_P0, P_DROOP_Q0, P_ETA, P_ETA_J,
    P_ETA_MODE, P_ETA_TAU, P_ETA_WREF, P_FIX_MA, P_FIX_MB, P_GDC, P_IDC,
    P_KIC, P_KPC, P_KPL, P_L, P_MU, P_OL_FEEDBACK, P_OL_LAMBDA, P_OL_MREF,
    P_OL_SCALE, P_OL_VDCREF, P_OL_WREF, P_PID_BIAS, P_PID_KD, P_PID_KI,
    P_PID_KP, P_PID_N, P_PID_ON, P_PID_VREF, P_POLAR_LAMBDA, P_R, P_REF_AMP,
    P_REF_KIND, P_REF_SCALE, P_REF_W0, P_SHAPE_BASE, P_SHAPE_GAIN, P_SHAPE_LAMBDA,
    P_SHAPE_MODE, P_VDP_KAPPA, P_VDP_MU, REF_DROOP, REF_SINE, REF_VDP,
    SHAPE_ETA, SHAPE_IDC, SHAPE_MU, TOPO_STAR, X_EDIS, X_ESUP, X_ETA, X_IA,
    X_IB, X_IG, X_INT_A, X_INT_B, X_INT_EC, X_INT_EL, X_MU, X_OL_THETA,
    X_OL_VM, X_PID_FILT, X_PID_INT, X_THETA, X_VA, X_VB, X_VDC, X_VG, X_VHAT,
    X_QF, X_X1A, X_X1B, X_X2A, X_X2B, X_XI_A, X_XI_B,
)

BACKEND = "python"


def conv_deriv(x, p, ld, dx, aux):
    flags = 0
    code = int(p[P_CTRL])
    amp_mode = eta_mode = shape = 0
    vdc = x[X_VDC]
    ia = x[X_IA]
    ib = x[X_IB]
    va = x[X_VA]
    vb = x[X_VB]
    g = ld[L_G]
    b = ld[L_B]
    ila = g * va - b * vb + ld[L_ICA]
    ilb = b * va + g * vb + ld[L_ICB]
    idc = p[P_IDC]
    mu = p[P_MU]
    eta = p[P_ETA]
    ma = mb = vra = vrb = 0.0
    xa = xb = 0.0
    pid_frozen = 0
    sat = 0
    for i in range(len(dx)):
        dx[i] = 0.0

    if code == CTRL_MATCHING:
        xa = x[X_XI_A]
        xb = x[X_XI_B]
        amp_mode = int(p[P_AMP_MODE])
        eta_mode = int(p[P_ETA_MODE])
        shape = int(p[P_SHAPE_MODE])
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
        kind = int(p[P_REF_KIND])
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


def _renorm(x, ia, ib):
    n = sqrt(x[ia] * x[ia] + x[ib] * x[ib])
    if n > 0.0:
        x[ia] = x[ia] / n
        x[ib] = x[ib] / n


def _rk4_loop(deriv, post, x0, par, seg_step, seg_load, n_steps, dt,
              record_every, out_x, out_aux):
    nx = len(x0)
    naux = out_aux.shape[1]
    p = [float(v) for v in par]
    loads = [[float(v) for v in row] for row in seg_load]
    steps = [int(s) for s in seg_step]
    nseg = len(steps)
    x = [float(v) for v in x0]
    k1 = [0.0] * nx
    k2 = [0.0] * nx
    k3 = [0.0] * nx
    k4 = [0.0] * nx
    aux = [0.0] * 32
    h2 = 0.5 * dt
    h6 = dt / 6.0
    flags = 0
    status = 0
    last_ok = 0
    seg = 0
    ld = loads[0]
    flags |= deriv(x, p, ld, k1, aux)
    out_x[0, :] = x
    out_aux[0, :] = aux[:naux]
    rec = 1
    for k in range(n_steps):
        while seg + 1 < nseg and k >= steps[seg + 1]:
            seg += 1
        ld = loads[seg]
        flags |= deriv(x, p, ld, k1, aux)
        xs = [x[i] + h2 * k1[i] for i in range(nx)]
        flags |= deriv(xs, p, ld, k2, aux)
        xs = [x[i] + h2 * k2[i] for i in range(nx)]
        flags |= deriv(xs, p, ld, k3, aux)
        xs = [x[i] + dt * k3[i] for i in range(nx)]
        flags |= deriv(xs, p, ld, k4, aux)
        xs = [x[i] + h6 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]) for i in range(nx)]
        post(xs, p)
        if not all(isfinite(v) for v in xs):
            status = 1
            break
        x = xs
        last_ok = k + 1
        if (k + 1) % record_every == 0:
            while seg + 1 < nseg and k + 1 >= steps[seg + 1]:
                seg += 1
            ld = loads[seg]
            flags |= deriv(x, p, ld, k1, aux)
            out_x[rec, :] = x
            out_aux[rec, :] = aux[:naux]
            rec += 1
    return rec, flags, status, last_ok


def _conv_post(xs, p):
    if int(p[P_CTRL]) == CTRL_MATCHING:
        _renorm(xs, X_XI_A, X_XI_B)
        if p[P_AMP_MODE] != 0.0:
            if xs[X_MU] > 1.0:
                xs[X_MU] = 1.0
            elif xs[X_MU] < 0.0:
                xs[X_MU] = 0.0


def run_converter(x0, par, seg_step, seg_load, n_steps, dt, record_every, out_x, out_aux):
    """Same contract as the compiled ``run_converter``."""
    return _rk4_loop(conv_deriv, _conv_post, x0, par, seg_step, seg_load,
                     n_steps, dt, record_every, out_x, out_aux)


def net_deriv(x, p, ld, dx, aux):
    flags = 0
    star = int(p[NP_TOPO]) == TOPO_STAR
    rn = p[NP_RNET]
    ln = p[NP_LNET]
    vla = vlb = 0.0
    sup = 0.0
    dis = 0.0
    ina = [0.0, 0.0]
    inb = [0.0, 0.0]
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
            ila = ilb = 0.0
            sa = ina[k]
            sb = inb[k]
        else:
            g = ld[NL_G1 + 2 * k]
            b = ld[NL_B1 + 2 * k]
            ila = g * va - b * vb
            ilb = b * va + g * vb
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
    aux[NA_VLA + 1] = vlb
    aux[NA_FLAGS] = flags
    return flags


def _net_post(xs, p):
    _renorm(xs, 5, 6)
    _renorm(xs, NXB + 5, NXB + 6)


def run_network(x0, par, seg_step, seg_load, n_steps, dt, record_every, out_x, out_aux):
    """Same contract as the compiled ``run_network``."""
    return _rk4_loop(net_deriv, _net_post, x0, par, seg_step, seg_load,
                     n_steps, dt, record_every, out_x, out_aux)


def run_linear(a, x0, n_steps, dt, record_every, out_x):
    """Same contract as the compiled ``run_linear``."""
    a = [[float(v) for v in row] for row in a]
    nx = len(x0)
    rows = range(nx)
    x = [float(v) for v in x0]
    h2 = 0.5 * dt
    h6 = dt / 6.0
    out_x[0, :] = x
    rec = 1
    status = 0
    last_ok = 0

    def mv(v):
        return [sum(a[i][j] * v[j] for j in rows) for i in rows]

    for k in range(n_steps):
        k1 = mv(x)
        k2 = mv([x[i] + h2 * k1[i] for i in rows])
        k3 = mv([x[i] + h2 * k2[i] for i in rows])
        k4 = mv([x[i] + dt * k3[i] for i in rows])
        xs = [x[i] + h6 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]) for i in rows]
        if not all(isfinite(v) for v in xs):
            status = 1
            break
        x = xs
        last_ok = k + 1
        if (k + 1) % record_every == 0:
            out_x[rec, :] = x
            rec += 1
    return rec, 0, status, last_ok
