"""Index layout shared by the compiled kernel and its pure-Python twin.

Both kernels operate on flat float arrays so the hot loop never touches
Python objects.  Everything that packs or unpacks those arrays goes through
the names below; the kernels import them at module load, which keeps a
single source of truth.
"""

# controller codes
CTRL_FIXED = 0
CTRL_MATCHING = 1
CTRL_INNER = 2
CTRL_OPEN_LOOP = 3

# reference generators feeding the inner loop
REF_SINE = 0
REF_DROOP = 1
REF_POLAR = 2
REF_VDP = 3

# amplitude-tracking modes
AMP_OFF = 0
AMP_CURRENT = 1
AMP_VOLTAGE = 2

# eta-law variants
ETA_OFF = 0
ETA_EXACT = 1
ETA_VSM = 2

# reactive-shaping modes
SHAPE_OFF = 0
SHAPE_MU = 1
SHAPE_ETA = 2
SHAPE_IDC = 3

# ---- single converter: parameter vector ----
P_CDC = 0
P_GDC = 1
P_IDC = 2
P_R = 3
P_L = 4
P_C = 5
P_ETA = 6
P_MU = 7
P_CTRL = 8
P_AMP_MODE = 9
P_AMP_KP = 10
P_AMP_KI = 11
P_AMP_KX = 12
P_AMP_IREF = 13
P_AMP_VREF = 14
P_AMP_KCP = 15
P_AMP_KCI = 16
P_PID_ON = 17
P_PID_KP = 18
P_PID_KI = 19
P_PID_KD = 20
P_PID_N = 21
P_PID_VREF = 22
P_PID_BIAS = 23
P_ETA_MODE = 24
P_ETA_TAU = 25
P_ETA_J = 26
P_ETA_WREF = 27
P_SHAPE_MODE = 28
P_SHAPE_BASE = 29
P_SHAPE_GAIN = 30
P_REF_KIND = 31
P_KPC = 32
P_KIC = 33
P_KPL = 34
P_REF_W0 = 35
P_REF_AMP = 36
P_REF_SCALE = 37
P_DROOP_P0 = 38
P_DROOP_Q0 = 39
P_DROOP_NF = 40
P_DROOP_NA = 41
P_POLAR_LAMBDA = 42
P_VDP_MU = 43
P_VDP_KAPPA = 44
P_OL_WREF = 45
P_OL_MREF = 46
P_OL_LAMBDA = 47
P_OL_SCALE = 48
P_OL_FEEDBACK = 49
P_OL_VDCREF = 50
P_FIX_MA = 51
P_FIX_MB = 52
P_SHAPE_LAMBDA = 53  # bandwidth of the Q_x measurement filter, 0 = algebraic
NPAR = 54

# ---- single converter: state vector ----
X_VDC = 0
X_IA = 1
X_IB = 2
X_VA = 3
X_VB = 4
X_IG = 5
X_VG = 6
X_ESUP = 7  # running integral of supplied power (DC source minus load)
X_EDIS = 8  # running integral of dissipated power
X_C0 = 9  # first controller slot
X_QF = 17  # low-passed Q_x used by reactive shaping
NX = 18

# matching-control slots
X_XI_A = 9
X_XI_B = 10
X_MU = 11
X_INT_EL = 12
X_INT_EC = 13
X_PID_INT = 14
X_PID_FILT = 15
X_ETA = 16

# inner-loop slots
X_INT_A = 9
X_INT_B = 10
X_THETA = 11
X_VHAT = 12
X_X1A = 13
X_X2A = 14
X_X1B = 15
X_X2B = 16

# open-loop modulation slots
X_OL_THETA = 9
X_OL_VM = 10

# ---- single converter: auxiliary outputs per recorded sample ----
A_MA = 0
A_MB = 1
A_IDC = 2
A_MU = 3
A_ETA = 4
A_ILA = 5
A_ILB = 6
A_FLAGS = 7
A_VREFA = 8
A_VREFB = 9
A_VDC_DOT = 10
NAUX = 11

# load segment columns
L_G = 0
L_B = 1
L_ICA = 2
L_ICB = 3
NLOAD = 4

# flag bits
F_MOD_SAT = 1
F_MU_CLAMP = 2
F_ETA_HOLD = 4
F_IDC_CLAMP = 8
F_CTRL_UNDEF = 16
F_OSC_DEGENERATE = 32
F_AMP_CLAMP = 64

# guards
EPS_DIV = 1e-6
EPS_OSC = 1e-12

# ---- two-converter network ----
TOPO_TREE = 0
TOPO_STAR = 1

NB = 8  # per-converter parameter block: c_dc g_dc i_dc r l c eta mu
NP_RNET = 16
NP_LNET = 17
NP_TOPO = 18
NP_OPEN1 = 19  # line breaker of converter 1 open (star) / line open (tree)
NP_OPEN2 = 20
NPARN = 21

NXB = 7  # per-converter state block: v_dc i_a i_b v_a v_b xi_a xi_b
NX_LINE = 14  # tree: 14,15; star: 14..17
NX_ESUP = 18
NX_EDIS = 19
NXN = 20

NL_G1 = 0
NL_B1 = 1
NL_G2 = 2
NL_B2 = 3
NL_R = 4
NLOADN = 5

NA_M1A = 0
NA_M1B = 1
NA_M2A = 2
NA_M2B = 3
NA_IL1A = 4
NA_IL1B = 5
NA_IL2A = 6
NA_IL2B = 7
NA_VLA = 8
NA_VLB = 9
NA_FLAGS = 10
NAUXN = 11
