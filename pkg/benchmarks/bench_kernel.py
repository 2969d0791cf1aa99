"""Compiled vs pure-Python RK4 kernel throughput.

Both backends get byte-identical packed inputs; the script reports steps
per second and the largest state difference at the end of the run.

    python3 benchmarks/bench_kernel.py --steps 20000
"""

import argparse
import json
import time

import numpy as np

from convmatch import _kernel_py, _layout as L
from convmatch.matching_ctrl import MatchingController
from convmatch.network import _load_table, build_network, pack_network
from convmatch.plant import ConverterParams, LoadModel, PlantState, pack_params
from convmatch.sim import SimConfig

try:
    from convmatch import _kernel as _kernel_c
except ImportError:
    _kernel_c = None


def converter_case(n):
    p = ConverterParams()
    par = pack_params(p)
    x0 = np.zeros(L.NX)
    x0[:L.X_ESUP] = PlantState(v_dc=1000.0).as_array()
    MatchingController().pack(par, x0, p)
    rows = np.ascontiguousarray(LoadModel.constant(0.3, 0.001).as_rows())
    steps = np.zeros(1, dtype=np.int_)

    def run(mod):
        out_x = np.zeros((n + 1, L.NX))
        out_aux = np.zeros((n + 1, L.NAUX))
        mod.run_converter(x0.copy(), par, steps, rows, n, 1e-6, 1, out_x, out_aux)
        return out_x[-1]

    return run


def network_case(n):
    params, state = build_network({"topology": "tree", "loads": [[(0.0, 0.3, 0.001)], [(0.0, 0.1, 0.0)]]})
    par = pack_network(params)
    x0 = state.as_array()
    steps, rows = _load_table(params, SimConfig())

    def run(mod):
        out_x = np.zeros((n + 1, L.NXN))
        out_aux = np.zeros((n + 1, L.NAUXN))
        mod.run_network(x0.copy(), par, steps, rows, n, 1e-6, 1, out_x, out_aux)
        return out_x[-1]

    return run


def timed(fn, mod, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        x = fn(mod)
        best = min(best, time.perf_counter() - t0)
    return best, x


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--steps", type=int, default=20000)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--json", action="store_true", help="print one JSON object instead of a table")
    args = ap.parse_args(argv)
    if _kernel_c is None:
        raise SystemExit("compiled kernel not built; run `pip install -e . --no-build-isolation`")

    rows = []
    for name, make in (("converter", converter_case), ("network", network_case)):
        fn = make(args.steps)
        t_c, x_c = timed(fn, _kernel_c, args.repeat)
        t_py, x_py = timed(fn, _kernel_py, 1)
        rows.append({
            "case": name,
            "steps": args.steps,
            "compiled_steps_per_s": args.steps / t_c,
            "python_steps_per_s": args.steps / t_py,
            "speedup": t_py / t_c,
            "max_abs_diff": float(np.max(np.abs(x_c - x_py))),
        })
    if args.json:
        print(json.dumps(rows, indent=2))
        return
    print(f"{'case':<10} {'compiled/s':>12} {'python/s':>12} {'speedup':>8} {'max|dx|':>10}")
    for r in rows:
        print(f"{r['case']:<10} {r['compiled_steps_per_s']:>12.0f} {r['python_steps_per_s']:>12.0f} "
              f"{r['speedup']:>8.1f} {r['max_abs_diff']:>10.2e}")


if __name__ == "__main__":
    main()
