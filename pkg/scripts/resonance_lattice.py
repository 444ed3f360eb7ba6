"""Resonances of a suspension model in the calibrated window, printed as a table.

    python3 scripts/resonance_lattice.py --model arnold-product --K 32 --omega 7
    python3 scripts/resonance_lattice.py --model arnold --eps 0.1 --csv out/eps01.csv
"""

import argparse
import time

import numpy as np

from ruelle_taylor import io
from ruelle_taylor.cli import resonance_header
from ruelle_taylor.galerkin import build_escape, calibrate_window, resonances_in_window
from ruelle_taylor.models import make_model


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--model", default="arnold-product")
    ap.add_argument("--eps", type=float, default=None, help="cosine perturbation of the unit roof")
    ap.add_argument("--K", type=int, default=32)
    ap.add_argument("--N", type=float, default=2.0)
    ap.add_argument("--omega", type=float, default=7.0)
    ap.add_argument("--csv", help="also write the table here")
    args = ap.parse_args()

    model = make_model(args.model, eps=args.eps)
    t0 = time.perf_counter()
    esc = build_escape(model)
    win = calibrate_window(model, args.K, args.N, escape=esc, omega=args.omega)
    res, win = resonances_in_window(model, args.K, args.N, window=win, escape=esc)
    print(f"{model.name}: K={args.K} N={args.N:g} c_X={win.c_X:.4f} C_L2={win.c_l2:.4f} "
          f"boundary={win.boundary:.4f} ({time.perf_counter() - t0:.1f} s)")
    for r in res:
        coords = "  ".join(f"{z.real:+.8f}{z.imag:+.8f}i" for z in r.lam)
        print(f"  {coords}   dims {r.dims}  mult {r.alg_mult}  {r.status}")
    if args.csv:
        rows = [r.row() + [r.alg_mult] + list(r.dims) for r in res]
        io.write_csv(args.csv, resonance_header(model.kappa), rows)
        print(f"wrote {args.csv}")
    return np.array([r.lam for r in res])


if __name__ == "__main__":
    main()
