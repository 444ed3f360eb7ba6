"""Correlation of the fiber character under the flow, constant roof against a perturbed roof.

With a constant roof the correlation never decays and the resonances 2 pi i n sit on
the imaginary axis; a cosine perturbation moves them left and the correlation decays.

    python3 scripts/mixing_demo.py --eps 0 0.1 0.2 --tmax 60
"""

import argparse

import numpy as np

from ruelle_taylor.galerkin import build_escape, calibrate_window, resonances_in_window
from ruelle_taylor.measures import correlation, mixing_classify
from ruelle_taylor.models import TrigPolynomial, make_model


def run(eps, K, times, n_samples, seed):
    model = make_model("arnold", eps=eps or None)
    esc = build_escape(model)
    win = calibrate_window(model, K, 2.0, escape=esc, omega=7.0)
    res, _ = resonances_in_window(model, K, 2.0, window=win, escape=esc)
    f = TrigPolynomial.fiber_character(model)
    c = correlation(model, [1.0], f, f, times, n_samples, seed=seed)
    return res, c, mixing_classify(res, [c])


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--eps", type=float, nargs="+", default=[0.0, 0.1])
    ap.add_argument("--K", type=int, default=32)
    ap.add_argument("--tmax", type=float, default=60.0)
    ap.add_argument("--samples", type=int, default=20_000)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    times = np.arange(0.0, args.tmax + 1e-9, 4.0)
    for eps in args.eps:
        res, c, v = run(eps, args.K, times, args.samples, args.seed)
        gap = [r.lam[0] for r in res if abs(r.lam[0]) > 1e-6]
        lead = max(gap, key=lambda z: z.real) if gap else None
        print(f"eps={eps:g}: {v.verdict}, decay time {c.decay_time()}, leading nonzero resonance {lead}")
        for t, z in zip(c.times, c.values):
            print(f"    t={t:5.1f}  |C|/|C0| = {abs(z) / abs(c.c0):.4f}")


if __name__ == "__main__":
    main()
