"""Command line runner: ``rtspec COMMAND --config run.json [--out DIR] [--seed N] [--threads N]``."""

from __future__ import annotations

import argparse
import json
import os
import sys
import warnings
from math import comb
from pathlib import Path

import numpy as np

from . import config as cfgmod
from . import io
from .config import ConfigError, ExperimentConfig
from .galerkin import build_escape, calibrate_window, k_ceiling, resonances_in_window
from .jointspec import joint_eigenvalues, projector_contour, projector_power
from .koszul import (
    CommutingTuple,
    NonCommutingError,
    build_d,
    cohomology_dims,
    contraction_defect,
    fredholm_index,
    homotopy_defect,
)
from .measures import (
    birkhoff_cone_average,
    cesaro_r_approx,
    correlation,
    default_cone,
    mixing_classify,
    weyl_directions,
)
from .models import ModelError, TrigPolynomial, make_model
from .oracles import brute_force_joint_spectrum, commuting_partner, planted_tuple, same_spectrum
from .parametrix import CutoffProfile, build_F

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


def _model(cfg: ExperimentConfig):
    return make_model(cfg.model, eps=cfg.eps, A0=cfg.A0)


def _profiles(cfg, kappa):
    if not cfg.profiles:
        return None
    if len(cfg.profiles) != kappa:
        raise ConfigError(f"need {kappa} profiles, got {len(cfg.profiles)}")
    return tuple(CutoffProfile(p.family, p.center, p.width, p.skew) for p in cfg.profiles)


# ---------------------------------------------------------------- check


def run_check(cfg: ExperimentConfig, out: Path) -> tuple[bool, dict]:
    """Identity and oracle suites on seeded random commuting tuples."""
    rng = np.random.default_rng(cfg.seed)
    tol = cfg.tolerances
    report = {"identities": 0, "oracle": 0, "failures": []}
    if cfg.inject_noncommuting:
        A = rng.normal(size=(4, 4))
        try:
            CommutingTuple([A, A.T], tol_comm=tol.comm)
        except NonCommutingError as e:
            report["failures"].append({"suite": "input", "diagnostic": str(e)})
            return False, report
    for i in range(cfg.n_tuples):
        n = int(rng.integers(1, cfg.max_n + 1))
        kappa = int(rng.integers(1, cfg.max_kappa + 1))
        P = planted_tuple(rng, n, kappa, symmetric=bool(i % 3 == 0))
        X = P.gens
        lam = rng.normal(size=kappa) + 1j * rng.normal(size=kappa)
        d = build_d(X, lam).full
        Y = commuting_partner(rng, X)
        A = rng.normal(size=kappa)
        defects = {
            "dd": float(np.linalg.norm(d @ d)),
            "contraction": contraction_defect(X, lam, A),
            "homotopy": homotopy_defect(X, Y, lam),
        }
        scale = X.scale * max(Y.scale, 1) * (1 + np.abs(lam).max())
        bad = {k: v for k, v in defects.items() if v >= tol.identity * scale}
        if bad:
            report["failures"].append({"suite": "identities", "tuple": i, "defects": bad})
        else:
            report["identities"] += 1
        if n <= 8:
            js = [(e.lam, e.alg_mult) for e in joint_eigenvalues(X, tol=tol.joint)]
            bf = brute_force_joint_spectrum(X)
            ok = same_spectrum(js, bf, tol.joint * 10) and same_spectrum(bf, P.spectrum, 1e-6)
            for mu, m in P.spectrum:
                dims = cohomology_dims(build_d(X, -mu), scale=X.scale)
                ok &= fredholm_index(dims) == 0
                if P.symmetric:
                    ok &= dims == tuple(m * comb(kappa, j) for j in range(kappa + 1))
            if ok:
                report["oracle"] += 1
            else:
                report["failures"].append({"suite": "oracle", "tuple": i})
    # projector consistency on a diagonal unitary-type example
    D = np.diag(np.exp(1j * np.array([0.0, 0.0, 1.0, 2.0])) * np.array([1, 1, 0.5, 0.3]))
    P1, _ = projector_power(D)
    P2 = projector_contour(np.eye(4) - D, 0.2)
    if np.linalg.norm(P1 - P2) > 1e-8:
        report["failures"].append({"suite": "projectors", "difference": float(np.linalg.norm(P1 - P2))})
    return not report["failures"], report


# ---------------------------------------------------------------- spectra


def run_jointspec(cfg, out):
    if cfg.tuple:
        mats = [io.matrix_from_json(m) for m in cfg.tuple]
        X = CommutingTuple(mats, tol_comm=cfg.tolerances.comm)
    else:
        rng = np.random.default_rng(cfg.seed)
        X = planted_tuple(rng, cfg.max_n, cfg.max_kappa).gens
    spec = joint_eigenvalues(X, tol=cfg.tolerances.joint, rank_tol=cfg.tolerances.rank, seed=cfg.seed or 0)
    rows = []
    for e in spec:
        rec = e.to_json()
        rec["cohomology"] = list(cohomology_dims(build_d(X, -e.lam), cfg.tolerances.rank, scale=X.scale))
        rec["parametrixDefect"] = build_F(X, -e.lam, _profiles(cfg, X.kappa)).defect
        rows.append(rec)
    io.write_json(out / "jointspec.json", {"kappa": X.kappa, "n": X.n, "eigenvalues": rows}, cfg.digest())
    return True, {"count": len(rows)}


def resonance_header(kappa):
    h = []
    for j in range(kappa):
        h += [f"re_lambda_{j + 1}", f"im_lambda_{j + 1}"]
    return h + ["residual_kernel", "residual_F", "status", "mult"] + [f"h{j}" for j in range(kappa + 1)]


def _resonances(cfg, model):
    esc = build_escape(model, tuple(cfg.cone_angles))
    win = calibrate_window(model, cfg.K, cfg.N, escape=esc, omega=cfg.omega, threshold=cfg.tolerances.window)
    res, win = resonances_in_window(
        model, cfg.K, cfg.N, window=win, step=cfg.grid_step, re_max=cfg.re_max, tol=cfg.tolerances.resonance,
        stability=cfg.tolerances.stability, threads=cfg.threads or 1, escape=esc,
    )
    return res, win, esc


def run_resonances(cfg, out):
    model = _model(cfg)
    if cfg.K > k_ceiling(model):
        raise ConfigError(f"K = {cfg.K} exceeds the ceiling {k_ceiling(model)}")
    res, win, esc = _resonances(cfg, model)
    rows = [r.row() + [r.alg_mult] + list(r.dims) for r in res]
    io.write_csv(out / "resonances.csv", resonance_header(model.kappa), rows, cfg.digest())
    prov = {
        "model": model.to_json(), "K": cfg.K, "N": cfg.N, "coneAngles": list(esc.cone_angles),
        "seed": cfg.seed, "window": win.to_json(),
    }
    io.write_json(out / "provenance.json", prov, cfg.digest())
    return True, {"count": len(rows)}


# ---------------------------------------------------------------- measures


def run_measures(cfg, out):
    model = _model(cfg)
    rng = np.random.default_rng(cfg.seed)
    cone = default_cone(model, T=cfg.T)
    rows, ok = [], True
    for i in range(cfg.n_pairs):
        u = TrigPolynomial.random_real(model, rng)
        v = TrigPolynomial.random_real(model, rng, positive=True)
        exact = u.integral(model) * v.integral(model)
        b = birkhoff_cone_average(model, u, v, cone, cfg.n_samples, seed=cfg.seed + 2 * i)
        c = cesaro_r_approx(model, u, v, cone, int(cfg.T), cfg.n_samples, seed=cfg.seed + 2 * i + 1)
        agree = b.within(exact, 3) and abs(b.value - c.value) <= 2 * np.hypot(b.stderr, c.stderr)
        ok &= bool(agree)
        rows.append([i, exact.real, b.value.real, b.stderr, c.value.real, c.stderr, agree])
    header = ["pair", "exact", "birkhoff", "birkhoff_stderr", "cesaro", "cesaro_stderr", "agree"]
    io.write_csv(out / "measures.csv", header, rows, cfg.digest())
    return ok, {"pairs": len(rows)}


def run_mixing(cfg, out):
    model = _model(cfg)
    res, win, _ = _resonances(cfg, model)
    dirs = weyl_directions(model, cfg.n_directions, seed=cfg.seed)
    corrs = []
    for k, A in enumerate(dirs):
        for j in range(model.kappa):
            f = TrigPolynomial.fiber_character(model, j)
            corrs.append(correlation(model, A, f, f, cfg.times, cfg.n_samples, seed=cfg.seed + k))
    verdict = mixing_classify(res, corrs)
    io.write_json(out / "mixing.json", verdict.to_json(), cfg.digest())
    rows = [[k, *r] for k, c in enumerate(corrs) for r in c.rows()]
    io.write_csv(out / "correlations.csv", ["series", "t", "re_C", "im_C", "stderr"], rows, cfg.digest())
    return verdict.verdict != "inconsistent", {"verdict": verdict.verdict}


def run_plotdata(cfg, out):
    if not cfg.input:
        raise ConfigError("plotdata needs an input resonance CSV (config 'input' or --input)")
    header, rows, _ = io.read_csv(cfg.input)
    if header:
        kappa = sum(1 for h in header if h.startswith("re_lambda_"))
    else:
        kappa = len(cfg.A0) if cfg.A0 else _model(cfg).kappa
    A0 = np.asarray(cfg.A0 if cfg.A0 else np.ones(kappa), dtype=float)
    if len(A0) != kappa:
        raise ConfigError("A0 length differs from the resonance table")
    out_rows = []
    for r in rows:
        lam = np.array([r[2 * j] + 1j * r[2 * j + 1] for j in range(kappa)])
        out_rows.append([float(lam.real @ A0)] + list(lam.imag))
    io.write_csv(out / "plot.csv", ["re_lambda_A0"] + [f"im_lambda_{j + 1}" for j in range(kappa)], out_rows, cfg.digest())
    return True, {"points": len(out_rows)}


RUNNERS = {
    "check": run_check,
    "jointspec": run_jointspec,
    "resonances": run_resonances,
    "measures": run_measures,
    "mixing": run_mixing,
    "plotdata": run_plotdata,
}


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="rtspec", description=__doc__)
    ap.add_argument("command", choices=sorted(RUNNERS))
    ap.add_argument("--config", type=Path)
    ap.add_argument("--out", type=Path)
    ap.add_argument("--seed", type=int)
    ap.add_argument("--threads", type=int)
    ap.add_argument("--input", type=Path, help="resonance CSV for plotdata")
    args = ap.parse_args(argv)
    try:
        data = {}
        if args.config:
            with open(args.config) as fh:
                try:
                    data = json.load(fh)
                except json.JSONDecodeError as e:
                    raise ConfigError(f"{args.config}:{e.lineno}: {e.msg}") from None
        data.setdefault("command", args.command)
        if data["command"] != args.command:
            raise ConfigError(f"config is for {data['command']!r}, not {args.command!r}")
        if args.seed is not None:
            data["seed"] = args.seed
        if args.out is not None:
            data["out"] = str(args.out)
        if args.input is not None:
            data["input"] = str(args.input)
        threads = args.threads or data.get("threads") or os.environ.get("RT_THREADS")
        data["threads"] = int(threads) if threads else 1
        cfg = cfgmod.from_dict(data)
        cfg.require_seed()
        out = Path(cfg.out)
        out.mkdir(parents=True, exist_ok=True)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            ok, summary = RUNNERS[args.command](cfg, out)
    except (ConfigError, ModelError, io.ParseError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    print(json.dumps({"command": args.command, "ok": ok, **summary}, default=str))
    return EXIT_OK if ok else EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
