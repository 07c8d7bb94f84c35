"""Batch command-line interface.

Every subcommand reads one JSON config (``--config``), applies the targeted
overrides ``--alpha``, ``--seed`` and ``--out``, and writes a JSON report
plus an optional CSV projection.  Exit status: 0 when every record passes,
1 on a failed check or a recorded module error, 2 on usage/config errors,
3 on an internal error.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
import traceback
import warnings
from pathlib import Path

import numpy as np

from .chain_model import TargetSet, discretize_diffusion_1d, invariant_measure
from .config import ExperimentConfig, config_from_dict, parse_config, resolve_seed
from .dirichlet_spectral import spectral_gap
from .errors import ConfigError, HitgapError
from .report import build_report, emit_report

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_INTERNAL = 0, 1, 2, 3

ID_TOL = 1e-9
AGREEMENT_TOL = 1e-6
MC_SIGMAS = 4.0


class Run:
    """Collects records, per-item errors and wall-clock timings for one command."""

    def __init__(self):
        self.records = []
        self.errors = []
        self.timings = {}

    def item(self, rid, fn):
        t0 = time.perf_counter()
        try:
            out = fn()
        except HitgapError as exc:
            self.errors.append({"id": rid, "error": type(exc).__name__, "message": str(exc)})
            out = None
        self.timings[rid] = time.perf_counter() - t0
        if out is not None:
            self.records.extend(out if isinstance(out, list) else [out])


def _record(kind, rid, measured, passed, status="checked"):
    return {"kind": kind, "id": rid, "pass": passed, "status": status, "measured": measured}


def _alphas(cfg: ExperimentConfig, threshold: float) -> list:
    a = cfg.effective["alphas"]
    if isinstance(a, dict):
        return [(f"{f:g}*alpha_star", f * threshold) for f in a["fractions_of_threshold"]]
    return [(f"{v:g}", float(v)) for v in a]


# ---------------------------------------------------------------------------
# subcommands


def cmd_gap(cfg: ExperimentConfig, seed: int, run: Run) -> None:
    chain = cfg.chain()

    def go():
        m = invariant_measure(chain)
        rep = spectral_gap(chain, m)
        scale = max(1.0, float(np.max(np.abs(np.diag(chain.Q)))))
        return _record("gap", "gap", {"n": chain.n, "gap": rep.gap, "poincare_c": rep.poincare_c,
                                      "method": rep.method, "residual": rep.residual,
                                      "reversible": m.reversible}, rep.residual <= 1e-8 * scale)

    run.item("gap", go)


def _threshold_records(chain, measure, gap, targets):
    from .potentials import blowup_threshold

    out = []
    for K in targets:
        rep = blowup_threshold(chain, measure, K)
        piK = measure.mass(K)
        measured = dict(rep.to_dict(), K=K.describe(), pi_K=piK, gap=gap, pi_K_gap=piK * gap,
                        slack=rep.alpha_star - piK * gap)
        out.append(_record("threshold", K.describe(), measured, rep.agreement <= AGREEMENT_TOL))
    return out


def cmd_threshold(cfg: ExperimentConfig, seed: int, run: Run) -> None:
    chain = cfg.chain()
    m = invariant_measure(chain)
    gap = spectral_gap(chain, m).gap
    for K in cfg.targets():
        run.item(f"threshold/{K.describe()}", lambda K=K: _threshold_records(chain, m, gap, [K]))


def cmd_potential(cfg: ExperimentConfig, seed: int, run: Run) -> None:
    from .dirichlet_spectral import dirichlet_eigenvalue
    from .potentials import exp_moment_potential, moment_potential, z_potential

    chain = cfg.chain()
    m = invariant_measure(chain)
    zr, zi = cfg.effective["z"]
    z = complex(zr, zi) if zi else zr
    for K in cfg.targets():
        kd = K.describe()

        def zpot(K=K, kd=kd):
            p = z_potential(chain, m, K, z)
            w = p.extra.get("weak_residual", 0.0)
            return _record("z_potential", f"{kd}/z", dict(p.to_dict(), weak_residual=w), w <= ID_TOL)

        run.item(f"z_potential/{kd}", zpot)
        for order in range(1, cfg.effective["moments"] + 1):
            def mom(K=K, kd=kd, order=order):
                p = moment_potential(chain, m, K, z, order)
                w = p.extra["weak_residual"]
                return _record("moment", f"{kd}/m{order}", dict(p.to_dict(), weak_residual=w,
                                                                 l2_norm=p.extra["l2_norm"]), w <= ID_TOL)

            run.item(f"moment/{kd}/m{order}", mom)
        lam = math.inf if K.is_full else dirichlet_eigenvalue(chain, m, K)
        for label, alpha in _alphas(cfg, lam):
            def expm(K=K, kd=kd, alpha=alpha, label=label):
                p = exp_moment_potential(chain, m, K, alpha)
                w = p.extra.get("weak_residual", 0.0)
                return _record("exp_moment", f"{kd}/alpha={label}",
                               dict(p.to_dict(), weak_residual=w, alpha_star=p.extra["alpha_star"]), w <= ID_TOL)

            run.item(f"exp_moment/{kd}/{label}", expm)


def cmd_psi(cfg: ExperimentConfig, seed: int, run: Run) -> None:
    from .potentials import psi_potential_contour, psi_potential_direct
    from .psi import psi_from_config

    chain = cfg.chain()
    m = invariant_measure(chain)
    psi = psi_from_config(cfg.effective["psi"])
    tol = cfg.effective["contour"]["tol"]
    for K in cfg.targets():
        kd = K.describe()
        direct = {}

        def go_direct(K=K, kd=kd):
            p = psi_potential_direct(chain, K, psi)
            direct["h"] = p.values
            return _record("psi_direct", f"{kd}/direct", dict(p.to_dict(), **p.extra), True)

        run.item(f"psi/{kd}/direct", go_direct)
        for sigma in cfg.effective["contour"]["sigmas"]:
            def go_contour(K=K, kd=kd, sigma=sigma):
                p = psi_potential_contour(chain, m, K, psi, sigma=sigma, tol=tol)
                measured = dict(p.to_dict(), **p.extra)
                if "h" in direct:
                    diff = float(np.max(np.abs(p.values - direct["h"])))
                    measured["max_abs_vs_direct"] = diff
                    return _record("psi_contour", f"{kd}/sigma={sigma:g}", measured, diff <= tol)
                return _record("psi_contour", f"{kd}/sigma={sigma:g}", measured, None, "unchecked")

            run.item(f"psi/{kd}/sigma={sigma:g}", go_contour)


def cmd_mc(cfg: ExperimentConfig, seed: int, run: Run, sample_path=None) -> None:
    from .dirichlet_spectral import dirichlet_eigenvalue
    from .montecarlo import estimate_exp_moment, sample_hitting_time_ctmc, sample_hitting_time_diffusion
    from .potentials import exp_moment_potential

    mc = cfg.effective["mc"]
    chain = cfg.chain()
    m = invariant_measure(chain)
    spec = cfg.diffusion
    for j, (K, raw) in enumerate(zip(cfg.targets(), cfg.effective["targets"])):
        kd = K.describe()
        lam = dirichlet_eigenvalue(chain, m, K)

        def go(K=K, kd=kd, raw=raw, lam=lam, j=j):
            if spec is not None:
                if not isinstance(raw, dict):
                    raise ConfigError(["mc on a diffusion needs interval targets"])
                x0 = float(mc["x0"])
                sample = sample_hitting_time_diffusion(spec, x0, tuple(raw["interval"]), mc["dt"], mc["n_samples"],
                                                       seed, mc["time_cap"], mc["bridge"], mc["workers"])
                node = int(np.argmin(np.abs(np.asarray(chain.labels) - x0)))
            else:
                x0 = int(mc["x0"])
                sample = sample_hitting_time_ctmc(chain, x0, K, mc["n_samples"], seed, mc["time_cap"], mc["workers"])
                node = x0
            if sample_path is not None:
                sample.to_csv(f"{sample_path}_samples_{j}.csv")
            out = []
            for label, alpha in _alphas(cfg, lam):
                est = estimate_exp_moment(sample, alpha, alpha_star=lam)
                oracle = float(exp_moment_potential(chain, m, K, alpha).values[node])
                z = abs(est.mean - oracle) / est.std_error if est.std_error > 0 else math.inf
                measured = dict(est.to_dict(), oracle=oracle, oracle_node=node, std_error=est.std_error,
                                z_score=z, scheme=sample.scheme, dt=sample.dt, alpha_star=lam)
                out.append(_record("mc_exp_moment", f"{kd}/alpha={label}", measured, z <= MC_SIGMAS))
            return out

        run.item(f"mc/{kd}", go)


def cmd_verify(cfg: ExperimentConfig, seed: int, run: Run) -> None:
    from .verify import run_suite

    suite = dict(cfg.effective["suite"])
    if cfg.effective["checks"]:
        suite["checks"] = list(cfg.effective["checks"])
    t0 = time.perf_counter()
    result = run_suite(suite, seed=seed)
    for r in result.records:
        d = r.to_dict()
        run.records.append({"kind": d.pop("check_id"), "id": d.pop("instance_id"), "pass": d.pop("pass"),
                            "status": d.pop("status"), **d})
    run.timings.update({f"verify/{k}": v for k, v in result.timings.items()})
    run.timings["verify/total"] = time.perf_counter() - t0


def cmd_sweep(cfg: ExperimentConfig, seed: int, run: Run) -> None:
    """Grid refinement for a diffusion; alpha sweep of the pi-averaged moment for a chain."""
    from .dirichlet_spectral import dirichlet_eigenvalue
    from .potentials import exp_moment_potential

    spec = cfg.diffusion
    if spec is not None:
        intervals = [tuple(t["interval"]) for t in cfg.effective["targets"] if isinstance(t, dict)]
        for npts in cfg.effective["sweep"]["grid_points"]:
            def go(npts=npts):
                chain = discretize_diffusion_1d(spec, npts)
                m = invariant_measure(chain)
                gap = spectral_gap(chain, m).gap
                out = []
                for lo, hi in intervals:
                    K = TargetSet.from_interval(chain, lo, hi)
                    lam = dirichlet_eigenvalue(chain, m, K)
                    out.append(_record("sweep_grid", f"[{lo:g},{hi:g}]/N={npts}",
                                       {"grid_points": npts, "gap": gap, "alpha_star": lam, "pi_K": m.mass(K),
                                        "pi_K_gap": m.mass(K) * gap}, lam >= m.mass(K) * gap * (1 - 1e-8)))
                return out

            run.item(f"sweep/N={npts}", go)
        return
    chain = cfg.chain()
    m = invariant_measure(chain)
    for K in cfg.targets():
        kd = K.describe()
        lam = dirichlet_eigenvalue(chain, m, K)
        for label, alpha in _alphas(cfg, lam):
            def go(K=K, kd=kd, alpha=alpha, label=label):
                p = exp_moment_potential(chain, m, K, alpha)
                mean = float(np.sum(m.pi * p.values))
                return _record("sweep_alpha", f"{kd}/alpha={label}",
                               {"alpha": alpha, "alpha_star": lam, "pi_mean": mean,
                                "weak_residual": p.extra["weak_residual"]}, p.extra["weak_residual"] <= ID_TOL)

            run.item(f"sweep/{kd}/{label}", go)


COMMANDS = {
    "gap": (cmd_gap, "spectral gap and Poincare constant"),
    "threshold": (cmd_threshold, "blow-up threshold by eigenvalue and bisection"),
    "potential": (cmd_potential, "z-, moment and exponential-moment potentials"),
    "psi": (cmd_psi, "psi-potentials by direct quadrature and contour inversion"),
    "mc": (cmd_mc, "Monte Carlo exponential moments against the chain solve"),
    "verify": (cmd_verify, "run the verification suite"),
    "sweep": (cmd_sweep, "grid-refinement or alpha sweeps"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hitgap", description="Hitting-time moments and spectral gaps of Markov chains.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="JSON experiment config (defaults: 2-state chain, K={0})")
        p.add_argument("--alpha", type=float, action="append",
                       help="explicit alpha, replaces the config's alphas (repeatable)")
        p.add_argument("--seed", type=int, help="overrides HITGAP_SEED and the config seed")
        p.add_argument("--out", help="report path stem; .json/.csv are appended")
    return parser


def run_command(command: str, cfg: ExperimentConfig, seed: int, seed_source: str, out=None):
    run = Run()
    fn = COMMANDS[command][0]
    t0 = time.perf_counter()
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        if command == "mc":
            fn(cfg, seed, run, sample_path=out)
        else:
            fn(cfg, seed, run)
    for w in caught:
        run.errors.append({"id": "warning", "error": w.category.__name__, "message": str(w.message)})
    run.timings["total"] = time.perf_counter() - t0
    # warnings are informative and do not fail the run
    hard_errors = [e for e in run.errors if e["id"] != "warning"]
    report = build_report(command, cfg, seed, seed_source, run.records, run.errors, run.timings)
    report["summary"]["errors"] = len(hard_errors)
    report["summary"]["ok"] = report["summary"]["failed"] == 0 and not hard_errors
    return report


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    try:
        cfg = parse_config(args.config) if args.config else config_from_dict({})
        raw = dict(cfg.raw)
        changed = False
        if args.alpha:
            raw["alphas"] = list(args.alpha)
            changed = True
        if args.out:
            raw["output"] = dict(raw.get("output", {}), path=args.out)
            changed = True
        if changed:
            src = cfg.source
            cfg = config_from_dict(raw)
            cfg.source = src
        seed, source = resolve_seed(args.seed, cfg.effective)
    except ConfigError as exc:
        print("config error:", file=sys.stderr)
        for e in exc.errors:
            print(f"  - {e}", file=sys.stderr)
        return EXIT_CONFIG
    out_cfg = cfg.effective["output"]
    try:
        Path(out_cfg["path"]).parent.mkdir(parents=True, exist_ok=True)
        report = run_command(args.command, cfg, seed, source, out_cfg["path"])
        paths = emit_report(report, out_cfg["path"], out_cfg["formats"])
    except ConfigError as exc:
        print("config error:", *exc.errors, sep="\n  - ", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"cannot write report: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except Exception:  # noqa: BLE001
        traceback.print_exc()
        return EXIT_INTERNAL
    s = report["summary"]
    print(json.dumps({"command": args.command, "passed": s["passed"], "failed": s["failed"],
                      "errors": s["errors"], "reports": [str(p) for p in paths]}))
    return EXIT_OK if s["ok"] else EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
