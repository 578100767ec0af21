"""Command-line surface.

Subcommands: simulate (field -> CSV), sample (points -> CSV), intensity
(kernel intensity and weights -> CSV), fit (data CSV -> parameter report),
krige (data CSV + parameters -> surface CSV), experiment (config file ->
results CSVs). Exit codes: 0 success, 1 usage error, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from ._linalg import NotPositiveDefiniteError
from .experiment import ExperimentConfig, load_config, run_experiment
from .fields import GridSpec, SeedStream, simulate_field
from .inference import FitConfig, default_init, fit
from .intensity import (
    BandwidthSpec,
    GRID_METHODS,
    SCOTT,
    estimate_intensity,
    select_bandwidth,
    weights_from_intensity,
)
from .kriging import krige
from .likelihood import EXACT, PAIRWISE_MARGINAL, VECCHIA, Objective, maxmin_order, nn_conditioning_sets
from .model import CovParams, Domain, ModelParams, microergodic
from .pointprocess import SamplerSpec, compute_intensity, sample_conditioned, sample_thomas, THOMAS
from . import io

USAGE_ERROR = 1
NUMERICAL_ERROR = 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(USAGE_ERROR)


def _parse_domain(text: str) -> Domain:
    parts = [float(v) for v in text.split(",")]
    if len(parts) != 4:
        raise ValueError("domain must be x0,x1,y0,y1")
    return Domain(*parts)


def build_parser() -> _Parser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="root random seed")
    common.add_argument("--config", help="experiment config file (key=value lines)")
    common.add_argument("--out-dir", default=".", help="directory for output files")
    common.add_argument("--threads", type=int, default=1, help="parallel workers")
    common.add_argument("--method", default="mle",
                        choices=["mle", "exact", "vecchia", "isiw-v", "isiw-pm"],
                        help="fitting objective")
    common.add_argument("--weights", default="none",
                        choices=["none", "scott", "diggle", "ppl", "CvL", "CvL.adaptive"],
                        help="weight-estimation bandwidth selector")
    common.add_argument("--bandwidth", type=float, default=None,
                        help="fixed kernel bandwidth (overrides selection)")
    common.add_argument("--m", type=int, default=20, help="max conditioning-set size")
    common.add_argument("--threshold", type=float, default=1e-2,
                        help="winsorization lower threshold on normalized intensity")
    common.add_argument("--domain", type=_parse_domain, default=Domain(0.0, 1.0, 0.0, 1.0),
                        help="study region x0,x1,y0,y1")
    common.add_argument("--nu", type=float, default=1.0, help="Matérn smoothness (fixed)")

    parser = _Parser(prog="isiw", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common], help="simulate a Matérn field on a grid")
    p.add_argument("--nx", type=int, default=48)
    p.add_argument("--ny", type=int, default=None)
    p.add_argument("--sigma2", type=float, default=1.5)
    p.add_argument("--phi", type=float, default=0.15)
    p.add_argument("--out", default="field.csv")

    p = sub.add_parser("sample", parents=[common], help="sample a preferential point pattern")
    p.add_argument("--field", required=True, help="field CSV from 'simulate'")
    p.add_argument("--sampler", default="lgcp", choices=["lgcp", "scp", "thomas"])
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--beta", type=float, default=1.0)
    p.add_argument("--alpha", type=float, default=0.0)
    p.add_argument("--parent-rate", type=float, default=25.0)
    p.add_argument("--offspring-scale", type=float, default=0.1)
    p.add_argument("--out", default="points.csv")

    p = sub.add_parser("intensity", parents=[common],
                       help="kernel intensity on a grid plus inverse-intensity weights")
    p.add_argument("--points", required=True, help="points CSV (x,y)")
    p.add_argument("--nx", type=int, default=48, help="evaluation grid resolution")
    p.add_argument("--ny", type=int, default=None)
    p.add_argument("--selector", default=SCOTT, choices=[SCOTT, *GRID_METHODS],
                   help="bandwidth selector when --bandwidth is not given")

    p = sub.add_parser("fit", parents=[common], help="fit model parameters to a data CSV")
    p.add_argument("--data", required=True, help="data CSV (x,y,value)")
    p.add_argument("--cutoff", type=float, default=None, help="pairwise distance cutoff")
    p.add_argument("--out", default=None, help="write the report here instead of stdout")

    p = sub.add_parser("krige", parents=[common], help="predict a surface from fitted parameters")
    p.add_argument("--data", required=True, help="data CSV (x,y,value)")
    p.add_argument("--mu", type=float, required=True)
    p.add_argument("--sigma2", type=float, required=True)
    p.add_argument("--phi", type=float, required=True)
    p.add_argument("--tau2", type=float, required=True)
    p.add_argument("--nx", type=int, default=48)
    p.add_argument("--ny", type=int, default=None)
    p.add_argument("--out", default="surface.csv")

    p = sub.add_parser("experiment", parents=[common], help="run a replicated comparison")

    return parser


def _cmd_simulate(args) -> int:
    grid = GridSpec(args.domain, args.nx, args.ny if args.ny else args.nx)
    fld = simulate_field(grid, CovParams(args.sigma2, args.phi, args.nu), SeedStream(args.seed or 0))
    io.write_field_csv(Path(args.out_dir) / args.out, fld)
    print(f"wrote {grid.ncells} cells to {Path(args.out_dir) / args.out}")
    return 0


def _cmd_sample(args) -> int:
    fld = io.read_field_csv(args.field)
    spec = SamplerSpec(
        kind=args.sampler, n=args.n, beta=args.beta, alpha=args.alpha,
        parent_rate=args.parent_rate, offspring_scale=args.offspring_scale,
    )
    seed = SeedStream(args.seed or 0)
    if args.sampler == THOMAS:
        pts = sample_thomas(fld, spec, seed)
    else:
        pts = sample_conditioned(fld, compute_intensity(args.sampler, fld, spec), args.n, seed)
    io.write_points_csv(Path(args.out_dir) / args.out, pts)
    print(f"wrote {len(pts)} points to {Path(args.out_dir) / args.out}")
    return 0


def _resolve_bandwidth(args, points, domain) -> BandwidthSpec:
    if args.bandwidth is not None:
        return BandwidthSpec(method="fixed", h=args.bandwidth)
    selector = getattr(args, "selector", None) or (
        args.weights if args.weights != "none" else SCOTT
    )
    return select_bandwidth(selector, points, domain)


def _cmd_intensity(args) -> int:
    pts = io.read_points_csv(args.points)
    bw = _resolve_bandwidth(args, pts, args.domain)
    grid = GridSpec(args.domain, args.nx, args.ny if args.ny else args.nx)
    est = estimate_intensity(pts, args.domain, bw, grid=grid)
    wv = weights_from_intensity(est, args.threshold)
    out = Path(args.out_dir)
    io.write_intensity_csv(out / "intensity.csv", est)
    io.write_weights_csv(out / "weights.csv", pts, wv)
    print(f"bandwidth={bw.h!r} method={bw.method} -> {out / 'intensity.csv'}, {out / 'weights.csv'}")
    return 0


def _build_objective(args, data):
    method = "exact" if args.method in ("mle", "exact") else args.method
    weights = None
    wants_weights = args.weights != "none" or (
        args.bandwidth is not None and method.startswith("isiw")
    )
    if wants_weights:
        bw = _resolve_bandwidth(args, data.locations, args.domain)
        est = estimate_intensity(data.locations, args.domain, bw)
        weights = weights_from_intensity(est, args.threshold)
    if method == "exact":
        return Objective(kind=EXACT)
    if method in ("vecchia", "isiw-v"):
        plan = nn_conditioning_sets(data.locations, maxmin_order(data.locations), args.m)
        return Objective(kind=VECCHIA, plan=plan, weights=weights)
    return Objective(kind=PAIRWISE_MARGINAL, weights=weights, pair_cutoff=args.cutoff)


def _cmd_fit(args) -> int:
    data = io.read_dataset_csv(args.data)
    objective = _build_objective(args, data)
    init = default_init(data, args.domain)
    init = ModelParams(init.mu, CovParams(init.theta.sigma2, init.theta.phi, args.nu), init.tau2)
    res = fit(objective, data, init, FitConfig(domain=args.domain, restart_seed=args.seed or 0))
    report = res.psi_hat.as_dict()
    report["kappa"] = microergodic(res.psi_hat.theta)
    report.update(
        nll=res.nll, converged=res.converged, iterations=res.iterations,
        restarts_used=res.restarts_used, phi_capped=res.phi_capped,
    )
    text = "\n".join(f"{k}={v!r}" if isinstance(v, float) else f"{k}={v}" for k, v in report.items())
    if args.out:
        Path(args.out_dir, args.out).write_text(text + "\n")
    else:
        print(text)
    return 0


def _cmd_krige(args) -> int:
    data = io.read_dataset_csv(args.data)
    psi = ModelParams.from_values(args.mu, args.sigma2, args.phi, args.tau2, nu=args.nu)
    grid = GridSpec(args.domain, args.nx, args.ny if args.ny else args.nx)
    out = krige(psi, data, grid.cell_centers())
    io.write_surface_csv(Path(args.out_dir) / args.out, out)
    print(f"wrote {grid.ncells} predictions to {Path(args.out_dir) / args.out}")
    return 0


def _cmd_experiment(args) -> int:
    if args.config:
        config = load_config(args.config)
    else:
        config = ExperimentConfig()
    if args.threads != 1:
        config.threads = args.threads
    if args.seed is not None:
        config.seed = args.seed
    rows, summary = run_experiment(config, args.out_dir)
    print(f"wrote {len(rows)} result rows to {Path(args.out_dir) / 'results.csv'}")
    for scenario, method, variant, mean, sd, count, failures in summary:
        tag = f"{method}:{variant}" if variant else method
        print(f"  {scenario:24s} {tag:22s} rmspe {mean:.4f} ({sd:.4f}) n={count} failed={failures}")
    return 0


_COMMANDS = {
    "simulate": _cmd_simulate,
    "sample": _cmd_sample,
    "intensity": _cmd_intensity,
    "fit": _cmd_fit,
    "krige": _cmd_krige,
    "experiment": _cmd_experiment,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (NotPositiveDefiniteError, np.linalg.LinAlgError, RuntimeError) as exc:
        print(f"isiw: numerical failure: {exc}", file=sys.stderr)
        return NUMERICAL_ERROR
    except (ValueError, FileNotFoundError) as exc:
        print(f"isiw: {exc}", file=sys.stderr)
        return USAGE_ERROR


if __name__ == "__main__":
    sys.exit(main())
