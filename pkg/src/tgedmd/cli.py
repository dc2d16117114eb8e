"""Command-line front end.

Subcommands: simulate, sample-gmm, run, gedmd, cost, cluster.  Every
artifact is reproducible byte-for-byte from (config, seed): reports carry
no timestamps (wallclock goes to a sidecar timings.json), floats are
serialized with repr-faithful formatting, and JSON keys are sorted.

Exit codes: 0 success, 2 config error, 3 numeric error, 4 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import glob
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import gedmd as dense
from .algorithm import tgedmd_run, tt_cost_estimate
from .config import RunConfig, SampleConfig, SimulateConfig, basis_from_section, load_config
from .errors import ConfigError, NumericError
from .sde import euler_maruyama_batch, gmm_sample, load_trajectory, save_trajectory
from .spectral import (
    cluster_coordinates,
    read_eigenfunctions_csv,
    spectrum,
    write_clusters_csv,
    write_eigenfunctions_csv,
    write_eigenvalues_csv,
)

REPORT_SCHEMA_VERSION = 1


def _json_default(obj):
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serializable: {type(obj)}")


def _write_json(payload, path):
    with open(path, "w") as fh:
        json.dump(payload, fh, sort_keys=True, indent=1, default=_json_default)
        fh.write("\n")


def _timescale_entry(t):
    return None if math.isinf(t) else float(t)


# -- simulate ----------------------------------------------------------------------


def cmd_simulate(args):
    cfg = SimulateConfig.from_dict(load_config(args.config).get("simulate", {}))
    model = cfg.model()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    trajs = euler_maruyama_batch(
        model,
        [cfg.x0] * len(cfg.seeds),
        cfg.dt,
        cfg.n_steps,
        cfg.save_every,
        seeds=cfg.seeds,
        burn_in=cfg.burn_in,
    )
    for traj in trajs:
        save_trajectory(traj, out / f"traj_seed{traj.seed}.traj")
    print(f"wrote {len(trajs)} trajectories to {out}")
    return 0


def cmd_sample_gmm(args):
    cfg = SampleConfig.from_dict(load_config(args.config).get("sample", {}))
    sampler = cfg.sampler()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for seed in cfg.seeds:
        traj = gmm_sample(sampler, cfg.m, seed=seed)
        save_trajectory(traj, out / f"sample_seed{seed}.traj")
    print(f"wrote {len(cfg.seeds)} sample sets to {out}")
    return 0


# -- run / gedmd -------------------------------------------------------------------


def _resolve_data_files(pattern, data_dir):
    base = Path(data_dir) if data_dir else Path(".")
    files = sorted(glob.glob(str(base / pattern)))
    if not files:
        raise ConfigError(f"no data files match {base / pattern}")
    return files


def _job_dir(out, data_file, eps):
    stem = Path(data_file).stem
    return Path(out) / f"{stem}_eps{eps:.0e}"


def _report_payload(run_cfg, basis, traj, eps, report, extras):
    payload = {
        "schema_version": REPORT_SCHEMA_VERSION,
        "model": run_cfg.model_name,
        "mode": run_cfg.mode,
        "data_file": extras["data_file"],
        "seed": traj.seed,
        "m": traj.m,
        "policy": {
            "kind": run_cfg.policy_kind,
            "epsilon": eps,
            "rank_cap": run_cfg.rank_cap,
        },
        "weights_source": run_cfg.weights_source,
        "basis_mode_sizes": list(basis.mode_sizes),
        "coupling_dim": extras["coupling_dim"],
        "achieved_ranks": extras["achieved_ranks"],
        "singular_value_tails": extras["sv_tails"],
        "eigenvalues": [[float(v.real), float(v.imag)] for v in report.eigenvalues],
        "timescales": [_timescale_entry(t) for t in report.timescales],
        "op_counters": extras["op_counters"],
        "algorithm": extras["algorithm"],
    }
    return payload


def _one_tgedmd_job(config_path, data_file, eps, out, data_dir):
    full = load_config(config_path)
    run_cfg = RunConfig.from_dict(full.get("run", {}))
    basis = basis_from_section(full.get("basis", {}))
    model = run_cfg.model()
    traj = load_trajectory(data_file)
    X = traj.states
    weights = run_cfg.weights_for(model, X)
    policy = dict(run_cfg.policies())[eps]
    result = tgedmd_run(X, basis, model, run_cfg.mode, policy, weights=weights)
    report = spectrum(result.reduced, min(run_cfg.n_ev, len(result.reduced.svd.sigma)))
    jdir = _job_dir(out, data_file, eps)
    jdir.mkdir(parents=True, exist_ok=True)
    payload = _report_payload(
        run_cfg,
        basis,
        traj,
        eps,
        report,
        {
            "data_file": Path(data_file).name,
            "coupling_dim": model.dim,
            "achieved_ranks": list(result.achieved_ranks),
            "sv_tails": [list(t) for t in result.reduced.svd.sv_tails],
            "op_counters": dict(result.counter.counts),
            "algorithm": "tgedmd",
        },
    )
    _write_json(payload, jdir / "report.json")
    _write_json({"wallclock_seconds": result.elapsed_seconds}, jdir / "timings.json")
    write_eigenvalues_csv(report, jdir / "eigenvalues.csv")
    write_eigenfunctions_csv(report, jdir / "eigenfunctions.csv")
    return str(jdir)


def _one_gedmd_job(config_path, data_file, eps, out, data_dir):
    import time

    full = load_config(config_path)
    run_cfg = RunConfig.from_dict(full.get("run", {}))
    basis = basis_from_section(full.get("basis", {}))
    model = run_cfg.model()
    traj = load_trajectory(data_file)
    X = traj.states
    weights = run_cfg.weights_for(model, X)
    t0 = time.perf_counter()
    psi = dense.product_basis_matrix(basis, X)
    if run_cfg.mode == "rev":
        gen_data = dense.gradient_sigma_matrix(basis, X, model)
    else:
        gen_data = dense.generator_apply_matrix(basis, X, model)
    reduced = dense.amuse(psi, gen_data, run_cfg.mode, epsilon=eps, weights=weights)
    elapsed = time.perf_counter() - t0
    # Re-wrap the dense factors as a (single-core) TT result so the same
    # spectral post-processing applies.
    from .algorithm import GlobalSvdResult, ReducedGenerator
    from .tt import TensorTrain

    r = len(reduced.sigma)
    svd_shim = GlobalSvdResult(
        U=TensorTrain((reduced.U.reshape(1, -1, r),)),
        sigma=reduced.sigma,
        V=reduced.V,
        ranks=(r,),
        sv_tails=((float(reduced.sigma[0]), float(reduced.sigma[-1]), 0.0),),
    )
    rg = ReducedGenerator(M=reduced.M, mode=run_cfg.mode, svd=svd_shim, weights=weights)
    report = spectrum(rg, min(run_cfg.n_ev, r))
    jdir = _job_dir(out, data_file, eps)
    jdir.mkdir(parents=True, exist_ok=True)
    payload = _report_payload(
        run_cfg,
        basis,
        traj,
        eps,
        report,
        {
            "data_file": Path(data_file).name,
            "coupling_dim": model.dim,
            "achieved_ranks": [len(reduced.sigma)],
            "sv_tails": [[float(reduced.sigma[0]), float(reduced.sigma[-1]), 0.0]],
            "op_counters": {},
            "algorithm": "gedmd",
        },
    )
    _write_json(payload, jdir / "report.json")
    _write_json({"wallclock_seconds": elapsed}, jdir / "timings.json")
    write_eigenvalues_csv(report, jdir / "eigenvalues.csv")
    write_eigenfunctions_csv(report, jdir / "eigenfunctions.csv")
    return str(jdir)


def _sweep(args, job_fn):
    full = load_config(args.config)
    run_cfg = RunConfig.from_dict(full.get("run", {}))
    files = _resolve_data_files(run_cfg.data_pattern, args.data_dir)
    jobs = [(args.config, f, eps, args.out, args.data_dir) for f in files for eps in run_cfg.epsilons]
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            dirs = list(pool.map(_star_job, [(job_fn, j) for j in jobs]))
    else:
        dirs = [job_fn(*j) for j in jobs]
    _aggregate(Path(args.out), run_cfg, files)
    print(f"completed {len(dirs)} runs under {args.out}")
    return 0


def _star_job(packed):
    fn, jobargs = packed
    return fn(*jobargs)


def _aggregate(out, run_cfg, files):
    """summary.csv: mean and standard error of the leading timescales per
    threshold, aggregated across data files."""
    rows = []
    for eps in run_cfg.epsilons:
        ts_rows, max_ranks = [], []
        for f in files:
            rpt = json.loads((_job_dir(out, f, eps) / "report.json").read_text())
            ts = rpt["timescales"][1:4]
            ts = ts + [None] * (3 - len(ts))
            ts_rows.append([np.nan if t is None else t for t in ts])
            max_ranks.append(max(rpt["achieved_ranks"]))
        arr = np.array(ts_rows, dtype=np.float64)
        n = len(files)
        means = np.nanmean(arr, axis=0)
        ses = np.nanstd(arr, axis=0, ddof=1) / np.sqrt(n) if n > 1 else np.zeros(3)
        rows.append(
            [eps, n]
            + [x for pair in zip(means, ses) for x in pair]
            + [min(max_ranks), max(max_ranks)]
        )
    with open(out / "summary.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["epsilon", "n_runs", "t1_mean", "t1_se", "t2_mean", "t2_se",
             "t3_mean", "t3_se", "max_rank_min", "max_rank_max"]
        )
        for row in rows:
            writer.writerow([format(x, ".17g") if isinstance(x, float) else x for x in row])


def cmd_run(args):
    return _sweep(args, _one_tgedmd_job)


def cmd_gedmd(args):
    return _sweep(args, _one_gedmd_job)


# -- cost --------------------------------------------------------------------------


def cmd_cost(args):
    run_dir = Path(args.run_dir)
    reports = sorted(run_dir.glob("*/report.json"))
    if not reports:
        raise ConfigError(f"no run reports under {run_dir}")
    with open(Path(args.out), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["job", "epsilon", "m", "N", "max_rank", "r_p",
             "tt_svd", "tt_contract", "tt_eig", "tt_total",
             "dense_svd", "dense_reduce", "dense_eig", "dense_total"]
        )
        for rp in reports:
            rpt = json.loads(rp.read_text())
            mode_sizes = rpt["basis_mode_sizes"]
            ranks = rpt["achieved_ranks"]
            m = rpt["m"]
            d = rpt["coupling_dim"]
            N = int(np.prod(mode_sizes))
            r_p = ranks[-1]
            tt_terms = tt_cost_estimate(mode_sizes, ranks, m, d)
            dn_terms = dense.dense_cost_estimate(N, m, r_p)
            writer.writerow(
                [rp.parent.name, rpt["policy"]["epsilon"], m, N, max(ranks), r_p]
                + [format(x, ".17g") for x in tt_terms + (sum(tt_terms),)]
                + [format(x, ".17g") for x in dn_terms + (sum(dn_terms),)]
            )
    print(f"wrote cost table to {args.out}")
    return 0


# -- cluster -----------------------------------------------------------------------


def cmd_cluster(args):
    jdir = Path(args.run_dir)
    coords = read_eigenfunctions_csv(jdir / "eigenfunctions.csv")
    assignment = cluster_coordinates(coords[:, : args.clusters], args.clusters, seed=args.seed)
    out = Path(args.out) if args.out else jdir / "clusters.csv"
    write_clusters_csv(assignment, out)
    print(f"wrote {out}")
    return 0


# -- entry point -------------------------------------------------------------------


def build_parser():
    parser = argparse.ArgumentParser(
        prog="tgedmd",
        description="Tensor-train Koopman generator estimation from SDE data",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, data_dir=False):
        p.add_argument("--config", required=True, help="TOML or JSON config file")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--jobs", type=int, default=1, help="concurrent jobs")
        p.add_argument("--seed", type=int, default=0, help="seed override where applicable")
        if data_dir:
            p.add_argument("--data-dir", default=".", help="directory the data pattern is relative to")

    p = sub.add_parser("simulate", help="integrate SDE trajectories")
    add_common(p)
    p.set_defaults(fn=cmd_simulate)

    p = sub.add_parser("sample-gmm", help="draw i.i.d. Gaussian-mixture samples")
    add_common(p)
    p.set_defaults(fn=cmd_sample_gmm)

    p = sub.add_parser("run", help="tensor-train generator estimation sweep")
    add_common(p, data_dir=True)
    p.set_defaults(fn=cmd_run)

    p = sub.add_parser("gedmd", help="dense full-basis reference sweep")
    add_common(p, data_dir=True)
    p.set_defaults(fn=cmd_gedmd)

    p = sub.add_parser("cost", help="cost-model table from a completed run")
    p.add_argument("--run-dir", required=True, help="directory produced by 'run'")
    p.add_argument("--out", required=True, help="output CSV path")
    p.set_defaults(fn=cmd_cost)

    p = sub.add_parser("cluster", help="k-means clustering of eigenfunction values")
    p.add_argument("--run-dir", required=True, help="single job directory")
    p.add_argument("--clusters", type=int, default=4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)
    p.set_defaults(fn=cmd_cluster)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
