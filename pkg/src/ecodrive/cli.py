"""Command-line entry points: regress-energy, train, run, evaluate, sets.

Exit codes: 0 success, 2 usage or config error, 3 runtime failure.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, ExperimentConfig, describe, load_config
from .controller import LearnedArtifacts
from .energy import DEFAULT_MODEL, EnergyModel, fit_energy_model, load_model, read_samples_csv, save_model
from .learning import CostToGoTable, Dataset, RobustSetSequence, target_region
from .sim import (CruiseController, MpcController, monte_carlo, run_closed_loop, train, write_curve,
                  write_summary)

log = logging.getLogger("ecodrive")

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 2, 3


class UsageError(Exception):
    pass


def _sha256(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_manifest(out: Path, cfg: ExperimentConfig | None, seed: int, files: list) -> Path:
    files = [Path(f) for f in files]
    manifest = {
        "tool": "ecodrive",
        "version": __version__,
        "config_hash": cfg.hash if cfg is not None else None,
        "seed": seed,
        "config": describe(cfg) if cfg is not None else None,
        "artifacts": {f.name: {"path": str(f), "sha256": _sha256(f)} for f in files},
    }
    path = out / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return path


def _model(path) -> EnergyModel:
    return load_model(path) if path else DEFAULT_MODEL


def _load_artifacts(cfg: ExperimentConfig, art_dir, model: EnergyModel) -> LearnedArtifacts:
    art_dir = Path(art_dir)
    ds, tab = art_dir / "dataset.csv", art_dir / "value_table.json"
    for p in (ds, tab):
        if not p.exists():
            raise UsageError(f"missing artifact {p}")
    return LearnedArtifacts(Dataset.from_csv(ds), cfg.mpc, model, table=CostToGoTable.load(tab))


def _controller_factory(cfg: ExperimentConfig, art_dir, model: EnergyModel):
    if cfg.evaluation.controller == "cruise":
        return lambda: CruiseController(cfg.cruise, cfg.limits)
    if art_dir is None:
        raise UsageError("controller 'mpc' needs --artifacts")
    art = _load_artifacts(cfg, art_dir, model)
    if art.V is None:
        log.warning("value function unavailable (%s); every step will fall back", art.value_error)
    art.precompute(max(cfg.schedule.k_pass) + 1)
    return lambda: MpcController(art, cfg.route, cfg.schedule, cfg.mpc, cfg.cruise, model)


# ---------------------------------------------------------------------------
# commands


def cmd_regress_energy(args) -> int:
    try:
        samples = read_samples_csv(args.csv_in)
    except (KeyError, ValueError) as exc:
        raise UsageError(f"bad energy CSV: {exc}") from exc
    try:
        model = fit_energy_model(samples)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    save_model(args.json_out, model)
    print(json.dumps(model.residual, indent=2))
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = load_config(args.config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    model = _model(args.energy_model)

    def report(row):
        log.info("iter %d: |D|=%d mean=%.2f kJ fallback=%.3f", row["iter"], row["dataset_size"],
                 row["mean_energy"], row["fallback_rate"])

    res = train(cfg.route, cfg.schedule, cfg.training, cfg.mpc, cfg.cruise, cfg.sim, model,
                log_fn=report)
    D = res["dataset"]
    files = []
    p = out / "dataset.csv"
    D.to_csv(p)
    files.append(p)
    # the artifacts that ran in the last iteration are rebuilt from the final data
    final = LearnedArtifacts(D, cfg.mpc, model)
    if final.table is None:
        raise RuntimeError(f"value function failed on the final data: {final.value_error}")
    p = out / "value_table.json"
    final.table.save(p)
    files.append(p)
    p = out / "sets.json"
    t_max = max(cfg.schedule.k_pass) + 1
    p.write_text(json.dumps({
        kind: [seq.controllable_set(t).to_json() for t in range(t_max + 1)]
        for kind, seq in (("before-light", final.S), ("after-light", final.P))}))
    files.append(p)
    p = out / "learning_curve.csv"
    write_curve(p, res["curve"])
    files.append(p)
    if res["random_curve"]:
        p = out / "random_curve.csv"
        write_curve(p, res["random_curve"], ("iter", "dataset_size", "mean_energy", "fallback_rate"))
        files.append(p)
    write_manifest(out, cfg, cfg.training.seed, files)
    return EXIT_OK


def cmd_run(args) -> int:
    cfg = load_config(args.config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    make = _controller_factory(cfg, args.artifacts, _model(args.energy_model))
    seed = cfg.evaluation.seed if args.seed is None else args.seed
    tl = run_closed_loop(cfg.route, cfg.schedule, make(), cfg.sim, seed)
    p = out / "trajectory.csv"
    tl.to_csv(p)
    d = out / "diagnostics.jsonl"
    with open(d, "w") as fh:
        for r in tl.records:
            fh.write(json.dumps(r, default=float) + "\n")
    print(json.dumps({"energy": tl.total_energy, "travel_time": tl.travel_time,
                      "violations": tl.violations, "fallback_rate": tl.fallback_rate}))
    write_manifest(out, cfg, seed, [p, d])
    return EXIT_OK if tl.goal_reached else EXIT_RUNTIME


def compare(summary: dict, baseline: dict) -> dict:
    """Percentage deltas of the means, negative when ``summary`` is lower."""
    rep = {}
    for key in ("energy", "travel_time"):
        a, b = summary[key]["mean"], baseline[key]["mean"]
        rep[key] = {"mean": a, "baseline_mean": b, "delta_pct": 100.0 * (a - b) / b}
    return rep


def cmd_evaluate(args) -> int:
    cfg = load_config(args.config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    make = _controller_factory(cfg, args.artifacts, _model(args.energy_model))
    runs = cfg.evaluation.runs if args.runs is None else args.runs
    summary, logs = monte_carlo(cfg.route, cfg.schedule, make, runs, cfg.evaluation.seed, cfg.sim)
    st = [r["solve_time"] for tl in logs for r in tl.records if r.get("status") == "Optimal"]
    if st:
        summary["solve_time"] = {"median": float(np.median(st)), "max": float(np.max(st))}
    summary["controller"] = cfg.evaluation.controller
    files = []
    p = out / "summary.json"
    write_summary(p, summary)
    files.append(p)
    if args.baseline:
        rep = compare(summary, json.loads(Path(args.baseline).read_text()))
        p = out / "comparison.json"
        write_summary(p, rep)
        files.append(p)
        print(json.dumps(rep, indent=2))
    else:
        print(json.dumps(summary, indent=2))
    write_manifest(out, cfg, cfg.evaluation.seed, files)
    return EXIT_OK


def cmd_sets(args) -> int:
    cfg = load_config(args.config)
    if args.t < 0:
        raise UsageError("t must be nonnegative")
    if args.target not in ("before-light", "after-light"):
        raise UsageError(f"unknown target {args.target!r}")
    D = Dataset.from_csv(args.dataset) if args.dataset else Dataset.empty()
    s_tl = 0.0 if args.s_tl is None else args.s_tl
    seq = RobustSetSequence(D, target_region(args.target, s_tl), L=cfg.mpc.L, W=cfg.mpc.W,
                            kind=args.target, s_tl=s_tl)
    Path(args.out).write_text(json.dumps(seq.controllable_set(args.t).to_json(), indent=2))
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ecodrive", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"ecodrive {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("regress-energy", help="fit the PSD energy model to v,u,dE samples")
    p.add_argument("csv_in")
    p.add_argument("json_out")
    p.set_defaults(func=cmd_regress_energy)

    p = sub.add_parser("train", help="initialize data, run the learning loop, write artifacts")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--energy-model")
    p.set_defaults(func=cmd_train)

    for name, func, helptext in (("run", cmd_run, "one closed-loop run, trajectory CSV"),
                                 ("evaluate", cmd_evaluate, "Monte Carlo summary JSON")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--config", required=True)
        p.add_argument("--artifacts")
        p.add_argument("--out", required=True)
        p.add_argument("--energy-model")
        if name == "run":
            p.add_argument("--seed", type=int)
        else:
            p.add_argument("--runs", type=int)
            p.add_argument("--baseline", help="summary JSON to compare against")
        p.set_defaults(func=func)

    p = sub.add_parser("sets", help="compute one data-driven controllable set")
    p.add_argument("--config", required=True)
    p.add_argument("--dataset")
    p.add_argument("--t", type=int, required=True)
    p.add_argument("--target", default="after-light")
    p.add_argument("--s-tl", type=float)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sets)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ConfigError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # noqa: BLE001 - report any runtime failure as exit 3
        log.debug("runtime failure", exc_info=True)
        print(f"runtime failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
