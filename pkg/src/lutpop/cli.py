"""Command-line driver: accuracy tables, density sweeps, resource counts,
and network experiments, with CSV/JSON artifacts and a run manifest.

Subcommands: ``accuracy``, ``sweep``, ``resources``, ``snn run|chaos|replay``.
Every command echoes its arguments and seed into ``manifest.json`` next to
its outputs; rerunning with the same arguments and seed rewrites the data
files byte for byte.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import (
    EXHAUSTIVE_WIDTH_LIMIT,
    accuracy_audit,
    default_density_grid,
    density_sweep,
    enumerate_accuracy_combinatorial,
    enumerate_accuracy_exhaustive,
)
from .compressor import preset, resolve_label, resource_estimate
from .snn import (
    PhaseSchedule,
    Simulation,
    SimulationDivergedError,
    SnnConfig,
    SnnResult,
    _connectivity,
    chaos_experiment,
    default_params,
    load_params,
    replay_failure,
)

_DEFAULT_SWEEP_CONFIGS = "A,B,C,D,E,F,G,H,I,J,K,L"


def _parse_configs(text: str) -> list[str]:
    return [resolve_label(tok) for tok in text.split(",") if tok.strip()]


def _check_out(path: Path, overwrite: bool) -> None:
    if path.exists() and not overwrite:
        raise FileExistsError(
            f"{path} exists; pass --overwrite to replace it"
        )


def _write_manifest(out_dir: Path, argv: list[str], seed: int | None,
                    configs: list[str], outputs: list[Path],
                    started: float, overwrote: bool) -> None:
    manifest = {
        "tool": "lutpop",
        "version": __version__,
        "argv": argv,
        "seed": seed,
        "configs": configs,
        "outputs": [str(p) for p in outputs],
        "overwrite": overwrote,
        "duration_s": round(time.time() - started, 3),
    }
    tmp = out_dir / ".manifest.json.tmp"
    tmp.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    tmp.replace(out_dir / "manifest.json")


def _fmt_pct(x: float) -> str:
    return f"{x:.6e}"


def cmd_accuracy(args: argparse.Namespace, argv: list[str]) -> int:
    started = time.time()
    labels = _parse_configs(args.configs)
    out = Path(args.out)
    _check_out(out, args.overwrite)
    out.parent.mkdir(parents=True, exist_ok=True)

    failed = False
    rows = []
    for lab in labels:
        cfg = preset(lab)
        note = ""
        rep_ex = rep_co = None
        try:
            if args.method in ("exhaustive", "both"):
                rep_ex = enumerate_accuracy_exhaustive(cfg, args.width_limit)
            if args.method in ("combinatorial", "both"):
                rep_co = enumerate_accuracy_combinatorial(cfg)
        except ValueError as exc:
            note = str(exc)
            failed = True
        rep = rep_co or rep_ex
        row = {
            "config": lab,
            "block_width": cfg.block_width,
            "correct_count": rep.correct_count if rep else "",
            "total_inputs": rep.total_inputs if rep else "",
            "percent_correct": _fmt_pct(rep.percent_correct) if rep else "",
        }
        if args.method == "both":
            row["oracles_agree"] = (
                str(rep_ex.correct_count == rep_co.correct_count).lower()
                if rep_ex and rep_co else ""
            )
        if note:
            row["error"] = note
        rows.append(row)

    fields = ["config", "block_width", "correct_count", "total_inputs",
              "percent_correct"]
    if args.method == "both":
        fields.append("oracles_agree")
    if any("error" in r for r in rows):
        fields.append("error")
    with out.open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields, restval="")
        writer.writeheader()
        writer.writerows(rows)
    outputs = [out]

    if args.audit:
        audit_path = out.with_name(out.stem + "_audit.csv")
        with audit_path.open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(
                ["config", "oracle_percent", "paper_percent", "ratio", "flagged"]
            )
            for row in accuracy_audit():
                writer.writerow([
                    row.config, _fmt_pct(row.oracle_percent),
                    _fmt_pct(row.reference_percent),
                    f"{row.ratio:.6e}", str(row.flagged).lower(),
                ])
        outputs.append(audit_path)

    _write_manifest(out.parent, argv, None, labels, outputs, started,
                    args.overwrite)
    return 1 if failed else 0


def cmd_sweep(args: argparse.Namespace, argv: list[str]) -> int:
    started = time.time()
    labels = _parse_configs(args.configs)
    densities = (
        [float(tok) / 100.0 for tok in args.densities.split(",")]
        if args.densities else default_density_grid()
    )
    out = Path(args.out)
    _check_out(out, args.overwrite)
    out.parent.mkdir(parents=True, exist_ok=True)
    with out.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["config", "n", "density_pct", "trials", "mean_err_pct", "std_err_pct"]
        )
        for lab in labels:
            rep = density_sweep(preset(lab), args.n, densities,
                                trials=args.trials, seed=args.seed)
            for d, mean, std in rep.rows:
                writer.writerow([lab, args.n, repr(d * 100.0), args.trials,
                                 repr(mean), repr(std)])
    _write_manifest(out.parent, argv, args.seed, labels, [out], started,
                    args.overwrite)
    return 0


def cmd_resources(args: argparse.Namespace, argv: list[str]) -> int:
    started = time.time()
    labels = _parse_configs(args.configs)
    out = Path(args.out)
    _check_out(out, args.overwrite)
    out.parent.mkdir(parents=True, exist_ok=True)
    with out.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["config", "lut_kind", "count"])
        for lab in labels:
            counts = resource_estimate(preset(lab), args.n)
            for kind in sorted(counts, key=lambda k: k.label):
                writer.writerow([lab, kind.label, counts[kind]])
    _write_manifest(out.parent, argv, None, labels, [out], started,
                    args.overwrite)
    return 0


def _load_snn_config(args: argparse.Namespace) -> SnnConfig:
    cfg = load_params(args.params) if args.params else default_params()
    if args.compressor:
        cfg = cfg.with_compressor(preset(args.compressor))
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    return cfg


def _write_run_outputs(out: Path, res: SnnResult, cfg: SnnConfig) -> list[Path]:
    out.mkdir(parents=True, exist_ok=True)
    t = res.times_ms()
    paths = []

    p = out / "spikes.csv"
    with p.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["neuron", "time_ms"])
        for nid, st in zip(res.spike_neurons, res.spike_steps):
            writer.writerow([int(nid), repr(float((st + 1) * res.dt_ms))])
    paths.append(p)

    p = out / "voltage0.csv"
    with p.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["time_ms", "v_mV"])
        for ti, vi in zip(t, res.v0_trace):
            writer.writerow([repr(float(ti)), repr(float(vi))])
    paths.append(p)

    rate = res.population_rate()
    p = out / "population.csv"
    with p.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["time_ms", "rate_hz"])
        for ti, ri in zip(t, rate):
            writer.writerow([repr(float(ti)), repr(float(ri))])
    paths.append(p)

    p = out / "readout.csv"
    with p.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["time_ms", "zhat", "target"])
        for ti, zi, gi in zip(t, res.readout, res.target):
            writer.writerow([repr(float(ti)), repr(float(zi)), repr(float(gi))])
    paths.append(p)

    metrics = {
        "mfr_hz": res.mfr_hz,
        "mse_generate": None if np.isnan(res.mse_generate) else res.mse_generate,
        "failure_max_pct": res.failure.max_pct,
        "failure_mean_pct": res.failure.mean_pct,
        "failure_pairs": res.failure.pairs,
        "total_spikes": int(res.spike_steps.size),
        "n_steps": res.n_steps,
        "seed": res.seed,
        "config": cfg.to_dict(),
    }
    p = out / "metrics.json"
    p.write_text(json.dumps(metrics, indent=2, sort_keys=True) + "\n")
    paths.append(p)
    return paths


def cmd_snn_run(args: argparse.Namespace, argv: list[str]) -> int:
    started = time.time()
    cfg = _load_snn_config(args)
    out = Path(args.out)
    _check_out(out / "metrics.json", args.overwrite)
    sim = Simulation(cfg)
    try:
        res = sim.run()
    except SimulationDivergedError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    outputs = _write_run_outputs(out, res, cfg)
    _write_manifest(out, argv, cfg.network.seed,
                    [cfg.network.compressor.name], outputs, started,
                    args.overwrite)
    return 0


def cmd_snn_chaos(args: argparse.Namespace, argv: list[str]) -> int:
    started = time.time()
    cfg = _load_snn_config(args)
    cfg = SnnConfig(cfg.neuron, cfg.network, cfg.learning,
                    PhaseSchedule(args.duration_s, 0.0, 0.0))
    out = Path(args.out)
    _check_out(out / "divergence.csv", args.overwrite)
    deletion = (args.neuron, args.delete_after_ms)
    try:
        rep = chaos_experiment(cfg, deletion)
    except SimulationDivergedError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    outputs = _write_run_outputs(out / "baseline", rep.baseline, cfg)
    outputs += _write_run_outputs(out / "perturbed", rep.perturbed, cfg)
    p = out / "divergence.csv"
    dv = rep.v0_divergence()
    da = rep.activity_divergence()
    t = rep.baseline.times_ms()
    with p.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["time_ms", "abs_dv0_mV", "abs_drate_hz"])
        for ti, vi, ai in zip(t, dv, da):
            writer.writerow([repr(float(ti)), repr(float(vi)), repr(float(ai))])
    outputs.append(p)
    summary = {
        "neuron": rep.neuron,
        "deletion_step": rep.deletion_step,
        "deletion_time_ms": (rep.deletion_step + 1) * rep.baseline.dt_ms,
        "first_divergence_step": rep.first_divergence_step,
        "exceeds_10pct_within_1s": rep.exceeds_activity_threshold(),
    }
    (out / "chaos.json").write_text(
        json.dumps(summary, indent=2, sort_keys=True) + "\n"
    )
    outputs.append(out / "chaos.json")
    _write_manifest(out, argv, cfg.network.seed,
                    [cfg.network.compressor.name], outputs, started,
                    args.overwrite)
    return 0


def cmd_snn_replay(args: argparse.Namespace, argv: list[str]) -> int:
    started = time.time()
    src = Path(args.source)
    metrics = json.loads((src / "metrics.json").read_text())
    spikes_path = src / "spikes.csv"
    neurons, times = [], []
    with spikes_path.open() as fh:
        for row in csv.DictReader(fh):
            neurons.append(int(row["neuron"]))
            times.append(float(row["time_ms"]))
    neurons = np.array(neurons, dtype=np.int64)
    times = np.array(times)

    cfg_echo = metrics["config"]
    cfg = default_params()
    net = cfg.network
    dt = cfg_echo["neuron"]["dt_ms"]
    from dataclasses import replace as _replace
    net = _replace(net, n=cfg_echo["network"]["n"],
                   seed=cfg_echo["network"]["seed"])
    steps = np.round(times / dt).astype(np.int64) - 1
    exc_mask, inh_mask = _connectivity(net)
    stats = replay_failure(
        neurons, steps, int(metrics["n_steps"]), exc_mask, inh_mask,
        preset(args.compressor or "exact"),
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    p = out / "replay_metrics.json"
    _check_out(p, args.overwrite)
    p.write_text(json.dumps({
        "source": str(src),
        "compressor": resolve_label(args.compressor or "exact"),
        "failure_max_pct": stats.max_pct,
        "failure_mean_pct": stats.mean_pct,
        "failure_pairs": stats.pairs,
    }, indent=2, sort_keys=True) + "\n")
    _write_manifest(out, argv, None, [resolve_label(args.compressor or "exact")],
                    [p], started, args.overwrite)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lutpop",
        description="Approximate population counting and its network effects",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("accuracy", help="exact correct-output percentages")
    p.add_argument("--configs", default="A,B,C,D,E,F,G,H,I,J,K,L")
    p.add_argument("--method", choices=["exhaustive", "combinatorial", "both"],
                   default="combinatorial")
    p.add_argument("--width-limit", type=int, default=EXHAUSTIVE_WIDTH_LIMIT)
    p.add_argument("--audit", action="store_true",
                   help="also write the published-value comparison table")
    p.add_argument("--out", default="accuracy.csv")
    p.add_argument("--overwrite", action="store_true")
    p.set_defaults(func=cmd_accuracy)

    p = sub.add_parser("sweep", help="density sweep error statistics")
    p.add_argument("--configs", default=_DEFAULT_SWEEP_CONFIGS)
    p.add_argument("--n", type=int, default=1024)
    p.add_argument("--densities", default="",
                   help="comma-separated percents; default 1-10 then 10-step")
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="sweep.csv")
    p.add_argument("--overwrite", action="store_true")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("resources", help="LUT instance counts")
    p.add_argument("--configs", default="A,B,C,D,E,F,G,H,I,J,K,L,216,540,1024")
    p.add_argument("--n", type=int, default=1024)
    p.add_argument("--out", default="resources.csv")
    p.add_argument("--overwrite", action="store_true")
    p.set_defaults(func=cmd_resources)

    psnn = sub.add_parser("snn", help="spiking-network experiments")
    snn_sub = psnn.add_subparsers(dest="snn_command", required=True)

    p = snn_sub.add_parser("run", help="full init/train/generate run")
    p.add_argument("--compressor", default="exact")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--params", default="", help="JSON parameter file")
    p.add_argument("--out", default="snn_run")
    p.add_argument("--overwrite", action="store_true")
    p.set_defaults(func=cmd_snn_run)

    p = snn_sub.add_parser("chaos", help="single-spike-deletion probe")
    p.add_argument("--compressor", default="exact")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--params", default="")
    p.add_argument("--duration-s", type=float, default=2.0)
    p.add_argument("--neuron", type=int, default=0)
    p.add_argument("--delete-after-ms", type=float, default=1000.0)
    p.add_argument("--out", default="snn_chaos")
    p.add_argument("--overwrite", action="store_true")
    p.set_defaults(func=cmd_snn_chaos)

    p = snn_sub.add_parser("replay", help="open-loop failure stats on a run")
    p.add_argument("--from", dest="source", required=True,
                   help="directory of a previous snn run")
    p.add_argument("--compressor", default="exact")
    p.add_argument("--out", default="snn_replay")
    p.add_argument("--overwrite", action="store_true")
    p.set_defaults(func=cmd_snn_replay)
    return parser


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    args = build_parser().parse_args(argv)
    try:
        return args.func(args, argv)
    except FileExistsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
