"""Command-line entry point.

Usage: ``cannpi <subcommand> [--config FILE] [--set key.path=value ...]
[--seed N] [--out DIR]``. Exit codes: 0 success, 1 usage or config error,
2 data error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__
from .cann import CannParams, ZeroActivityError, reduce_3d, run_cann_sequence
from .config import ConfigError, dump_config, load_config, write_resolved

log = logging.getLogger("cannpi")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
SUBCOMMANDS = ("simulate", "gen-data", "train", "eval-fidelity", "run-pi", "eval", "bench", "plot")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _required(section: dict, key: str, name: str):
    value = section.get(key)
    if value in (None, "", []):
        raise UsageError(f"{name}.{key} is required (use --set {name}.{key}=...)")
    return value


def _cann_params(cfg: dict) -> CannParams:
    return CannParams(**cfg["cann"])


def _dataset_config(cfg: dict, dims: int):
    from .trajgen import DatasetConfig

    return DatasetConfig(seed=cfg["seed"], dims=dims, **cfg["data"])


def _write_csv(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


# -- subcommands ------------------------------------------------------------


def cmd_simulate(cfg: dict, out: Path) -> list[Path]:
    from .trajgen import build_dataset, save_dataset

    params = _cann_params(cfg)
    sim = cfg["simulate"]
    if sim["mode"] == "dataset":
        ds = build_dataset(
            _dataset_config(cfg, params.dims), params, sim["train_sequences"], include_test=sim["include_test"]
        )
        path = out / "dataset.jsonl"
        save_dataset(ds, path)
        log.info("wrote %d sequences %s", len(ds.records), ds.counts())
        return [path]
    if sim["mode"] == "bump":
        n = int(sim["bump_frames"])
        ramp = np.mod(sim["bump_start"] + sim["bump_rate"] * np.arange(n), 2 * np.pi)
        stim = ramp if params.dims == 1 else np.stack([ramp] * 3, axis=-1)
        _, states = run_cann_sequence(params, stim, cfg["data"]["settle_steps"], return_states=True)
        path = out / "bump.csv"
        if params.dims == 1:
            header = ["frame", "stimulus"] + [f"u{i}" for i in range(params.n_per_axis)]
            rows = [[f, repr(float(ramp[f]))] + [repr(float(v)) for v in states[f]] for f in range(n)]
        else:
            red = reduce_3d(states)
            header = ["frame", "stimulus"] + [f"s{ax}{i}" for ax in "xyz" for i in range(params.n_per_axis)]
            flat = np.concatenate(list(red), axis=-1)
            rows = [[f, repr(float(ramp[f]))] + [repr(float(v)) for v in flat[f]] for f in range(n)]
        _write_csv(path, header, rows)
        return [path]
    raise UsageError(f"simulate.mode must be 'dataset' or 'bump', not {sim['mode']!r}")


def cmd_gen_data(cfg: dict, out: Path) -> list[Path]:
    from .evaluation import Trajectory, write_trajectory
    from .pi import integrate_stream, square_loop_cues, write_cues

    g = cfg["gen_data"]
    true, biased = square_loop_cues(g["side"], g["speed"], g["turn_rate"], g["rate_hz"], g["scale_error"], g["yaw_bias"])
    paths = [out / "cues.csv", out / "cues_true.csv", out / "ground_truth.csv"]
    write_cues(biased, paths[0])
    write_cues(true, paths[1])
    gt = integrate_stream(true)
    write_trajectory(Trajectory.from_poses([c.t for c in true], gt), paths[2])
    return paths


def cmd_train(cfg: dict, out: Path) -> list[Path]:
    from .trajgen import load_dataset
    from .training import RegeneratingSource, TrainConfig, default_architecture, train
    from .weights_io import save_weights

    t = dict(cfg["train"])
    if t.pop("regenerate"):
        params = _cann_params(cfg)
        source = RegeneratingSource(_dataset_config(cfg, params.dims), params)
        t.pop("dataset")
    else:
        source = load_dataset(_required(t, "dataset", "train"))
        t.pop("dataset")
    arch = default_architecture(source.dims if hasattr(source, "dims") else source.cann_params.dims, t.pop("hidden_size"))
    weights, history = train(source, TrainConfig(init_seed=cfg["seed"], **t), arch)
    wpath, lpath = out / "weights.crpw", out / "train_log.csv"
    save_weights(weights, wpath)
    _write_csv(
        lpath,
        ["epoch", "train_loss", "val_loss", "wall_time_s"],
        [[e.epoch, repr(e.train_loss), repr(e.val_loss), f"{e.wall_time_s:.3f}"] for e in history.epochs],
    )
    log.info("best epoch %d, val loss %.6g", history.best_epoch, history.best_val_loss)
    return [wpath, lpath]


def cmd_eval_fidelity(cfg: dict, out: Path) -> list[Path]:
    from .evaluation import fidelity
    from .replica import forward_sequence
    from .trajgen import load_dataset
    from .training import encode_inputs
    from .weights_io import load_weights

    f = cfg["eval_fidelity"]
    ds = load_dataset(_required(f, "dataset", "eval_fidelity"))
    weights = load_weights(_required(f, "weights", "eval_fidelity"))
    records = ds.split(f["split"])
    if not records:
        raise ValueError(f"dataset has no '{f['split']}' records")
    dims = ds.cann_params.dims
    ys = np.concatenate([forward_sequence(weights, encode_inputs(r.inputs, dims)) for r in records])
    labels = np.concatenate([r.labels for r in records])
    rep = fidelity(ys, labels)
    names = ["theta"] if dims == 1 else ["x", "y", "z"]
    path = out / "fidelity.csv"
    _write_csv(
        path,
        ["channel", "frames", "mean_rad", "max_rad", "frac_within_tol", "tol_rad"],
        [
            [nm, len(ys), f"{rep.mean[i]:.6g}", f"{rep.max[i]:.6g}", f"{rep.frac_within[i]:.6g}", f"{rep.tolerance:.6g}"]
            for i, nm in enumerate(names)
        ],
    )
    for i, nm in enumerate(names):
        print(f"{nm}: mean {rep.mean[i]:.4f} rad, max {rep.max[i]:.4f} rad, within tol {100 * rep.frac_within[i]:.2f}%")
    return [path]


def cmd_run_pi(cfg: dict, out: Path) -> list[Path]:
    from .evaluation import Trajectory, write_trajectory
    from .graph import GraphParams
    from .pi import PiConfig, RingScale, read_cues
    from .pipeline import run_pipeline
    from .replica import GCN, HDCN
    from .weights_io import load_weights

    p = cfg["pi"]
    cues = read_cues(_required(p, "cues", "pi"))
    if (p["hdcn_weights"] is None) != (p["gcn_weights"] is None):
        raise UsageError("pi.hdcn_weights and pi.gcn_weights must be given together")
    hdcn = gcn = None
    if p["hdcn_weights"] is not None:
        hdcn = load_weights(p["hdcn_weights"])
        gcn = load_weights(p["gcn_weights"])
        if hdcn.arch.input_size != HDCN.input_size or gcn.arch.input_size != GCN.input_size:
            raise ValueError("weights do not match the HDCN/GCN input encodings")
    else:
        log.info("no replica weights given: using exact ring stimuli")
    pi_cfg = PiConfig(scale=RingScale(p["l_xy"], p["l_z"]), warmup_frames=p["warmup_frames"])
    res = run_pipeline(cues, hdcn, gcn, pi_cfg, GraphParams(**cfg["graph"]))
    raw, corrected = res.trajectories(downsample=True)
    full = Trajectory.from_poses(res.t, res.raw)
    paths = [out / "trajectory.csv", out / "trajectory_raw.csv", out / "pi_frames.csv", out / "graph.json"]
    write_trajectory(corrected, paths[0])
    write_trajectory(raw, paths[1])
    write_trajectory(full, paths[2])
    res.graph.dump(paths[3])
    if res.n_flagged:
        log.warning("%d frames had a zero replica output", res.n_flagged)
    print(
        f"frames {len(res.t)}, nodes {len(res.graph.nodes)}, links {len(res.graph.links)}, "
        f"endpoint gap raw {full.endpoint_gap():.4f} m, corrected {corrected.endpoint_gap():.4f} m"
    )
    return paths


def cmd_eval(cfg: dict, out: Path) -> list[Path]:
    from .evaluation import evaluate, read_trajectory, write_report

    e = cfg["eval"]
    ests = _required(e, "estimate", "eval")
    ests = [ests] if isinstance(ests, str) else list(ests)
    methods = e["method"]
    methods = [methods] if isinstance(methods, str) else list(methods)
    if len(methods) != len(ests):
        methods = [f"{methods[0]}_{i}" for i in range(len(ests))] if len(ests) > 1 else methods[:1]
    times = e["time_cost_s"]
    times = times if isinstance(times, list) else [times] * len(ests)
    gt = read_trajectory(_required(e, "ground_truth", "eval"))
    rows = []
    for path, method, tc in zip(ests, methods, times):
        rep = evaluate(read_trajectory(path), gt, e["alignment"])
        rows.append(rep.table_row(method, tc))
        print(f"{method}: MAE {rep.mae_m:.4f} m, RMSE {rep.rmse_m:.4f} m, MTE {rep.mte_m:.4f} m over {rep.frames} frames")
    path = out / "report.csv"
    write_report(rows, path)
    return [path]


def cmd_bench(cfg: dict, out: Path) -> list[Path]:
    from .bench import bench
    from .weights_io import load_weights

    b = cfg["bench"]
    kw = {}
    if b["hdcn_weights"]:
        kw["hdcn"] = load_weights(b["hdcn_weights"])
    if b["gcn_weights"]:
        kw["gcn"] = load_weights(b["gcn_weights"])
    results = {w: bench(w, b["frames"], b["repeats"], cfg["seed"], **kw) for w in b["workloads"]}
    path = out / "bench.csv"
    rows = [r.row() for r in results.values()]
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    for r in results.values():
        print(f"{r.workload}: {r.median_us:.1f} us/frame (median of {r.repeats})")
    paths = [path]
    pairs = [(a, c) for a, c in (("replica_gcn", "cann_3d"), ("replica_hdcn", "cann_1d")) if a in results and c in results]
    if pairs:
        spath = out / "speedup.csv"
        srows = []
        for a, c in pairs:
            ratio = results[c].median_us / results[a].median_us
            srows.append([a, c, f"{results[a].median_us:.3f}", f"{results[c].median_us:.3f}", f"{ratio:.4f}"])
            print(f"speedup {a} vs {c}: {ratio:.2f}x")
        _write_csv(spath, ["replica", "reference", "replica_us", "reference_us", "speedup"], srows)
        paths.append(spath)
    return paths


def _read_bump(path) -> tuple[np.ndarray, list[str]]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[:2] != ["frame", "stimulus"]:
            raise ValueError(f"{path}:1: not a bump dump")
        rows = [[float(v) for v in row[2:]] for row in reader if row]
    if not rows:
        raise ValueError(f"{path}: no frames")
    return np.array(rows), header[2:]


def cmd_plot(cfg: dict, out: Path) -> list[Path]:
    from .cann import AxisReduction
    from .evaluation import read_trajectory
    from .plots import bump_heatmap, bump_slices, trajectory_overlay

    p = cfg["plot"]
    inputs = _required(p, "inputs", "plot")
    inputs = [inputs] if isinstance(inputs, str) else list(inputs)
    if p["kind"] == "trajectories":
        labels = list(p["labels"]) or [Path(i).stem for i in inputs]
        if len(labels) != len(inputs):
            raise UsageError("plot.labels must match plot.inputs")
        trajs = {lab: read_trajectory(i) for lab, i in zip(labels, inputs)}
        return list(trajectory_overlay(trajs, out / "trajectories.svg", p["title"] or "top-down view"))
    data, cols = _read_bump(inputs[0])
    if p["kind"] == "bump":
        if not cols[0].startswith("u"):
            raise ValueError("bump heatmaps need a ring dump (simulate with cann.dims=1)")
        return [bump_heatmap(data, out / "bump_heatmap.svg", p["title"] or "bump over time")]
    if p["kind"] == "slices":
        if not cols[0].startswith("s"):
            raise ValueError("slice plots need a torus dump (simulate with cann.dims=3)")
        n = data.shape[1] // 3
        last = data[-1]
        red = AxisReduction(last[:n], last[n : 2 * n], last[2 * n :])
        return [bump_slices(red, out / "bump_slices.svg", p["title"] or "reconstructed bump")]
    raise UsageError(f"plot.kind must be trajectories, bump or slices, not {p['kind']!r}")


COMMANDS = {
    "simulate": cmd_simulate,
    "gen-data": cmd_gen_data,
    "train": cmd_train,
    "eval-fidelity": cmd_eval_fidelity,
    "run-pi": cmd_run_pi,
    "eval": cmd_eval,
    "bench": cmd_bench,
    "plot": cmd_plot,
}


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="cannpi", description="CANN replicas for path integration.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("subcommand", choices=SUBCOMMANDS)
    parser.add_argument("--config", help="YAML config file")
    parser.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE")
    parser.add_argument("--seed", type=int, help="shortcut for --set seed=N")
    parser.add_argument("--out", help="output directory (shortcut for --set output_dir=DIR)")
    parser.add_argument("--print-config", action="store_true", help="print the resolved config and exit")
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def _exit_code(exc: BaseException) -> int:
    from .replica import NonFiniteLoss
    from .training import TrainingDiverged

    if isinstance(exc, (UsageError, ConfigError, TypeError)):
        return EXIT_USAGE
    if isinstance(exc, (TrainingDiverged, NonFiniteLoss, ZeroActivityError, FloatingPointError)):
        return EXIT_NUMERIC
    return EXIT_DATA


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    overrides = list(args.overrides)
    if args.seed is not None:
        overrides.append(f"seed={args.seed}")
    if args.out is not None:
        overrides.append(f"output_dir={args.out}")
    try:
        cfg = load_config(args.config, overrides)
        if args.print_config:
            sys.stdout.write(dump_config(cfg))
            return EXIT_OK
        out = Path(cfg["output_dir"])
        try:
            out.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise OSError(f"cannot create output directory {out}: {exc}") from None
        write_resolved(cfg, out, args.subcommand.replace("-", "_"))
        paths = COMMANDS[args.subcommand](cfg, out)
    except Exception as exc:  # mapped to an exit code with a one-line message
        code = _exit_code(exc)
        print(f"cannpi {args.subcommand}: error: {exc}", file=sys.stderr)
        if args.verbose:
            log.exception("details")
        return code
    for p in paths:
        log.info("wrote %s", p)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
