"""Command-line harness: flow, evaluate, degrade, synth and interpolate.

Solver settings are layered: built-in defaults, then an optional ``key=value``
config file, then explicit flags. Every run writes ``run.log`` (JSON, all
effective settings) and ``run.cfg`` (reusable with ``--config``) to ``--out``.

Exit status: 0 success, 1 numerical failure, 2 usage or I/O error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from lcmflow import kernels, metrics, synth
from lcmflow.errors import ConfigurationError, LCMFlowError, NumericalError
from lcmflow.imagecore import load_image, save_image
from lcmflow.io_formats import read_flo, write_flo
from lcmflow.solver import SolverParams, compute_flow
from lcmflow.warp import flow_to_color, interpolate_middle_frame

log = logging.getLogger("lcmflow")

EXIT_OK = 0
EXIT_NUMERICAL = 1
EXIT_USAGE = 2

# flag name -> (SolverParams field, parser)
SOLVER_FLAGS = {
    "lambda": ("lam", float),
    "xi": ("xi", float),
    "theta": ("theta", float),
    "epsilon": ("epsilon", float),
    "mesh-density": ("mesh_density", int),
    "pyramid-factor": ("pyramid_factor", float),
    "min-dim": ("min_dim", int),
    "outer-iters": ("outer_iters", int),
    "inner-iters": ("inner_iters", int),
    "solver": ("linear_solver", str),
    "cg-iters": ("cg_iters", int),
}


class UsageError(LCMFlowError):
    pass


def read_config(path) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment. Keys use flag spelling."""
    out = {}
    for n, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{n}: expected key=value, got {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.replace("_", "-")] = value
    return out


def write_config(values: dict, path) -> None:
    lines = [f"{k} = {v}" for k, v in values.items()]
    Path(path).write_text("\n".join(lines) + "\n")


def resolve_settings(args) -> tuple[SolverParams, dict]:
    """Merge defaults, config file and flags into solver params plus run settings."""
    fileconf = read_config(args.config) if args.config else {}
    known = set(SOLVER_FLAGS) | {"seed", "threads"}
    unknown = sorted(set(fileconf) - known)
    if unknown:
        raise UsageError(f"unknown config keys: {', '.join(unknown)}")
    kwargs = {}
    for flag, (name, cast) in SOLVER_FLAGS.items():
        value = getattr(args, name)
        if value is None and flag in fileconf:
            try:
                value = cast(fileconf[flag])
            except ValueError as exc:
                raise UsageError(f"config key {flag}: {exc}") from None
        if value is not None:
            kwargs[name] = value
    params = SolverParams(**kwargs)
    seed = args.seed if args.seed is not None else int(fileconf.get("seed", 42))
    threads = args.threads if args.threads is not None else int(fileconf.get("threads", 1))
    return params, {"seed": seed, "threads": threads}


def effective_config(params: SolverParams, run: dict) -> dict:
    conf = {flag: getattr(params, name) for flag, (name, _) in SOLVER_FLAGS.items()}
    conf.update(run)
    return conf


def write_run_log(out: Path, command: str, inputs: dict, params: SolverParams | None,
                  run: dict, extra: dict | None = None) -> None:
    record = {
        "command": command,
        "inputs": inputs,
        "run": run,
        "backend": kernels.BACKEND,
    }
    if params is not None:
        record["params"] = params.as_dict()
        write_config(effective_config(params, run), out / "run.cfg")
    else:
        write_config(run, out / "run.cfg")
    if extra:
        record.update(extra)
    (out / "run.log").write_text(json.dumps(record, indent=2, sort_keys=True) + "\n")


def _require(*paths):
    for p in paths:
        if p is not None and not Path(p).is_file():
            raise FileNotFoundError(f"no such file: {p}")


def _outdir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_pair(a, b):
    I1, I2 = load_image(a), load_image(b)
    if I1.shape != I2.shape:
        raise UsageError(f"image sizes differ: {a} is {I1.shape}, {b} is {I2.shape}")
    return I1, I2


def cmd_flow(args) -> int:
    _require(args.img1, args.img2)
    params, run = resolve_settings(args)
    I1, I2 = _load_pair(args.img1, args.img2)
    out = _outdir(args)
    w = compute_flow(I1, I2, params)
    write_flo(w, out / "flow.flo")
    save_image(flow_to_color(w), out / "flow.png")
    write_run_log(out, "flow", {"img1": args.img1, "img2": args.img2}, params, run)
    print(f"wrote {out / 'flow.flo'}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    _require(args.flow, args.gt, args.mask)
    w, gt = read_flo(args.flow), read_flo(args.gt)
    if w.shape != gt.shape:
        raise UsageError(f"flow is {w.shape}, ground truth is {gt.shape}")
    mask = load_image(args.mask).data > 0.5 if args.mask else None
    report = metrics.evaluate(w, gt, mask)
    text = report.to_json() if args.format == "json" else report.to_text()
    print(text)
    if args.out:
        out = _outdir(args)
        (out / f"report.{'json' if args.format == 'json' else 'txt'}").write_text(text + "\n")
    return EXIT_OK


def cmd_degrade(args) -> int:
    _require(*args.frames)
    if args.kind not in synth.DEGRADATIONS:
        raise UsageError(f"unknown degradation {args.kind!r}; choose from {synth.DEGRADATIONS}")
    seed = 42 if args.seed is None else args.seed
    out = _outdir(args)
    count = len(args.frames)
    for i, path in enumerate(args.frames):
        img = synth.degrade(load_image(path), args.kind, seed, i, count)
        save_image(img, out / f"{Path(path).stem}_{args.kind}.png", bits=16)
    write_run_log(out, "degrade", {"frames": args.frames}, None,
                  {"kind": args.kind, "seed": seed})
    return EXIT_OK


def cmd_synth(args) -> int:
    seed = 42 if args.seed is None else args.seed
    seq = synth.synth_sequence(args.width, args.height, args.amplitude, args.frames, seed)
    out = _outdir(args)
    for i, img in enumerate(seq.frames):
        save_image(img, out / f"frame_{i:03d}.png", bits=16)
    for i, w in enumerate(seq.flows[1:], 1):
        write_flo(w, out / f"flow_{i:03d}.flo")
    write_run_log(out, "synth", {}, None, {
        "width": args.width, "height": args.height, "amplitude": args.amplitude,
        "frames": args.frames, "seed": seed,
    })
    return EXIT_OK


def cmd_interpolate(args) -> int:
    _require(args.img1, args.img2)
    if not 0.0 <= args.t <= 1.0:
        raise UsageError(f"t must lie in [0, 1], got {args.t}")
    params, run = resolve_settings(args)
    I1, I2 = _load_pair(args.img1, args.img2)
    out = _outdir(args)
    w = compute_flow(I1, I2, params)
    mid = interpolate_middle_frame(I1, I2, w, args.t)
    save_image(mid, out / "interpolated.png", bits=16)
    write_run_log(out, "interpolate", {"img1": args.img1, "img2": args.img2}, params, run,
                  {"t": args.t})
    return EXIT_OK


def _solver_parent() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("solver")
    g.add_argument("--lambda", dest="lam", type=float, help="global smoothness weight")
    g.add_argument("--xi", type=float, help="mesh Laplacian weight")
    g.add_argument("--theta", type=float, help="gradient constancy weight")
    g.add_argument("--epsilon", type=float, help="robust penalty offset")
    g.add_argument("--mesh-density", dest="mesh_density", type=int, help="mesh spacing in pixels")
    g.add_argument("--pyramid-factor", dest="pyramid_factor", type=float)
    g.add_argument("--min-dim", dest="min_dim", type=int, help="smallest pyramid side")
    g.add_argument("--outer-iters", dest="outer_iters", type=int)
    g.add_argument("--inner-iters", dest="inner_iters", type=int)
    g.add_argument("--solver", dest="linear_solver", choices=("cg", "sor"))
    g.add_argument("--cg-iters", dest="cg_iters", type=int)
    g.add_argument("--threads", type=int,
                   help="worker cap; kernels are serial, so output is always reproducible")
    g.add_argument("--config", help="key=value settings file; flags take precedence")
    return p


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lcmflow", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    solver = _solver_parent()

    p = sub.add_parser("flow", parents=[solver], help="estimate flow from img1 to img2")
    p.add_argument("img1")
    p.add_argument("img2")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", default=".")
    p.set_defaults(func=cmd_flow)

    p = sub.add_parser("evaluate", help="compare a .flo against ground truth")
    p.add_argument("flow")
    p.add_argument("gt")
    p.add_argument("--mask", help="image; pixels above 0.5 are evaluated")
    p.add_argument("--format", choices=("text", "json"), default="text")
    p.add_argument("--out")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("degrade", help="apply a degradation to a frame sequence")
    p.add_argument("frames", nargs="+")
    p.add_argument("--kind", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", default=".")
    p.set_defaults(func=cmd_degrade)

    p = sub.add_parser("synth", help="write a synthetic sequence with exact flow",
                       description="flow_NNN.flo is the flow from frame_NNN.png to frame_000.png; "
                                   "pass them to 'flow' in that order")
    p.add_argument("--width", type=int, default=256)
    p.add_argument("--height", type=int, default=256)
    p.add_argument("--amplitude", type=float, default=6.0)
    p.add_argument("--frames", type=int, default=2)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", default=".")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("interpolate", parents=[solver], help="synthesise an in-between frame")
    p.add_argument("img1")
    p.add_argument("img2")
    p.add_argument("--t", type=float, default=0.5)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", default=".")
    p.set_defaults(func=cmd_interpolate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (NumericalError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"lcmflow: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (OSError, ValueError, UsageError, ConfigurationError) as exc:
        print(f"lcmflow: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
