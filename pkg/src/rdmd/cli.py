"""Command-line entry points: degrade, restore, sweep, selfcheck.

Exit codes: 0 success, 2 usage/parameter, 3 I/O, 4 divergence,
5 backend/protocol failure.  Every command that produces outputs also
writes the fully resolved configuration needed to reproduce them, and
all randomness flows from --seed (never the wall clock).
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path
from typing import Any

from . import config as cfgmod
from . import imgio, metrics
from .denoisers import backend_from_config
from .errors import (
    BackendError,
    DivergenceError,
    ImageFormatError,
    ParameterError,
    RdmdError,
    ShapeError,
)
from .operators import (
    degrade,
    make_gaussian_kernel,
    make_motion_kernel,
    operator_from_config,
    write_kernel,
)
from .selfcheck import run_selfcheck
from .solver import RestorationResult, restore

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_IO = 3
EXIT_DIVERGENCE = 4
EXIT_BACKEND = 5


def _operator_config_from_flags(args) -> dict[str, Any]:
    op = args.op
    if op == "identity":
        return {"kind": "identity"}
    if op == "blur-gauss":
        return {"kind": "blur", "gaussian": {"size": args.size, "std": args.std}}
    if op == "blur-motion":
        return {
            "kind": "blur",
            "motion": {"size": args.size, "length": args.length, "angle_deg": args.angle},
        }
    if op == "blur-file":
        if not args.kernel:
            raise ParameterError("--op blur-file requires --kernel")
        return {"kind": "blur", "kernel_path": args.kernel}
    if op == "sr":
        return {"kind": "sr", "scale": args.scale}
    if op == "mask":
        if not args.mask_file:
            raise ParameterError("--op mask requires --mask-file")
        return {"kind": "mask", "mask_path": args.mask_file}
    raise ParameterError(f"unknown operator {op!r}")


def _input_shape_for(op_cfg: dict[str, Any], y_shape) -> tuple[int, int, int]:
    if op_cfg.get("kind") == "sr":
        scale = int(op_cfg["scale"])
        return (y_shape[0], y_shape[1] * scale, y_shape[2] * scale)
    return tuple(y_shape)


def _materialize_kernel(op_cfg: dict[str, Any], out_base: Path) -> dict[str, Any]:
    """Pin generated kernels to a file so the descriptor is reloadable."""
    if op_cfg.get("kind") != "blur" or "kernel_path" in op_cfg:
        return op_cfg
    if "gaussian" in op_cfg:
        g = op_cfg["gaussian"]
        kernel = make_gaussian_kernel(int(g["size"]), float(g["std"]))
    else:
        m = op_cfg["motion"]
        kernel = make_motion_kernel(
            int(m["size"]), float(m["length"]), float(m.get("angle_deg", 0.0))
        )
    kernel_path = out_base.with_suffix(".kernel.txt")
    write_kernel(kernel, kernel_path)
    resolved = dict(op_cfg)
    resolved["kernel_path"] = str(kernel_path)
    return resolved


def cmd_degrade(args) -> int:
    x = imgio.read_image(args.input)
    out = Path(args.output)
    op_cfg = _materialize_kernel(_operator_config_from_flags(args), out)
    op = operator_from_config(op_cfg, tuple(x.shape))
    y = degrade(op, x, args.sigma_n, args.seed)
    imgio.write_image(y, out)
    descriptor = {
        "operator": op_cfg,
        "sigma_n": args.sigma_n,
        "seed": args.seed,
        "input": str(args.input),
        "input_shape": list(x.shape),
        "output": str(out),
    }
    out.with_suffix(".json").write_text(cfgmod.dump_config(descriptor))
    print(f"wrote {out} and {out.with_suffix('.json')}")
    return EXIT_OK


def _flag_overrides(args) -> dict[str, Any]:
    solver: dict[str, Any] = {}
    for flag, key in [
        ("lam", "lambda"),
        ("tau", "tau"),
        ("zeta", "zeta"),
        ("eta", "eta"),
        ("sigma_n", "sigma_n"),
        ("trace_every", "trace_every"),
    ]:
        value = getattr(args, flag, None)
        if value is not None:
            solver[key] = value
    overrides: dict[str, Any] = {}
    if solver:
        overrides["solver"] = solver
    if getattr(args, "t_solve", None) is not None:
        overrides.setdefault("schedule", {})["t_solve"] = args.t_solve
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    if getattr(args, "backend", None) is not None:
        spec = args.backend
        if spec in ("wiener", "dct_shrink"):
            overrides["backend"] = {"kind": spec}
        elif spec.startswith(("extern:", "tcp:")):
            overrides["backend"] = {"kind": "extern", "spec": spec}
        else:
            raise ParameterError(f"unknown backend {spec!r}")
    return overrides


def _resolve_restore_setup(args):
    file_cfg = cfgmod.load_config_file(args.config) if args.config else None
    cfg = cfgmod.resolve(file_cfg, _flag_overrides(args))

    y = imgio.read_image(args.input)
    if args.op_config:
        descriptor = json.loads(Path(args.op_config).read_text())
        if "operator" not in descriptor:
            raise ParameterError(f"{args.op_config} has no 'operator' entry")
        cfg["operator"] = descriptor["operator"]
        if args.sigma_n is None and "sigma_n" in descriptor:
            cfg["solver"]["sigma_n"] = float(descriptor["sigma_n"])
            if "det_params" not in (file_cfg or {}).get("schedule", {}):
                cfg["schedule"]["det_params"]["sigma_min"] = max(
                    float(descriptor["sigma_n"]), 0.01
                )
    elif args.op is not None:
        cfg["operator"] = _operator_config_from_flags(args)
    cfgmod.validate_config(cfg)

    input_shape = _input_shape_for(cfg["operator"], y.shape)
    op = operator_from_config(cfg["operator"], input_shape)
    backend = backend_from_config(cfg["backend"], input_shape)
    sched, det = cfgmod.schedule_spec_from(cfg).build()
    solver_cfg = cfgmod.solver_config_from(cfg)
    return cfg, y, op, backend, sched, det, solver_cfg


def _write_restore_outputs(out: Path, cfg, result: RestorationResult) -> None:
    imgio.write_image(result.x0, out)
    out.with_suffix(".trace.csv").write_text(result.trace_csv())
    out.with_suffix(".config.json").write_text(cfgmod.dump_config(cfg))


def cmd_restore(args) -> int:
    cfg, y, op, backend, sched, det, solver_cfg = _resolve_restore_setup(args)
    reference = imgio.read_image(args.reference) if args.reference else None
    try:
        result = restore(y, op, backend, sched, det, solver_cfg, reference)
    finally:
        backend.close()
    out = Path(args.output)
    _write_restore_outputs(out, cfg, result)
    if reference is not None:
        print(
            f"PSNR={metrics.psnr(result.x0, reference):.4f} "
            f"SSIM={metrics.ssim(result.x0, reference):.4f}"
        )
    print(f"wrote {out}, {out.with_suffix('.trace.csv')}, {out.with_suffix('.config.json')}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg, y, op, backend, sched, det, solver_cfg = _resolve_restore_setup(args)
    reference = imgio.read_image(args.reference)
    taus = [float(v) for v in args.taus.split(",") if v != ""]
    lambdas = (
        [float(v) for v in args.lambdas.split(",") if v != ""]
        if args.lambdas
        else [solver_cfg.lam]
    )
    for tau in taus:
        if not (0.0 <= tau <= 1.0):
            raise ParameterError(f"tau must be in [0, 1], got {tau}")

    grid = [(lam, tau) for lam in lambdas for tau in taus]
    shared_backend = cfg["backend"].get("kind") != "extern"

    def run_cell(cell):
        lam, tau = cell
        # Out-of-process backends serialize per connection, so parallel
        # rows each get their own.
        cell_backend = backend if shared_backend else backend_from_config(
            cfg["backend"], op.input_shape
        )
        t0 = time.perf_counter()
        try:
            result = restore(
                y, op, cell_backend, sched, det, replace(solver_cfg, lam=lam, tau=tau)
            )
            return (
                lam,
                tau,
                metrics.psnr(result.x0, reference),
                metrics.ssim(result.x0, reference),
                time.perf_counter() - t0,
                "",
            )
        except RdmdError as exc:
            return (lam, tau, float("nan"), float("nan"), time.perf_counter() - t0, str(exc))
        finally:
            if not shared_backend:
                cell_backend.close()

    if args.workers > 1:
        with ThreadPoolExecutor(max_workers=args.workers) as pool:
            rows = list(pool.map(run_cell, grid))
    else:
        rows = [run_cell(cell) for cell in grid]
    backend.close()

    lines = ["lambda,tau,psnr,ssim,runtime_s,error"]
    for lam, tau, p, s, rt, err in rows:
        lines.append(f"{lam!r},{tau!r},{p!r},{s!r},{rt:.3f},{err.replace(',', ';')}")
    out = Path(args.output)
    out.write_text("\n".join(lines) + "\n")
    out.with_suffix(".config.json").write_text(cfgmod.dump_config(cfg))
    if args.scatter:
        scatter = ["tau\tpsnr"] + [f"{tau!r}\t{p!r}" for _, tau, p, _, _, err in rows if not err]
        Path(args.scatter).write_text("\n".join(scatter) + "\n")
    failures = sum(1 for row in rows if row[5])
    print(f"wrote {out} ({len(rows)} rows, {failures} failed)")
    return EXIT_OK if failures < len(rows) else EXIT_BACKEND


def cmd_selfcheck(args) -> int:
    results = run_selfcheck(workers=args.workers)
    for r in results:
        status = "ok  " if r.passed else "FAIL"
        print(f"{status} {r.name}: {r.detail}")
    return EXIT_OK if all(r.passed for r in results) else 1


def _add_operator_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument(
        "--op",
        choices=["identity", "blur-gauss", "blur-motion", "blur-file", "sr", "mask"],
        default=None,
        help="degradation operator",
    )
    p.add_argument("--size", type=int, default=61, help="kernel size (odd)")
    p.add_argument("--std", type=float, default=3.0, help="gaussian kernel std")
    p.add_argument("--length", type=float, default=31.0, help="motion kernel length")
    p.add_argument("--angle", type=float, default=0.0, help="motion angle (degrees)")
    p.add_argument("--kernel", type=str, default=None, help="kernel file for blur-file")
    p.add_argument("--mask-file", type=str, default=None, help="binary mask image")
    p.add_argument("--scale", type=int, default=4, help="sr decimation factor")


def _add_solver_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=str, default=None, help="JSON config file")
    p.add_argument("--op-config", type=str, default=None, help="descriptor from degrade")
    p.add_argument("--backend", type=str, default=None, help="wiener | dct_shrink | extern:CMD | tcp:HOST:PORT")
    p.add_argument("--lambda", dest="lam", type=float, default=None)
    p.add_argument("--tau", type=float, default=None)
    p.add_argument("--zeta", type=float, default=None)
    p.add_argument("--eta", type=float, default=None)
    p.add_argument("--sigma-n", dest="sigma_n", type=float, default=None)
    p.add_argument("--t-solve", dest="t_solve", type=int, default=None)
    p.add_argument("--trace-every", dest="trace_every", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rdmd", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_deg = sub.add_parser("degrade", help="simulate a degraded measurement")
    p_deg.add_argument("input")
    p_deg.add_argument("output")
    _add_operator_flags(p_deg)
    p_deg.set_defaults(op="identity")
    p_deg.add_argument("--sigma-n", dest="sigma_n", type=float, default=0.05)
    p_deg.add_argument("--seed", type=int, default=0)
    p_deg.set_defaults(func=cmd_degrade)

    p_res = sub.add_parser("restore", help="restore an image from a measurement")
    p_res.add_argument("input")
    p_res.add_argument("output")
    _add_operator_flags(p_res)
    _add_solver_flags(p_res)
    p_res.add_argument("--reference", type=str, default=None, help="clean image for metrics")
    p_res.set_defaults(func=cmd_restore)

    p_sw = sub.add_parser("sweep", help="distortion-perception sweep over tau (and lambda)")
    p_sw.add_argument("input")
    p_sw.add_argument("output", help="CSV output path")
    _add_operator_flags(p_sw)
    _add_solver_flags(p_sw)
    p_sw.add_argument("--reference", type=str, required=True)
    p_sw.add_argument("--taus", type=str, required=True, help="comma-separated tau values")
    p_sw.add_argument("--lambdas", type=str, default=None, help="comma-separated lambda values")
    p_sw.add_argument("--workers", type=int, default=1)
    p_sw.add_argument("--scatter", type=str, default=None, help="optional tau/psnr TSV")
    p_sw.set_defaults(func=cmd_sweep)

    p_sc = sub.add_parser("selfcheck", help="run the embedded invariant suite")
    p_sc.add_argument("--workers", type=int, default=1)
    p_sc.set_defaults(func=cmd_selfcheck)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ParameterError, ShapeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (FileNotFoundError, ImageFormatError, OSError) as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except DivergenceError as exc:
        print(f"divergence: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE
    except BackendError as exc:
        print(f"backend failure: {exc}", file=sys.stderr)
        return EXIT_BACKEND


if __name__ == "__main__":
    raise SystemExit(main())
