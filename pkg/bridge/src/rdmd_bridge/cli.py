"""Bridge CLI: serve a checkpoint or the analytic stub; mint demo checkpoints.

    rdmd-bridge serve --checkpoint model.pt --transport stdio
    rdmd-bridge serve --stub-wiener --prior smoothness --s2 1.0 --transport tcp:0
    rdmd-bridge make-checkpoint model.pt --shape 1,32,32 --kind unet

Exit codes: 0 clean shutdown, 1 model load failure, 2 usage.
"""

from __future__ import annotations

import argparse
import sys

from .server import ScheduleGuard, StubWienerBackend, serve_stdio, serve_tcp
from .wiener import WienerStub


def _parse_shape(text: str) -> tuple[int, ...]:
    dims = tuple(int(v) for v in text.split(","))
    if len(dims) != 3 or any(d < 1 for d in dims):
        raise argparse.ArgumentTypeError(f"shape must be C,H,W of positive ints: {text!r}")
    return dims


def cmd_serve(args) -> int:
    if (args.checkpoint is None) == (not args.stub_wiener):
        print("error: pass exactly one of --checkpoint / --stub-wiener", file=sys.stderr)
        return 2
    if args.checkpoint is not None:
        from .model import load_checkpoint
        from .server import CheckpointBackend

        try:
            handle = load_checkpoint(args.checkpoint)
        except Exception as exc:  # noqa: BLE001 - any load failure is fatal
            print(f"error: cannot load checkpoint {args.checkpoint}: {exc}", file=sys.stderr)
            return 1
        backend = CheckpointBackend(handle)
    else:
        guard = ScheduleGuard(
            t_train=args.expect_t_train,
            beta_start=args.expect_beta_start,
            beta_end=args.expect_beta_end,
        )
        backend = StubWienerBackend(
            WienerStub(prior=args.prior, s2=args.s2, rho=args.rho), guard
        )

    if args.transport == "stdio":
        serve_stdio(backend)
        return 0
    if args.transport.startswith("tcp:"):
        serve_tcp(backend, int(args.transport[len("tcp:"):]))
        return 0
    print(f"error: unknown transport {args.transport!r}", file=sys.stderr)
    return 2


def cmd_make_checkpoint(args) -> int:
    from .model import create_checkpoint

    create_checkpoint(
        args.output,
        args.shape,
        kind=args.kind,
        t_train=args.t_train,
        beta_start=args.beta_start,
        beta_end=args.beta_end,
        base=args.base,
        seed=args.seed,
    )
    print(f"wrote {args.output}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rdmd-bridge", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_serve = sub.add_parser("serve", help="answer eps requests until the peer hangs up")
    p_serve.add_argument("--checkpoint", type=str, default=None)
    p_serve.add_argument("--stub-wiener", action="store_true",
                         help="serve the analytic Gaussian-prior predictor")
    p_serve.add_argument("--prior", choices=["smoothness", "iid"], default="smoothness")
    p_serve.add_argument("--s2", type=float, default=1.0)
    p_serve.add_argument("--rho", type=float, default=16.0)
    p_serve.add_argument("--expect-t-train", type=int, default=None)
    p_serve.add_argument("--expect-beta-start", type=float, default=None)
    p_serve.add_argument("--expect-beta-end", type=float, default=None)
    p_serve.add_argument("--transport", type=str, default="stdio",
                         help="stdio or tcp:PORT (0 picks a free port)")
    p_serve.set_defaults(func=cmd_serve)

    p_make = sub.add_parser("make-checkpoint", help="write a small demo checkpoint")
    p_make.add_argument("output")
    p_make.add_argument("--shape", type=_parse_shape, required=True)
    p_make.add_argument("--kind", choices=["unet", "zero"], default="unet")
    p_make.add_argument("--t-train", type=int, default=1000)
    p_make.add_argument("--beta-start", type=float, default=1e-4)
    p_make.add_argument("--beta-end", type=float, default=0.02)
    p_make.add_argument("--base", type=int, default=16)
    p_make.add_argument("--seed", type=int, default=0)
    p_make.set_defaults(func=cmd_make_checkpoint)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
