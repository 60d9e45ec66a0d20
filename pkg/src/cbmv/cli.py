"""Command-line frontend.

Every subcommand is a thin client of the HTTP service: arguments are
packed into a request, sent either to an in-process application
instance (the default, so commands stay single-process and fully
deterministic) or to a remote server given with ``--server``, and the
JSON answer is printed in a human-friendly form.

Exit codes: 0 success, 1 usage/configuration error, 2 data error.
"""

from __future__ import annotations

import argparse
import asyncio
import sys

import httpx

from .config import PipelineConfig, read_config_file, write_config_file
from .errors import ConfigError, DataError

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2

# explicit flags for the optimization stage, as advertised in the docs;
# everything else is reachable through --set section.key=value
FLAG_TO_KEY = {
    "p1": "sgm.p1",
    "p2": "sgm.p2",
    "tau_so": "sgm.tau_so",
    "paths": "sgm.paths",
    "cbca_tau": "cbca.tau",
    "cbca_l": "cbca.l_max",
    "cbca_iters_pre": "cbca.iterations_pre",
    "cbca_iters_post": "cbca.iterations_post",
    "d_max": "d_max",
    "seed": "seed",
}


class Parser(argparse.ArgumentParser):
    # argparse exits 2 on usage errors by default; the contract says 1
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _add_config_args(p):
    p.add_argument("--config", help="key=value config file")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override a single config key (repeatable)")
    p.add_argument("--dump-config", metavar="PATH",
                   help="write the effective configuration and continue")
    p.add_argument("--seed", type=int, help="seed for all randomness")
    p.add_argument("--d-max", type=int, help="maximum disparity")
    for flag in ("--p1", "--p2", "--tau-so", "--cbca-tau"):
        p.add_argument(flag, type=float)
    for flag in ("--paths", "--cbca-l", "--cbca-iters-pre", "--cbca-iters-post"):
        p.add_argument(flag, type=int)


def _add_transport_args(p):
    p.add_argument("--server", metavar="URL",
                   help="send the request to a running service instead of "
                        "executing in-process")
    p.add_argument("--threads", type=int, default=1,
                   help="worker threads for training")


def collect_config(args) -> dict:
    """Merge config file, --set pairs, and explicit flags into overrides."""
    flat = {}
    if getattr(args, "config", None):
        try:
            flat.update(read_config_file(args.config))
        except OSError as e:
            raise ConfigError(f"cannot read config file: {e}")
    for item in getattr(args, "set", []):
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        flat[key.strip()] = value.strip()
    for attr, key in FLAG_TO_KEY.items():
        value = getattr(args, attr, None)
        if value is not None:
            flat[key] = str(value)
    # fail fast on typos, and honor --dump-config
    config = PipelineConfig.from_flat(flat)
    if getattr(args, "dump_config", None):
        write_config_file(config, args.dump_config)
        print(f"config written to {args.dump_config}")
    return flat


def call_service(args, path, payload):
    """POST a request either in-process or to --server; map errors to exits."""
    server = getattr(args, "server", None)
    if server:
        try:
            resp = httpx.post(server.rstrip("/") + path, json=payload,
                              timeout=3600.0)
        except httpx.HTTPError as e:
            print(f"error: cannot reach {server}: {e}", file=sys.stderr)
            raise SystemExit(EXIT_DATA)
    else:
        from .service.app import create_app

        async def go():
            transport = httpx.ASGITransport(app=create_app())
            async with httpx.AsyncClient(transport=transport,
                                         base_url="http://cbmv.invalid",
                                         timeout=None) as client:
                return await client.post(path, json=payload)

        resp = asyncio.run(go())
    if resp.status_code == 200:
        return resp.json()
    try:
        detail = resp.json().get("detail", resp.text)
    except ValueError:
        detail = resp.text
    print(f"error: {detail}", file=sys.stderr)
    raise SystemExit(EXIT_USAGE if resp.status_code == 422 else EXIT_DATA)


def parse_rect(text):
    parts = text.split(",")
    if len(parts) != 5:
        raise ConfigError(
            f"--rect expects x0,y0,width,height,disparity, got {text!r}")
    try:
        x0, y0, w, h, d = (int(p) for p in parts)
    except ValueError:
        raise ConfigError(f"--rect components must be integers: {text!r}")
    return {"x0": x0, "y0": y0, "width": w, "height": h, "disparity": d}


def cmd_synth(args):
    payload = {
        "out_dir": args.out, "prefix": args.prefix,
        "width": args.width, "height": args.height,
        "d_max": args.d_max if args.d_max is not None else 16,
        "d_bg": args.d_bg,
        "rects": [parse_rect(r) for r in args.rect],
        "noise_sigma": args.noise_sigma, "gain": args.gain,
        "seed": args.seed if args.seed is not None else 0,
    }
    out = call_service(args, "/synth", payload)
    for key in ("left", "right", "gt", "occlusion"):
        print(f"{key}: {out[key]}")
    return EXIT_OK


def cmd_train(args):
    if len(args.files) % 3 != 0:
        raise ConfigError("training files must come in left right gt triples")
    pairs = [
        {"left": args.files[i], "right": args.files[i + 1], "gt": args.files[i + 2]}
        for i in range(0, len(args.files), 3)
    ]
    payload = {"pairs": pairs, "model_out": args.model_out,
               "config": collect_config(args), "threads": args.threads}
    out = call_service(args, "/train", payload)
    s = out["summary"]
    print(f"model written to {out['model_path']}")
    print(f"pairs: {s['n_pairs']}  samples: {s['n_samples']} "
          f"({s['n_positive']} positive, {s['n_negative']} negative, "
          f"1:{s['negatives_per_positive']:.2f})")
    print(f"training accuracy: {s['training_accuracy']:.4f}")
    return EXIT_OK


def cmd_predict(args):
    payload = {
        "left": args.left, "right": args.right, "model": args.model,
        "out_prefix": args.out, "config": collect_config(args),
        "skip_optimization": args.skip_optimization,
        "dump_cbmv": args.dump_cbmv, "dump_stages": args.dump_stages,
    }
    out = call_service(args, "/predict", payload)
    print(f"disparity written to {out['pfm']} and {out['png']}")
    if out.get("cbmv_dump"):
        print(f"matching volume dumped to {out['cbmv_dump']}")
    if out.get("stages_dir"):
        print(f"intermediate maps in {out['stages_dir']}")
    return EXIT_OK


def cmd_eval(args):
    if not args.mask:
        print("note: no occlusion mask supplied; evaluating all labelled pixels",
              file=sys.stderr)
    payload = {"pred": args.pred, "gt": args.gt, "mask": args.mask}
    out = call_service(args, "/eval", payload)
    print(out["text"])
    print()
    print(out["block"])
    return EXIT_OK


def cmd_features(args):
    payload = {"left": args.left, "right": args.right, "out": args.out,
               "config": collect_config(args)}
    out = call_service(args, "/features", payload)
    print(f"features written to {out['features']} "
          f"({out['height']}x{out['width']}, d_max {out['d_max']})")
    return EXIT_OK


def cmd_serve(args):
    import uvicorn

    from .service.app import create_app

    uvicorn.run(create_app(), host=args.host, port=args.port)
    return EXIT_OK


def build_parser():
    parser = Parser(prog="cbmv",
                    description="stereo disparity estimation by classifier-"
                                "fused matching volumes")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic stereo pair")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--prefix", default="pair")
    p.add_argument("--width", type=int, default=160)
    p.add_argument("--height", type=int, default=120)
    p.add_argument("--d-max", type=int, default=None)
    p.add_argument("--d-bg", type=int, default=0)
    p.add_argument("--rect", action="append", default=[],
                   metavar="X0,Y0,W,H,D", help="foreground rectangle (repeatable)")
    p.add_argument("--noise-sigma", type=float, default=0.0)
    p.add_argument("--gain", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=None)
    _add_transport_args(p)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train the fusion forest")
    p.add_argument("files", nargs="+", metavar="LEFT RIGHT GT",
                   help="image/image/ground-truth triples")
    p.add_argument("--model-out", required=True)
    _add_config_args(p)
    _add_transport_args(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="compute a disparity map")
    p.add_argument("left")
    p.add_argument("right")
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True, help="output path prefix")
    p.add_argument("--skip-optimization", action="store_true",
                   help="raw per-pixel argmin of the fused volume")
    p.add_argument("--dump-cbmv", metavar="PATH",
                   help="also dump the fused matching volume")
    p.add_argument("--dump-stages", metavar="DIR",
                   help="write every intermediate map")
    _add_config_args(p)
    _add_transport_args(p)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("eval", help="score a disparity map against ground truth")
    p.add_argument("pred")
    p.add_argument("gt")
    p.add_argument("--mask", help="occlusion mask for non-occluded scoring")
    _add_transport_args(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("features", help="dump the confidence feature volume")
    p.add_argument("left")
    p.add_argument("right")
    p.add_argument("--out", required=True)
    _add_config_args(p)
    _add_transport_args(p)
    p.set_defaults(func=cmd_features)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
