"""Headless driver: train and generate locally, or serve the REST API.

Exit codes: 0 success, 1 internal error, 2 user error (bad inputs,
failed preconditions). ``--json`` switches stdout to a single JSON
document for scripting.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .errors import PortraitForgeError, UserCountMismatch, UserNotTrained
from .service.config import DEFAULT_PORT, load_config

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_USER = 2


def _emit(args, payload: dict, human: str) -> None:
    if args.json:
        print(json.dumps(payload, indent=2, sort_keys=True))
    else:
        print(human)


def _fail(args, code: int, message: str) -> int:
    if args.json:
        print(json.dumps({"error": message}, sort_keys=True))
    print(f"error: {message}", file=sys.stderr)
    return code


def cmd_train(args) -> int:
    from .backend import make_backend
    from .runs import run_training
    from .training import MIN_TRAINING_IMAGES, TrainingConfig

    image_dir = Path(args.images)
    files = sorted(
        p for p in image_dir.glob("*")
        if p.suffix.lower() in (".png", ".jpg", ".jpeg")
    ) if image_dir.is_dir() else []
    if not files:
        return _fail(args, EXIT_USER, f"no decodable images under {image_dir}")
    if len(files) < MIN_TRAINING_IMAGES and not args.force:
        return _fail(
            args, EXIT_USER,
            f"found {len(files)} images; training expects at least "
            f"{MIN_TRAINING_IMAGES} (5 to 20), pass --force to override")

    try:
        backend = make_backend(args.backend)
    except ValueError as exc:
        return _fail(args, EXIT_INTERNAL, str(exc))

    user_dir = Path(args.data_dir) / "users" / args.user
    raw = user_dir / "raw"
    raw.mkdir(parents=True, exist_ok=True)
    existing = len(list(raw.glob("*.png")))
    from .pngio import load_image, save_png

    for i, src in enumerate(files):
        save_png(load_image(src), raw / f"{existing + i + 1:04d}.png")

    cfg = TrainingConfig(user_id=args.user, stages=args.stages,
                         allow_any_count=args.force)
    try:
        result = run_training(user_dir, cfg, backend=backend)
    except PortraitForgeError as exc:
        return _fail(args, EXIT_USER, str(exc))
    except ValueError as exc:
        return _fail(args, EXIT_USER, str(exc))

    _emit(args, {
        "user": args.user,
        "report": str(result.report_path),
        "face_id": str(result.face_id_path),
        "best_score": result.best_score,
        "processed": result.processed_count,
    }, f"report: {result.report_path}\nbest face-id score: {result.best_score:.4f}")
    return EXIT_OK


def cmd_generate(args) -> int:
    from .backend import make_backend
    from .inference import GenerationOptions, generate_group, generate_portrait
    from .pngio import load_image, save_png
    from .runs import load_user_bundle

    try:
        backend = make_backend(args.backend)
    except ValueError as exc:
        return _fail(args, EXIT_INTERNAL, str(exc))

    template_path = Path(args.template)
    if not template_path.is_file():
        return _fail(args, EXIT_USER, f"template not found: {template_path}")
    template = load_image(template_path)

    try:
        bundles = [
            load_user_bundle(Path(args.data_dir) / "users" / uid)
            for uid in args.user
        ]
    except UserNotTrained as exc:
        return _fail(args, EXIT_USER, str(exc))

    opts = GenerationOptions(
        seed=args.seed,
        mouth_refine=not args.no_mouth_refine,
        first_strength=args.strength1,
        second_strength=args.strength2,
        first_steps=args.steps1,
        second_steps=args.steps2,
    )
    try:
        if len(bundles) == 1:
            result = generate_portrait(template, bundles[0], opts, backend=backend,
                                       template_ref=str(template_path))
        else:
            result = generate_group(template, bundles, opts, backend=backend,
                                    template_ref=str(template_path))
    except UserCountMismatch as exc:
        return _fail(args, EXIT_USER, str(exc))
    except PortraitForgeError as exc:
        return _fail(args, EXIT_USER, str(exc))

    out_path = Path(args.out)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    save_png(result.image, out_path)
    prov_path = out_path.with_suffix(".provenance.json")
    prov_path.write_text(json.dumps(result.provenance, indent=2, sort_keys=True) + "\n")
    _emit(args, {"out": str(out_path), "provenance": str(prov_path)},
          f"wrote {out_path}\nprovenance: {prov_path}")
    return EXIT_OK


def cmd_serve(args) -> int:
    import socket

    import uvicorn

    from .service.app import create_app
    from .service.config import ServiceConfig

    base = load_config(args.config) if args.config else load_config()
    config = ServiceConfig(
        data_dir=args.data_dir or base.data_dir,
        port=args.port if args.port is not None else base.port,
        backend=args.backend or base.backend,
        workers=base.workers,
        api_token=base.api_token,
        ui_dir=base.ui_dir,
        adapters=base.adapters,
    )
    app = create_app(config)

    sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
    try:
        sock.bind((args.host, config.port))
    except OSError as exc:
        print(f"error: cannot bind port {config.port}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    bound_port = sock.getsockname()[1]
    print(f"portraitforge serving on http://{args.host}:{bound_port}", flush=True)

    server = uvicorn.Server(uvicorn.Config(app, log_level="warning"))
    server.run(sockets=[sock])
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="portraitforge",
        description="identity-preserving portrait generation studio",
    )
    parser.add_argument("--json", action="store_true",
                        help="machine-readable output: one JSON document on stdout")
    sub = parser.add_subparsers(dest="command", required=True)

    env = os.environ
    default_data = env.get("EP_DATA_DIR", "data")
    default_backend = env.get("EP_BACKEND", "mock")

    p_train = sub.add_parser("train", help="train a user model from a photo directory")
    p_train.add_argument("--user", required=True)
    p_train.add_argument("--images", required=True, help="directory of 5-20 photos")
    p_train.add_argument("--stages", type=int, default=4)
    p_train.add_argument("--data-dir", default=default_data)
    p_train.add_argument("--backend", default=default_backend)
    p_train.add_argument("--force", action="store_true",
                         help="train outside the 5-20 image range")
    p_train.set_defaults(fn=cmd_train)

    p_gen = sub.add_parser("generate", help="generate a portrait from a template")
    p_gen.add_argument("--template", required=True)
    p_gen.add_argument("--user", action="append", required=True,
                       help="trained user id; repeat for group templates "
                            "(order = left-to-right face assignment)")
    p_gen.add_argument("--seed", type=int, default=0)
    p_gen.add_argument("--out", default="portrait.png")
    p_gen.add_argument("--data-dir", default=default_data)
    p_gen.add_argument("--backend", default=default_backend)
    p_gen.add_argument("--strength1", type=float, default=0.7)
    p_gen.add_argument("--strength2", type=float, default=0.3)
    p_gen.add_argument("--steps1", type=int, default=30)
    p_gen.add_argument("--steps2", type=int, default=20)
    p_gen.add_argument("--no-mouth-refine", action="store_true")
    p_gen.set_defaults(fn=cmd_generate)

    p_serve = sub.add_parser("serve", help="run the REST service")
    p_serve.add_argument("--port", type=int, default=None,
                         help=f"0 binds an ephemeral port (default {DEFAULT_PORT})")
    p_serve.add_argument("--host", default="127.0.0.1")
    p_serve.add_argument("--data-dir", default=None)
    p_serve.add_argument("--backend", default=None)
    p_serve.add_argument("--config", default=None, help="key=value config file")
    p_serve.set_defaults(fn=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except KeyboardInterrupt:
        return EXIT_OK
    except Exception as exc:  # internal failure contract
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
