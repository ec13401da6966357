"""Command-line surface tying the pipeline together.

Exit codes: 0 success, 1 runtime failure, 2 usage error.  The thread count of
the numeric backend can be capped with the TRIDEPTH_THREADS environment
variable (applied before numpy loads).
"""

from __future__ import annotations

import argparse
import os
import sys


def _apply_thread_env():
    threads = os.environ.get("TRIDEPTH_THREADS")
    if threads:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS",
                    "MKL_NUM_THREADS"):
            os.environ.setdefault(var, threads)


_apply_thread_env()


def _heatmap(disp):
    """8-bit jet-style rendering of a disparity map, fixed ramp."""
    import numpy as np
    d = np.asarray(disp, dtype=np.float32)
    lo, hi = 0.0, max(float(d.max()), 1e-6)
    t = np.clip((d - lo) / (hi - lo), 0.0, 1.0)
    r = np.clip(1.5 - np.abs(4 * t - 3), 0, 1)
    g = np.clip(1.5 - np.abs(4 * t - 2), 0, 1)
    b = np.clip(1.5 - np.abs(4 * t - 1), 0, 1)
    return np.stack([r, g, b])


def _cmd_gen_data(args):
    from .config import echo_config, load_config
    from .synthdata import generate_dataset

    cfg = load_config(args.config)
    os.makedirs(args.out, exist_ok=True)
    echo_config(cfg, os.path.join(args.out, "resolved_config.ini"))
    generate_dataset(cfg.scene, args.count, args.seed, args.out)
    print(f"wrote {args.count} scenes to {args.out}")
    return 0


def _pairs_from_scenes(samples):
    from .synthdata import to_binocular
    pairs = []
    for sample in samples:
        pairs.append(to_binocular(sample, "lc"))
        pairs.append(to_binocular(sample, "cr"))
    return pairs


def _cmd_train(args):
    from .config import echo_config, load_config
    from .model import init_network
    from .synthdata import load_dataset
    from .trainer import train

    cfg = load_config(args.config)
    samples = load_dataset(args.data)
    h, w = samples[0].ic.shape[1:]
    if (cfg.network.height, cfg.network.width) != (h, w):
        cfg.network.height, cfg.network.width = h, w
    os.makedirs(args.out, exist_ok=True)
    echo_config(cfg, os.path.join(args.out, "resolved_config.ini"))
    params = init_network(cfg.network)
    train(params, _pairs_from_scenes(samples), cfg.train, cfg.loss,
          out_dir=args.out)
    print(f"training finished; checkpoint in {args.out}/checkpoint_final")
    return 0


def _cmd_eval(args):
    import csv

    from .evaluate import evaluate_dataset
    from .metrics import MetricsRecord, aggregate
    from .model import load_checkpoint
    from .synthdata import load_dataset

    params = load_checkpoint(args.checkpoint)
    samples = load_dataset(args.data)
    pp = args.pp == "on"
    records, forwards = evaluate_dataset(params, samples, cap=args.cap, pp=pp)
    os.makedirs(os.path.dirname(args.out) or ".", exist_ok=True)
    with open(args.out, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["name"] + MetricsRecord.columns() + ["forwards"])
        for i, (rec, n) in enumerate(zip(records, forwards)):
            writer.writerow([f"scene_{i:06d}"] + rec.row() + [n])
        agg = aggregate(records)
        writer.writerow(["aggregate"] + agg.row() + [sum(forwards)])
    print(f"abs_rel {agg.abs_rel:.4f}  rmse {agg.rmse:.3f}  "
          f"d1_all {agg.d1_all:.2f}  ({len(records)} scenes, cap {args.cap}m)")
    return 0


def _cmd_synthesize(args):
    from . import imageio
    from .evaluate import predict_center_map
    from .model import forward, load_checkpoint
    from .viewsynth import synthesize_views

    params = load_checkpoint(args.checkpoint)
    image = imageio.read_ppm(args.image)
    outputs = forward(params, image[None])
    view_l, view_r = synthesize_views(image, outputs.level0("lc"),
                                      outputs.level0("rc"))
    d_c, d_cl, d_cr, _ = predict_center_map(params, image)

    os.makedirs(args.out, exist_ok=True)
    imageio.write_ppm(os.path.join(args.out, "view_l.ppm"), view_l)
    imageio.write_ppm(os.path.join(args.out, "view_r.ppm"), view_r)
    for name, dmap in (("d_cl", d_cl), ("d_c", d_c), ("d_cr", d_cr)):
        values = dmap.values.data[0, 0]
        imageio.write_pfm(os.path.join(args.out, f"{name}.pfm"), values)
        imageio.write_ppm(os.path.join(args.out, f"{name}_heat.ppm"),
                          _heatmap(values))
    print(f"wrote synthesized views and disparity maps to {args.out}")
    return 0


def _cmd_sgm(args):
    from . import imageio
    from .viewsynth import SgmParams, sgm

    def read(path):
        return imageio.read_pgm(path) if path.endswith(".pgm") else \
            imageio.read_ppm(path)

    disp = sgm(read(args.left), read(args.right),
               SgmParams(max_disparity=args.max_disp))
    os.makedirs(os.path.dirname(args.out) or ".", exist_ok=True)
    imageio.write_pfm(args.out, disp)
    root, _ = os.path.splitext(args.out)
    imageio.write_ppm(root + "_heat.ppm", _heatmap(disp))
    print(f"wrote disparity to {args.out}")
    return 0


def _cmd_gradcheck(args):
    from .gradcheck import run_gradcheck

    report = run_gradcheck(precision=args.precision, seed=args.seed)
    for line in report.lines:
        print(line)
    print("PASS" if report.passed else "FAIL")
    return 0 if report.passed else 1


def build_parser():
    parser = argparse.ArgumentParser(
        prog="tridepth",
        description="desk-scale trinocular unsupervised depth pipeline")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a synthetic dataset")
    p.add_argument("--config", default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_gen_data)

    p = sub.add_parser("train", help="train on a generated dataset")
    p.add_argument("--config", default=None)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--cap", type=float, choices=[80.0, 50.0], default=80.0)
    p.add_argument("--pp", choices=["on", "off"], default="off")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("synthesize", help="synthesize side views from one image")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--image", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_synthesize)

    p = sub.add_parser("sgm", help="run semi-global matching on a stereo pair")
    p.add_argument("--left", required=True)
    p.add_argument("--right", required=True)
    p.add_argument("--max-disp", type=int, default=32)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_sgm)

    p = sub.add_parser("gradcheck", help="finite-difference gradient suite")
    p.add_argument("--precision", type=int, choices=[32, 64], default=64)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_gradcheck)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:  # one-line diagnostic, non-zero exit
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
