"""Command line front-end: simulate, fingerprint, pairs, train, evaluate, match.

Exit codes: 0 success, 2 usage error, 3 data/format error, 4 configuration error.
"""

import argparse
import logging
import os
import sys

from . import fusion
from .distance import distance_pair
from .errors import ArgumentError, ConfigurationError, PrnuFuseError
from .evaluation import (DEFAULT_METHODS, FileSource, PipelineConfig, build_references,
                         check_roles, parse_conditions, run_grid, sample_references,
                         training_pairs)
from .io import (DevicePattern, Estimator, ModelPattern, Role, load_image, load_manifest,
                 load_pattern, save_pattern)
from .noiseprint import ExtractorConfig
from .residual import DenoiserConfig
from .simulator import SimConfig, generate_dataset

log = logging.getLogger("prnufuse")

EXIT_DATA = 3


class _Formatter(argparse.ArgumentDefaultsHelpFormatter):
    # keep hand-written defaults and skip "(default: None)" on required flags
    def _get_help_string(self, action):
        text = action.help or ""
        if "(default" in text or action.required:
            return text
        return super()._get_help_string(action)


def _common(p):
    p.add_argument("--threads", type=int, default=None,
                   help="worker threads (default: all available cores)")
    p.add_argument("--seed", type=int, default=0, help="seed for every random draw")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")


def _pipeline_flags(p):
    p.add_argument("--denoise-window", type=int, default=3, help="denoiser window (odd)")
    p.add_argument("--denoise-sigma2", type=float, default=9.0,
                   help="denoiser noise variance, luminance^2")
    p.add_argument("--period", type=int, default=8, help="surrogate extractor period")
    p.add_argument("--noiseprint-dir", default=None,
                   help="directory of external .plane noiseprints (default: surrogate)")
    p.add_argument("--estimator", choices=["avg", "ml"], default="avg",
                   help="PRNU estimator")
    p.add_argument("--postprocess", choices=["on", "off"], default="on",
                   help="zero-mean and DFT Wiener cleanup of device patterns")


def _pipeline_config(args, **extra):
    den = DenoiserConfig(args.denoise_window, args.denoise_sigma2)
    if args.noiseprint_dir:
        ext = ExtractorConfig("external", args.period, den, args.noiseprint_dir)
    else:
        ext = ExtractorConfig("surrogate", args.period, den)
    est = Estimator.MaximumLikelihood if args.estimator == "ml" else Estimator.Average
    return PipelineConfig(den, ext, est, args.postprocess == "on", _threads(args), **extra)


def _threads(args):
    t = args.threads if args.threads is not None else (os.cpu_count() or 1)
    if t < 1:
        raise ArgumentError("--threads must be >= 1")
    return t


def build_parser():
    parser = argparse.ArgumentParser(
        prog="prnufuse", formatter_class=_Formatter,
        description="Camera source identification by fusing PRNU and model fingerprints.")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("simulate", formatter_class=_Formatter,
                       help="write a synthetic camera dataset")
    d = SimConfig()
    p.add_argument("--models", type=int, default=d.n_models, help="camera models")
    p.add_argument("--devices-per-model", type=int, default=d.devices_per_model,
                   help="devices per model")
    p.add_argument("--images", type=int, default=d.images_per_device, help="images per device")
    p.add_argument("--size", type=int, default=d.image_size, help="square image side, pixels")
    p.add_argument("--prnu-strength", type=float, default=d.prnu_strength,
                   help="PRNU standard deviation")
    p.add_argument("--artifact-period", type=int, default=d.artifact_period,
                   help="model artifact period, pixels")
    p.add_argument("--artifact-strength", type=float, default=d.artifact_strength,
                   help="model artifact standard deviation, luminance")
    p.add_argument("--scene-smoothness", type=int, default=d.scene_smoothness,
                   help="scene blur radius, pixels")
    p.add_argument("--noise-sigma", type=float, default=d.sensor_noise_sigma,
                   help="sensor noise standard deviation, luminance")
    p.add_argument("--out-dir", required=True, help="output directory")
    _common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fingerprint", formatter_class=_Formatter,
                       help="estimate the reference patterns of one device")
    p.add_argument("--manifest", required=True, help="dataset manifest (JSON)")
    p.add_argument("--device", required=True, help="device id")
    p.add_argument("--n-ref", type=int, default=None,
                   help="reference images to draw (default: all reference-role images)")
    p.add_argument("--out", required=True, help="device pattern output (.pat)")
    p.add_argument("--model-out", default=None, help="model pattern output (.pat)")
    _pipeline_flags(p)
    _common(p)
    p.set_defaults(func=cmd_fingerprint)

    p = sub.add_parser("pairs", formatter_class=_Formatter,
                       help="write labelled training distance pairs as CSV")
    p.add_argument("--manifest", required=True, help="dataset manifest (JSON)")
    p.add_argument("--d", type=int, required=True, help="crop size, pixels")
    p.add_argument("--n-ref", type=int, required=True, help="reference images per device")
    p.add_argument("--out", required=True, help="CSV output: d_prnu,d_np,label")
    _pipeline_flags(p)
    _common(p)
    p.set_defaults(func=cmd_pairs)

    p = sub.add_parser("train", formatter_class=_Formatter, help="fit a fusion classifier")
    p.add_argument("--pairs-in", required=True, help="CSV of d_prnu,d_np,label")
    p.add_argument("--method", choices=sorted(fusion.METHODS), default="fld",
                   help="fusion strategy")
    p.add_argument("--out", required=True, help="model output (.fusm)")
    p.add_argument("--svm-lambda", type=float, default=1e-3, help="SVM regularization")
    p.add_argument("--svm-iters", type=int, default=2000, help="SVM iterations")
    p.add_argument("--mcd-starts", type=int, default=500, help="MCD random starts")
    p.add_argument("--mcd-alpha", type=float, default=0.5, help="MCD support fraction")
    _common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", formatter_class=_Formatter,
                       help="closed-set and open-set evaluation over a condition grid")
    p.add_argument("--manifest", required=True, help="dataset manifest (JSON)")
    p.add_argument("--conditions", default="64:1,64:10,256:10",
                   help="comma-separated d:N crop/reference-count pairs")
    p.add_argument("--repetitions", type=int, default=None,
                   help="repetitions per condition (default: 10 if N < 100 else 1)")
    p.add_argument("--methods", default=",".join(DEFAULT_METHODS),
                   help="comma-separated fusion methods")
    p.add_argument("--out-dir", required=True, help="report directory")
    p.add_argument("--svm-lambda", type=float, default=1e-3, help="SVM regularization")
    p.add_argument("--svm-iters", type=int, default=2000, help="SVM iterations")
    p.add_argument("--mcd-starts", type=int, default=500, help="MCD random starts")
    _pipeline_flags(p)
    _common(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("match", formatter_class=_Formatter,
                       help="rank candidate devices for one test image")
    p.add_argument("--image", required=True, help="test image (.pgm/.ppm/.plane)")
    p.add_argument("--device-patterns", nargs="*", default=[],
                   help="candidate device patterns (.pat)")
    p.add_argument("--model-patterns", nargs="*", default=[],
                   help="model patterns (.pat), matched to devices by model id")
    p.add_argument("--fusion-model", default=None,
                   help="trained fusion model (default: PRNU distance only)")
    p.add_argument("--d", type=int, required=True, help="crop size, pixels")
    p.add_argument("--denoise-window", type=int, default=3, help="denoiser window (odd)")
    p.add_argument("--denoise-sigma2", type=float, default=9.0,
                   help="denoiser noise variance, luminance^2")
    p.add_argument("--period", type=int, default=8, help="surrogate extractor period")
    p.add_argument("--noiseprint-dir", default=None,
                   help="directory of external .plane noiseprints (default: surrogate)")
    _common(p)
    p.set_defaults(func=cmd_match)
    return parser


# ---------------------------------------------------------------- commands

def cmd_simulate(args):
    cfg = SimConfig(args.models, args.devices_per_model, args.images, args.size,
                    args.prnu_strength, args.artifact_period, args.artifact_strength,
                    args.scene_smoothness, args.noise_sigma, args.seed)
    man = generate_dataset(cfg, args.out_dir, threads=_threads(args))
    print(f"wrote {len(man)} images to {args.out_dir}")


def cmd_fingerprint(args):
    man = load_manifest(args.manifest)
    groups = check_roles(man)
    if args.device not in groups:
        raise ConfigurationError(f"device {args.device!r} is not in {args.manifest}")
    pool = groups[args.device].get(Role.reference, [])
    if args.n_ref is None:
        recs = pool
    else:
        recs = sample_references({args.device: groups[args.device]}, args.n_ref, args.seed, 0)
        recs = recs[args.device]
    if not recs:
        raise ConfigurationError(f"device {args.device!r} has no reference-role images")
    k, r = build_references(FileSource(man), recs, _pipeline_config(args))
    save_pattern(k, args.out)
    if args.model_out:
        save_pattern(r, args.model_out)
    print(f"{args.device}: {k.n_images} images, {k.height}x{k.width}")


def cmd_pairs(args):
    man = load_manifest(args.manifest)
    x, y = training_pairs(FileSource(man), args.d, args.n_ref, args.seed,
                          _pipeline_config(args))
    fusion.write_pairs_csv(args.out, x, y)
    print(f"wrote {len(y)} pairs ({int(y.sum())} same-device) to {args.out}")


def cmd_train(args):
    x, y = fusion.read_pairs_csv(args.pairs_in)
    model = fusion.train(args.method, x, y, seed=args.seed, svm_lambda=args.svm_lambda,
                         svm_iters=args.svm_iters, mcd_starts=args.mcd_starts,
                         mcd_alpha=args.mcd_alpha)
    fusion.save_model(model, args.out)
    print(f"trained {model.name} on {len(y)} pairs")


def cmd_evaluate(args):
    man = load_manifest(args.manifest)
    conds = parse_conditions(args.conditions, args.repetitions)
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    cfg = _pipeline_config(args, svm_lambda=args.svm_lambda, svm_iters=args.svm_iters,
                           mcd_starts=args.mcd_starts)
    report = run_grid(FileSource(man), conds, methods, args.seed, cfg, keep_data=False,
                      progress=log.info)
    report.write(args.out_dir)
    sys.stdout.write(report.to_csv())


def _load_candidates(device_files, model_files):
    if not device_files:
        raise ArgumentError("match needs at least one --device-patterns file")
    devices = {}
    for path in device_files:
        p = load_pattern(path)
        if not isinstance(p, DevicePattern):
            raise ConfigurationError(f"{path} holds a model pattern, not a device pattern")
        if p.device_id in devices:
            raise ConfigurationError(f"device id {p.device_id!r} given more than once")
        devices[p.device_id] = p
    models = {}
    for path in model_files:
        p = load_pattern(path)
        if not isinstance(p, ModelPattern):
            raise ConfigurationError(f"{path} holds a device pattern, not a model pattern")
        if p.model_id in models:
            raise ConfigurationError(f"model id {p.model_id!r} given more than once")
        models[p.model_id] = p
    out = {}
    for dev, k in sorted(devices.items()):
        if k.model_id not in models:
            raise ConfigurationError(f"no model pattern for model {k.model_id!r} of {dev!r}")
        out[dev] = (k, models[k.model_id])
    return out


def cmd_match(args):
    cands = _load_candidates(args.device_patterns, args.model_patterns)
    image = load_image(args.image)
    model = (fusion.load_model(args.fusion_model) if args.fusion_model
             else fusion.FusionModel(fusion.FusionKind.PrnuOnly))
    den = DenoiserConfig(args.denoise_window, args.denoise_sigma2)
    ext = (ExtractorConfig("external", args.period, den, args.noiseprint_dir)
           if args.noiseprint_dir else ExtractorConfig("surrogate", args.period, den))
    rows = []
    for dev, (k, r) in cands.items():
        pair = distance_pair(image, k, r, args.d, den, ext)
        rows.append((fusion.score(model, pair), dev, k.model_id, pair.d_prnu, pair.d_np))
    # stable: equal scores keep device-id order
    rows.sort(key=lambda t: -t[0])
    print("rank\tdevice\tmodel\td_prnu\td_np\tscore")
    for i, (s, dev, mod, dp, dn) in enumerate(rows, 1):
        print(f"{i}\t{dev}\t{mod}\t{dp:.6f}\t{dn:.6f}\t{s:.6f}")


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        args.func(args)
    except PrnuFuseError as exc:
        print(f"prnufuse {args.command}: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"prnufuse {args.command}: {exc}", file=sys.stderr)
        return EXIT_DATA
    return 0


if __name__ == "__main__":
    sys.exit(main())
