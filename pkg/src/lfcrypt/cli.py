"""Command-line front end.

Exit codes: 0 success, 2 usage, 3 configuration or sampling, 4 file I/O,
5 numerical failure.
"""

import argparse
import json
import logging
import sys

import numpy as np

from . import __version__
from .analysis import plane_correlations, run_attack_suite
from .digitize import digitize, export_png, load_planes, reassemble, save_planes
from .errors import ConfigurationError, LightFieldError, NumericalError
from .forward import encrypt
from .inverse import DeconvSettings, decrypt
from .io import load_image, load_mask, load_volume, save_image, save_volume
from .key import build_psf_key, default_workers, load_key
from .runconfig import RunConfig
from .scenes import SCENES, make_scene

EXIT_OK, EXIT_USAGE, EXIT_CONFIG, EXIT_IO, EXIT_NUMERICAL = 0, 2, 3, 4, 5

log = logging.getLogger("lfcrypt")


def _positive_int(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be at least 1, got {v}")
    return v


def _fraction(text):
    v = float(text)
    if not 0 <= v < 1:
        raise argparse.ArgumentTypeError(f"must be in [0, 1), got {v}")
    return v


def _assignment(text):
    if "=" not in text:
        raise argparse.ArgumentTypeError(f"expected key=value, got {text!r}")
    k, v = text.split("=", 1)
    return k.strip(), v.strip()


def load_run_config(args):
    cfg = RunConfig.load(args.config) if getattr(args, "config", None) else RunConfig()
    overrides = list(getattr(args, "set", None) or [])
    if getattr(args, "pixel", None) is not None:
        overrides += [("optics.mask_pixel", args.pixel), ("optics.sensor_pixel", args.pixel)]
    if getattr(args, "seed", None) is not None:
        overrides.append(("mask.seed", str(args.seed)))
    if overrides:
        cfg = RunConfig.from_items(overrides, cfg)
    return cfg.validate()


def _key_for(cfg, path=None):
    return build_psf_key(cfg.optics, cfg.mask, cfg.volume.z_planes(), cfg.volume.pitch,
                         workers=default_workers(), path=path)


# --- commands ---------------------------------------------------------------


def cmd_keygen(args):
    cfg = load_run_config(args)
    key = _key_for(cfg)
    key.save(args.out)
    print(key.checksum)


def cmd_encrypt(args):
    volume = load_volume(args.volume)
    key = load_key(args.key)
    sensor = (args.sensor, args.sensor) if args.sensor else None
    image = encrypt(volume, key, bits=args.bits, sensor_shape=sensor)
    save_image(image, args.out)


def cmd_decrypt(args):
    image = load_image(args.image)
    key = load_key(args.key)
    if args.occlusion_mask:
        valid = load_mask(args.occlusion_mask, image.shape) & image.valid()
        image.values = np.where(valid, image.values, 0.0)
        image.mask = valid
    settings = DeconvSettings(iterations=args.iterations, threshold_fraction=args.threshold,
                              mask_occluded=not args.unmasked)
    if args.lateral:
        shape = (len(key.z_planes), args.lateral, args.lateral)
    else:
        shape = tuple(image.metadata.get("volume_shape") or (len(key.z_planes),) + image.shape)
    diag = open(args.diagnostics, "w") if args.diagnostics else None
    try:
        volume = decrypt(_unscaled(image), key, settings, shape, diagnostics=diag)
    finally:
        if diag:
            diag.close()
    if not np.all(np.isfinite(volume.values)):
        raise NumericalError("deconvolution produced non-finite values")
    save_volume(volume, args.out)


def _unscaled(image):
    """Undo camera quantization so reconstructions keep physical units."""
    if "scale" not in image.metadata:
        return image
    meta = {k: v for k, v in image.metadata.items() if k not in ("scale", "bits")}
    return type(image)(image.rescaled(), image.pixel_pitch, image.mask, meta)


def cmd_digitize(args):
    planes = digitize(load_image(args.image), args.levels)
    save_planes(planes, args.out)
    if args.png:
        for p in export_png(planes, args.png):
            print(p)


def cmd_reassemble(args):
    planes = load_planes(args.planes)
    save_image(reassemble(planes), args.out)


def cmd_demo(args):
    cfg = load_run_config(args)
    save_volume(_scene(args.scene, cfg), args.out)


def _scene(name, cfg):
    v = cfg.volume
    return make_scene(name, lateral=v.lateral, pitch=v.pitch, z_planes=v.z_planes())


def cmd_attack(args):
    cfg = load_run_config(args)
    scene = _scene(args.scene, cfg)
    key = load_key(args.key) if args.key else _key_for(cfg)
    report = run_attack_suite(scene, key, cfg.decrypt, tuple(args.occlusion), tuple(args.perturbation),
                              seed=args.attack_seed, sensor_shape=cfg.sensor_shape,
                              keep_reconstructions=False)
    out = open(args.out, "w") if args.out else sys.stdout
    try:
        report.write(out)
    finally:
        if args.out:
            out.close()


def cmd_correlate(args):
    ref, rec = load_volume(args.reference), load_volume(args.reconstruction)
    if ref.shape != rec.shape:
        raise ConfigurationError(f"volume shapes differ: {ref.shape} vs {rec.shape}")
    table = plane_correlations(ref, rec, args.max_shift)
    for iz, r in table.items():
        print(json.dumps({"plane": iz, "z": ref.axial_positions[iz], **r.to_dict()}, sort_keys=True))


# --- parser -----------------------------------------------------------------


def build_parser():
    p = argparse.ArgumentParser(prog="lfcrypt", description="Volumetric light-field encryption.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("--print-defaults", action="store_true",
                   help="print the default configuration file and exit")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command")

    def with_config(sp):
        sp.add_argument("--config", help="key=value configuration file")
        sp.add_argument("--set", action="append", type=_assignment, metavar="KEY=VALUE",
                        help="override one configuration entry (repeatable)")
        sp.add_argument("--pixel", help="mask and sensor pixel size in meters")

    sp = sub.add_parser("keygen", help="build a PSF key")
    with_config(sp)
    sp.add_argument("--seed", type=int, help="mask seed (overrides mask.seed)")
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_keygen)

    sp = sub.add_parser("encrypt", help="volume -> light-field image")
    sp.add_argument("volume")
    sp.add_argument("--key", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--bits", type=_positive_int, help="quantize like a camera of this bit depth")
    sp.add_argument("--sensor", type=_positive_int, help="sensor side in pixels")
    sp.set_defaults(func=cmd_encrypt)

    sp = sub.add_parser("decrypt", help="light-field image -> volume")
    sp.add_argument("image")
    sp.add_argument("--key", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--iterations", type=_positive_int, default=DeconvSettings.iterations)
    sp.add_argument("--threshold", type=_fraction, default=0.0)
    sp.add_argument("--occlusion-mask", help="image whose nonzero pixels are blocked")
    sp.add_argument("--unmasked", action="store_true", help="treat blocked pixels as measured zeros")
    sp.add_argument("--lateral", type=_positive_int, help="volume side in voxels (default: image side)")
    sp.add_argument("--diagnostics", help="write per-iteration JSON lines here")
    sp.set_defaults(func=cmd_decrypt)

    sp = sub.add_parser("digitize", help="image -> N bit planes")
    sp.add_argument("image")
    sp.add_argument("--levels", type=_positive_int, required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--png", metavar="STEM", help="also write <STEM>_bit<i>.png per plane")
    sp.set_defaults(func=cmd_digitize)

    sp = sub.add_parser("reassemble", help="bit planes -> image")
    sp.add_argument("planes")
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_reassemble)

    sp = sub.add_parser("demo", help="write a built-in scene")
    with_config(sp)
    sp.add_argument("scene", choices=sorted(SCENES))
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_demo)

    sp = sub.add_parser("attack", help="run the occlusion and key-perturbation suite")
    with_config(sp)
    sp.add_argument("--seed", type=int, help="mask seed (overrides mask.seed)")
    sp.add_argument("--scene", choices=sorted(SCENES), default="sbu")
    sp.add_argument("--key", help="existing key file (default: build from the configuration)")
    sp.add_argument("--occlusion", type=_fraction, nargs="*", default=[0.25, 0.375])
    sp.add_argument("--perturbation", type=_fraction, nargs="*", default=[0.05])
    sp.add_argument("--attack-seed", type=int, default=0)
    sp.add_argument("--out", help="JSON-lines report (default: stdout)")
    sp.set_defaults(func=cmd_attack)

    sp = sub.add_parser("correlate", help="per-plane correlation of two volumes")
    sp.add_argument("reference")
    sp.add_argument("reconstruction")
    sp.add_argument("--max-shift", type=int)
    sp.set_defaults(func=cmd_correlate)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(message)s")
    if args.print_defaults:
        sys.stdout.write(RunConfig().dumps())
        return EXIT_OK
    if not args.command:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    try:
        args.func(args)
    except LightFieldError as exc:
        print(f"lfcrypt: {exc}", file=sys.stderr)
        return exc.exit_code
    except (FileNotFoundError, IsADirectoryError, PermissionError) as exc:
        print(f"lfcrypt: {exc}", file=sys.stderr)
        return EXIT_IO
    except (FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"lfcrypt: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
