"""Command-line interface: ``metricprior <command> ...``.

Exit codes: 0 success, 2 invalid input, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

import numpy as np

from . import apps
from .dataset import gen_synthetic_family, load_directory
from .errors import NumericalError, ValidationError
from .geodesics import DistanceMatrix, GeodesicConfig, heat_distance_all, heat_distance_single
from .mesh import TriMesh, load_off, save_off
from .model import decode, encode, load_checkpoint
from .trainer import TrainConfig, format_config, load_config, train

log = logging.getLogger("metricprior")


def _write_rows(rows, out=None, header=None):
    fh = open(out, "w", newline="", encoding="utf-8") if out else sys.stdout
    try:
        w = csv.writer(fh)
        if header:
            w.writerow(header)
        for row in rows:
            w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in row])
    finally:
        if out:
            fh.close()


def _read_matrix(path) -> np.ndarray:
    try:
        A = np.loadtxt(path, delimiter=",", ndmin=2)
    except ValueError as exc:
        raise ValidationError(f"{path}: not a numeric CSV ({exc})") from None
    return A


def _read_code(path) -> np.ndarray:
    return _read_matrix(path).reshape(-1)


def _read_points(path) -> np.ndarray:
    path = Path(path)
    if path.suffix.lower() == ".off":
        return load_off(path).vertices
    P = _read_matrix(path)
    if P.shape[1] != 3:
        raise ValidationError(f"{path}: expected 3 columns (x, y, z), got {P.shape[1]}")
    return P


def _config(args) -> TrainConfig:
    cfg = load_config(args.config) if getattr(args, "config", None) else TrainConfig()
    if getattr(args, "seed", None) is not None:
        cfg = TrainConfig(**{**cfg.__dict__, "seed": args.seed})
    return cfg


def _data(args, cfg: TrainConfig | None = None):
    geo = GeodesicConfig(t=cfg.geodesic_t) if cfg is not None else GeodesicConfig()
    if args.data == "synthetic":
        seed = args.seed if args.seed is not None else 0
        return gen_synthetic_family(args.subjects, args.poses, args.resolution, seed, geo_cfg=geo)
    return load_directory(args.data, geo)


def _ckpt(args):
    if not args.ckpt:
        raise ValidationError("--ckpt is required for this command")
    return load_checkpoint(args.ckpt)


# --- commands -------------------------------------------------------------------------

def cmd_gen_data(args):
    records = gen_synthetic_family(args.subjects, args.poses, args.resolution, args.seed or 0)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for r in records:
        save_off(r.mesh, out / f"{r.subject_id}_{r.pose_id}.off")
    print(f"wrote {len(records)} meshes to {out}")


def cmd_train(args):
    cfg = _config(args)
    records = _data(args, cfg)
    result = train(records, cfg, args.out)
    last = result.trace[-1][1]
    print(f"trained {cfg.total_iters} iterations; final loss {last.total:.6g}; checkpoint in {args.out}")


def cmd_encode(args):
    params = _ckpt(args)
    mu, logvar = encode(params, load_off(args.mesh).vertices)
    rows = [mu] if not args.logvar else [mu, logvar]
    _write_rows(rows, args.out)


def cmd_decode(args):
    params = _ckpt(args)
    template = load_off(args.template)
    X = decode(params, _read_code(args.code))
    save_off(TriMesh(X, template.faces), args.out)


def cmd_interpolate(args):
    params = _ckpt(args)
    meshes = apps.latent_interpolate(params, load_off(args.a), load_off(args.b), args.steps)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for k, m in enumerate(meshes):
        save_off(m, out / f"interp_{k:03d}.off")
    print(f"wrote {len(meshes)} meshes to {out}")


def cmd_swap(args):
    params = _ckpt(args)
    save_off(apps.latent_swap(params, load_off(args.intrinsic), load_off(args.extrinsic)), args.out)


def cmd_analogy(args):
    params = _ckpt(args)
    meshes = [load_off(p) for p in (args.a, args.b, args.c)]
    codes = [apps.encode_mean(params, m) for m in meshes]
    save_off(apps.latent_analogy(params, *codes, meshes[0].faces), args.out)


def cmd_complete(args):
    params = _ckpt(args)
    records = _data(args)
    rng = np.random.default_rng(args.seed or 0)
    res = apps.complete_partial(params, _read_points(args.partial), records, args.iters, rng)
    save_off(res.mesh, args.out)
    print(f"completion objective {res.objective:.6g}")


def cmd_fit_metric(args):
    init = load_off(args.init)
    if Path(args.target).suffix.lower() == ".off":
        target = heat_distance_all(load_off(args.target))
    else:
        target = DistanceMatrix(_read_matrix(args.target), "geodesic")
    res = apps.fit_to_metric(init, target, args.iters, args.lr)
    save_off(res.mesh, args.out)
    print(f"objective {res.initial_objective:.6g} -> {res.objective:.6g}")


def cmd_geodesic(args):
    mesh = load_off(args.mesh)
    cfg = GeodesicConfig(t=args.t)
    if args.all:
        D = heat_distance_all(mesh, cfg).values
        _write_rows(D, args.out)
        return
    d = heat_distance_single(mesh, args.source, cfg)
    _write_rows(([k, v] for k, v in enumerate(d)), args.out, header=["vertex", "distance"])
    if args.colored:
        save_off(mesh, args.colored, vertex_scalar=d)


def cmd_eval(args):
    params = _ckpt(args)
    report = apps.evaluate(params, _data(args))
    rows = [
        ["interpolation_error", report.interpolation_error],
        ["interpolation_error_decoded", report.interpolation_error_decoded],
        ["disentanglement_error", report.disentanglement_error],
    ]
    _write_rows(rows, args.out, header=["metric", "value"])


def cmd_check_grad(args):
    from .checks import run_suite

    results = run_suite(range(args.seeds))
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'} {r.name} seed={r.seed} deviation={r.deviation:.3e}")
    if not all(r.passed for r in results):
        raise NumericalError("gradient check failed")


def cmd_show_config(args):
    print(format_config(_config(args)), end="")


# --- parser ---------------------------------------------------------------------------

def _add_data_args(p):
    p.add_argument("--data", default="synthetic", help="'synthetic' or a directory of <subject>_<pose>.off")
    p.add_argument("--subjects", type=int, default=2)
    p.add_argument("--poses", type=int, default=5)
    p.add_argument("--resolution", type=int, default=12)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--config", help="training config file (key = value lines)")
    common.add_argument("--ckpt", help="model checkpoint")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="metricprior", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_):
        p = sub.add_parser(name, parents=[common], help=help_)
        p.set_defaults(func=func)
        return p

    p = add("gen-data", cmd_gen_data, "write the synthetic tube family as OFF files")
    p.add_argument("--out", required=True)
    _add_data_args(p)

    p = add("train", cmd_train, "train a model")
    p.add_argument("--out", required=True, help="output directory")
    _add_data_args(p)

    p = add("encode", cmd_encode, "print the latent mean of a mesh as CSV")
    p.add_argument("mesh")
    p.add_argument("--out")
    p.add_argument("--logvar", action="store_true", help="also emit the log-variance row")

    p = add("decode", cmd_decode, "decode a latent code (CSV) to a mesh")
    p.add_argument("code")
    p.add_argument("--template", required=True, help="mesh providing the faces")
    p.add_argument("--out", required=True)

    p = add("interpolate", cmd_interpolate, "latent interpolation between two meshes")
    p.add_argument("a")
    p.add_argument("b")
    p.add_argument("--steps", type=int, default=5)
    p.add_argument("--out", required=True, help="output directory")

    p = add("swap", cmd_swap, "intrinsic code of one mesh with the extrinsic code of another")
    p.add_argument("intrinsic")
    p.add_argument("extrinsic")
    p.add_argument("--out", required=True)

    p = add("analogy", cmd_analogy, "decode(z_a - z_b + z_c)")
    for name in ("a", "b", "c"):
        p.add_argument(name)
    p.add_argument("--out", required=True)

    p = add("complete", cmd_complete, "complete a partial point set (OFF or x,y,z CSV)")
    p.add_argument("partial")
    p.add_argument("--iters", type=int, default=300)
    p.add_argument("--out", required=True)
    _add_data_args(p)

    p = add("fit-metric", cmd_fit_metric, "deform a mesh toward target geodesic distances")
    p.add_argument("init")
    p.add_argument("--target", required=True, help="distance matrix CSV, or an OFF mesh to take geodesics from")
    p.add_argument("--iters", type=int, default=1000)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--out", required=True)

    p = add("geodesic", cmd_geodesic, "heat-method geodesic distances as CSV")
    p.add_argument("mesh")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--source", type=int)
    group.add_argument("--all", action="store_true")
    p.add_argument("--t", type=float, default=GeodesicConfig.t)
    p.add_argument("--out")
    p.add_argument("--colored", help="also write a COFF mesh colored by distance (with --source)")

    p = add("eval", cmd_eval, "interpolation and disentanglement errors")
    p.add_argument("--out")
    _add_data_args(p)

    p = add("check-grad", cmd_check_grad, "run the gradient-check suites")
    p.add_argument("--seeds", type=int, default=5)

    add("show-config", cmd_show_config, "print the effective training config")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (OSError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
