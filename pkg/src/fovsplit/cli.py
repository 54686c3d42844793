"""Command line interface: ``fovsplit <command> ...``.

Exit status is 0 on success, 2 for bad arguments or unreadable/invalid
configuration, and 1 for runtime failures.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from .cardinality import (CardinalityPmf, GlmbHypothesis, GlmbParams, MbComponents,
                          PoissonIntensity, glmb_fov_pmf, iidc_fov_pmf, mb_fov_pmf_dft,
                          poisson_fov_pmf)
from .gaussmix import GaussianMixture
from .regions import GridSpec, region_from_dict
from .scenarios import AirportConfig, PlacementConfig, export, run_airport, run_sensor_placement
from .splitlib import SplitLibrary, optimize_split
from .splitter import SplitConfig, partition, split_for_fov

EXIT_CONFIG = 2


class ConfigError(Exception):
    """Invalid or unreadable input supplied by the user."""


def _read_json(path):
    try:
        return json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror or exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path} is not valid JSON: {exc}") from exc


def _parse(what, fn, *args):
    try:
        return fn(*args)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid {what}: {exc}") from exc


def _write(text, out):
    if out is None or out == "-":
        sys.stdout.write(text)
        if not text.endswith("\n"):
            sys.stdout.write("\n")
    else:
        Path(out).write_text(text if text.endswith("\n") else text + "\n")


def _split_config(args):
    return _parse("split settings", lambda: SplitConfig(
        w_min=args.wmin, R=args.R, lam=args.lam, grid=GridSpec(args.zeta, args.ng),
        max_depth=args.max_depth))


def _add_split_flags(p):
    p.add_argument("--wmin", type=float, default=0.01,
                   help="components lighter than this are not split (default 0.01)")
    p.add_argument("--R", type=int, default=3, help="children per split (default 3)")
    p.add_argument("--lambda", dest="lam", type=float, default=0.001,
                   help="split library regularizer (default 0.001)")
    p.add_argument("--zeta", type=float, default=3.0,
                   help="collocation grid half-width in standard deviations (default 3)")
    p.add_argument("--ng", type=int, default=7, help="grid points per axis (default 7)")
    p.add_argument("--max-depth", type=int, default=10, help="maximum split depth (default 10)")


# commands -------------------------------------------------------------------

def cmd_split(args):
    gm = _parse("mixture", GaussianMixture.from_dict, _read_json(args.gm))
    region = _parse("region", region_from_dict, _read_json(args.region))
    cfg = _split_config(args)
    refined, info = split_for_fov(gm, cfg, region, return_info=True)
    inside, outside = partition(refined, region)
    out = {
        "refined": refined.to_dict(),
        "inside": inside.to_dict(),
        "outside": outside.to_dict(),
        "mass_inside": inside.total_weight,
        "mass_outside": outside.total_weight,
        "depth": info.depth,
        "n_splits": info.n_splits,
        "hit_max_depth": info.hit_max_depth,
    }
    _write(json.dumps(out), args.out)


def cmd_splitlib_gen(args):
    lib = SplitLibrary(builtin=False)
    if args.into and Path(args.into).exists():
        lib = _parse("library", SplitLibrary.from_json, Path(args.into).read_text())
    lib.add(optimize_split(args.R, args.lam, seed=args.seed))
    _write(lib.to_json(indent=2), args.out or args.into)


def _load_model(kind, d):
    if kind == "poisson":
        return PoissonIntensity(GaussianMixture.from_dict(d["phd"]), d.get("n_global"))
    if kind == "iidc":
        return (CardinalityPmf(np.asarray(d["cardinality"], dtype=float)),
                GaussianMixture.from_dict(d["density"], normalized=True))
    if kind == "mb":
        comps = d["components"]
        return MbComponents.clamped([c["r"] for c in comps],
                                    [GaussianMixture.from_dict(c["gm"], normalized=True)
                                     for c in comps])
    if kind == "glmb":
        dens = {str(k): GaussianMixture.from_dict(v, normalized=True)
                for k, v in d["densities"].items()}
        hyps = [GlmbHypothesis(float(h["weight"]), tuple(str(l) for l in h["labels"]), dens)
                for h in d["hypotheses"]]
        return GlmbParams(hyps)
    raise ValueError(f"unknown model {kind!r}")


def cmd_cardinality(args):
    model = _parse(f"{args.model} model", _load_model, args.model, _read_json(args.input))
    region = _parse("region", region_from_dict, _read_json(args.region))
    cfg = _split_config(args)
    method = "split" if args.method == "split" else "montecarlo"
    if args.model == "poisson":
        pmf = poisson_fov_pmf(model, region, config=cfg, method=method)
    elif args.model == "iidc":
        pmf = iidc_fov_pmf(model[0], model[1], region, config=cfg, method=method)
    elif args.model == "mb":
        pmf = mb_fov_pmf_dft(model, region, config=cfg, method=method)
    else:
        pmf = glmb_fov_pmf(model, region, config=cfg, method=method)
    _write(json.dumps(pmf.to_dict()), args.out)


def cmd_airport(args):
    d = _read_json(args.config) if args.config else {}
    if args.seed is not None:
        d["seed"] = args.seed
    cfg = _parse("airport config", AirportConfig.from_dict, d)
    log = run_airport(cfg, keep_snapshots=True)
    _write(log.jsonl_snapshots() or "", args.out)
    if args.csv:
        export(log, "csv", args.csv)
    r = log.r
    summary = {"steps": len(log), "r_min": float(r.min()) if r.size else math.nan,
               "r_final": float(r[-1]) if r.size else math.nan}
    print(json.dumps(summary), file=sys.stderr)


def cmd_place(args):
    d = _read_json(args.config) if args.config else {}
    if args.seed is not None:
        d["seed"] = args.seed
    cfg = _parse("placement config", PlacementConfig.from_dict, d)
    res = run_sensor_placement(cfg)
    fmt = "json" if str(args.out).endswith(".json") else "csv"
    export(res, fmt, args.out)
    print(json.dumps({"best_center": res.best_center.tolist(),
                      "best_variance": res.best_variance}), file=sys.stderr)


# parser -----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="fovsplit",
                                 description="Field-of-view aware Gaussian mixture tools.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("split", help="refine a mixture along a region boundary")
    p.add_argument("--gm", required=True, help="mixture JSON {dim, position_dim, components}")
    p.add_argument("--region", required=True, help="region JSON")
    _add_split_flags(p)
    p.add_argument("--out", help="output JSON path (default stdout)")
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("splitlib", help="split library maintenance")
    lsub = p.add_subparsers(dest="libcmd", required=True)
    g = lsub.add_parser("gen", help="optimize one library entry and emit library JSON")
    g.add_argument("--R", type=int, required=True, help="number of children")
    g.add_argument("--lambda", dest="lam", type=float, required=True, help="regularizer")
    g.add_argument("--seed", type=int, default=0, help="multistart seed (default 0)")
    g.add_argument("--into", help="existing library JSON to extend (rewritten unless --out)")
    g.add_argument("--out", help="output path (default stdout)")
    g.set_defaults(func=cmd_splitlib_gen)

    p = sub.add_parser("cardinality", help="count pmf of a random set inside a region")
    p.add_argument("--model", required=True, choices=["poisson", "iidc", "mb", "glmb"],
                   help="random set family of the input")
    p.add_argument("--input", required=True, help="model JSON")
    p.add_argument("--region", required=True, help="region JSON")
    p.add_argument("--method", choices=["split", "mc"], default="split",
                   help="inclusion probability method (default split)")
    _add_split_flags(p)
    p.add_argument("--out", help="output JSON path (default stdout)")
    p.set_defaults(func=cmd_cardinality)

    p = sub.add_parser("airport", help="run the airport tracking scenario")
    p.add_argument("--config", help="scenario JSON; defaults apply to missing keys")
    p.add_argument("--seed", type=int, help="overrides the config seed")
    p.add_argument("--out", required=True, help="JSON-lines posterior log")
    p.add_argument("--csv", help="also write the per-step track log as CSV")
    p.set_defaults(func=cmd_airport)

    p = sub.add_parser("place", help="FoV placement variance surface")
    p.add_argument("--config", help="placement JSON; defaults apply to missing keys")
    p.add_argument("--seed", type=int, help="overrides the config seed")
    p.add_argument("--out", required=True, help="surface path (.csv or .json)")
    p.set_defaults(func=cmd_place)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except ConfigError as exc:
        print(f"fovsplit: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ValueError, RuntimeError, OSError) as exc:
        print(f"fovsplit: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
