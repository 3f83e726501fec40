"""Command-line surface: detect, fastdetect, segment, simulate, kernel, bench.

JSON results go to stdout, logs to stderr. Exit codes: 0 on completion,
1 on I/O or parameter errors, 2 on degeneracy.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

import numpy as np

from . import bench as bench_mod
from .errors import DegeneracyError, FormatError, ParameterError
from .graphs import (
    DCSBM_BLOCK,
    DCSBM_DEGREE,
    DCSBM_HUB,
    ER,
    ERGM,
    MODELS,
    RGG,
    SBM,
    SPARSE_SBM,
    DCSBMParams,
    ERGMParams,
    ERParams,
    GeneratorSpec,
    RGGParams,
    SBMParams,
    generate_sequence,
    read_sequence,
    rgg_default_radius,
    write_sequence,
)
from .inference import FastConfig, PermConfig, fast_test, permutation_test
from .kernels import build_kernel, read_kernel, write_kernel
from .scan import ScanConfig, scan_statistic
from .segmentation import SegmentationConfig, binary_segmentation
from .inference import KAP_PERM, KAPF_ANALYTIC

logger = logging.getLogger(__name__)


def params_from_dict(model: str, data: dict, n_nodes: int):
    if model == ER:
        return ERParams(p=float(data["p"]))
    if model in (SBM, SPARSE_SBM):
        if "block_matrix" in data:
            return SBMParams(np.asarray(data["block_matrix"], dtype=float))
        return SBMParams.homogeneous(int(data["k"]), float(data["p_within"]),
                                     float(data["p_across"]))
    if model in (DCSBM_DEGREE, DCSBM_HUB, DCSBM_BLOCK):
        theta = data.get("theta")
        return DCSBMParams(
            np.asarray(data["block_matrix"], dtype=float),
            None if theta is None else np.asarray(theta, dtype=float),
        )
    if model == RGG:
        radius = data.get("radius")
        return RGGParams(float(radius) if radius is not None else rgg_default_radius(n_nodes))
    if model == ERGM:
        return ERGMParams(edge=float(data["edge"]), triangle=float(data["triangle"]),
                          burnin_factor=int(data.get("burnin_factor", 20)))
    raise ParameterError(f"unknown model {model!r}")


_DEFAULT_PARAMS = {
    ER: {"p": 0.5},
    SBM: {"k": 5, "p_within": 0.5, "p_across": 0.3},
    SPARSE_SBM: {"block_matrix": [[0.05, 0.03], [0.03, 0.05]]},
    DCSBM_DEGREE: {"block_matrix": [[0.05, 0.03], [0.03, 0.05]]},
    DCSBM_HUB: {"block_matrix": [[0.05, 0.03], [0.03, 0.05]]},
    DCSBM_BLOCK: {"block_matrix": [[0.06, 0.03], [0.03, 0.06]]},
    RGG: {},
    ERGM: {"edge": -2.0, "triangle": 0.1},
}


def _resolve_kernel(spec: str, seq, threshold: float):
    if spec.startswith("file:"):
        return read_kernel(spec[len("file:"):])
    if spec not in ("gaussian", "graphlet"):
        raise ParameterError(f"kernel must be gaussian, graphlet, or file:PATH, got {spec!r}")
    if seq is None:
        raise ParameterError(f"kernel {spec!r} needs a GSEQ input file")
    return build_kernel(seq, spec, threshold)


def _add_detect_flags(p: argparse.ArgumentParser):
    p.add_argument("input", nargs="?", help="GSEQ file (optional when both kernels are file:)")
    p.add_argument("--kernel1", default="gaussian")
    p.add_argument("--kernel2", default="graphlet")
    p.add_argument("--n0-frac", type=float, default=0.05)
    p.add_argument("--n1-frac", type=float, default=0.95)
    p.add_argument("--threshold", type=float, default=0.5,
                   help="binarization cutoff for weighted input to the graphlet kernel")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--dump-profile", metavar="PATH",
                   help="write the scan diagnostics CSV (t, S, Z components)")


def _load_detect_inputs(args):
    seq = read_sequence(args.input) if args.input else None
    k1 = _resolve_kernel(args.kernel1, seq, args.threshold)
    k2 = _resolve_kernel(args.kernel2, seq, args.threshold)
    if k1.n != k2.n:
        raise ParameterError(f"kernel sizes differ: {k1.n} vs {k2.n}")
    cfg = ScanConfig.from_fractions(k1.n, args.n0_frac, args.n1_frac)
    return k1, k2, cfg


def _maybe_dump_profile(args, k1, k2, cfg):
    if args.dump_profile:
        profile = scan_statistic(k1, k2, cfg)
        with open(args.dump_profile, "w", encoding="utf-8") as fh:
            profile.dump_csv(fh)


def cmd_detect(args) -> int:
    k1, k2, cfg = _load_detect_inputs(args)
    pcfg = PermConfig(
        b=args.perms,
        seed=args.seed,
        parallel_workers=bench_mod.effective_workers(args.workers),
        smoothed=args.smooth_pvalue,
    )
    outcome = permutation_test(k1, k2, cfg, pcfg)
    _maybe_dump_profile(args, k1, k2, cfg)
    print(json.dumps(outcome.to_json_dict()))
    return 0


def cmd_fastdetect(args) -> int:
    k1, k2, cfg = _load_detect_inputs(args)
    outcome = fast_test(k1, k2, FastConfig(r1=args.r1, r2=args.r2, cfg=cfg))
    _maybe_dump_profile(args, k1, k2, cfg)
    print(json.dumps(outcome.to_json_dict()))
    return 0


def cmd_segment(args) -> int:
    seq = read_sequence(args.input)
    engine = KAP_PERM if args.engine == "perm" else KAPF_ANALYTIC
    cfg = SegmentationConfig(
        alpha=args.alpha,
        min_separation=args.min_sep,
        min_segment=args.min_segment,
        engine=engine,
        n0_frac=args.n0_frac,
        n1_frac=args.n1_frac,
        perms=args.perms,
    )
    builders = (
        lambda s: build_kernel(s, args.kernel1, args.threshold),
        lambda s: build_kernel(s, args.kernel2, args.threshold),
    )
    result = binary_segmentation(seq, builders, cfg, seed=args.seed)
    logger.info("segmentation trace:\n%s", result.render_trace())
    print(json.dumps(result.to_json_list()))
    return 0


def cmd_simulate(args) -> int:
    pre = params_from_dict(args.model, json.loads(args.params) if args.params
                           else _DEFAULT_PARAMS[args.model], args.nodes)
    post = None
    if args.post_params:
        post = params_from_dict(args.model, json.loads(args.post_params), args.nodes)
    spec = GeneratorSpec(
        model=args.model, n_nodes=args.nodes, n=args.length, params=pre,
        seed=args.seed, tau=args.tau, post_change_params=post,
    )
    write_sequence(generate_sequence(spec), args.out)
    logger.info("wrote %d snapshots to %s", args.length, args.out)
    return 0


def cmd_kernel(args) -> int:
    seq = read_sequence(args.input)
    write_kernel(build_kernel(seq, args.kind, args.threshold), args.out)
    return 0


def cmd_bench(args) -> int:
    spec = bench_mod.load_bench_spec(args.specfile)
    rows = bench_mod.run_bench(spec)
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            bench_mod.write_csv(rows, fh)
    else:
        bench_mod.write_csv(rows, sys.stdout)
    print(bench_mod.summarize(rows), file=sys.stderr)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kapcpd",
        description="Kernel-aggregated change-point detection for network sequences",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("detect", help="permutation scan test")
    _add_detect_flags(p)
    p.add_argument("--perms", type=int, default=1000)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--smooth-pvalue", action="store_true",
                   help="use (1 + count) / (1 + B) instead of the raw average")
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("fastdetect", help="analytic Bonferroni test")
    _add_detect_flags(p)
    p.add_argument("--r1", type=float, default=0.5)
    p.add_argument("--r2", type=float, default=2.0)
    p.set_defaults(func=cmd_fastdetect)

    p = sub.add_parser("segment", help="binary segmentation for multiple change points")
    p.add_argument("input")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--min-sep", type=int, default=6)
    p.add_argument("--min-segment", type=int, default=None)
    p.add_argument("--engine", choices=("perm", "fast"), default="perm")
    p.add_argument("--perms", type=int, default=1000)
    p.add_argument("--n0-frac", type=float, default=0.05)
    p.add_argument("--n1-frac", type=float, default=0.95)
    p.add_argument("--kernel1", default="gaussian")
    p.add_argument("--kernel2", default="graphlet")
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_segment)

    p = sub.add_parser("simulate", help="write a generated GSEQ file")
    p.add_argument("--model", choices=MODELS, required=True)
    p.add_argument("--nodes", type=int, default=50)
    p.add_argument("-n", "--length", type=int, default=100)
    p.add_argument("--tau", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--params", help="JSON parameter record for the pre-change model")
    p.add_argument("--post-params", help="JSON parameter record applied after tau")
    p.add_argument("-o", "--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("kernel", help="compute and export a kernel CSV from a GSEQ file")
    p.add_argument("input")
    p.add_argument("--kind", choices=("gaussian", "graphlet"), default="gaussian")
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("-o", "--out", required=True)
    p.set_defaults(func=cmd_kernel)

    p = sub.add_parser("bench", help="run a benchmark grid from a TOML/JSON spec file")
    p.add_argument("specfile")
    p.add_argument("-o", "--out", help="CSV output path (stdout when omitted)")
    p.set_defaults(func=cmd_bench)

    return parser


def main(argv=None) -> int:
    logging.basicConfig(stream=sys.stderr, level=logging.INFO, format="%(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except DegeneracyError as exc:
        print(f"degeneracy: {exc}", file=sys.stderr)
        return 2
    except (FormatError, ParameterError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: file not found: {exc.filename}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except json.JSONDecodeError as exc:
        print(f"error: invalid JSON parameter: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
