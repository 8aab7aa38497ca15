"""
Subcommands for the scale-m constructions: decompose and approximate.
"""
import argparse
from typing import Any, Dict, List

import numpy as np

from qhgeo.commands.base import CommandContext, add_common, add_domain
from qhgeo.core.exceptions import ConfigurationError, ValidationFailure
from qhgeo.services.approximation import catalog, catalog_p_range, default_max_level, density_experiment
from qhgeo.services.decomposition import (
    boundary_layer,
    chain_length_bound,
    choose_c1,
    exhaustion_depth,
    refine_core,
    validate_partitioning,
)
from qhgeo.services.partition import build_partition
from qhgeo.services.whitney import whitney_decompose
from qhgeo.utils.io import write_csv, write_grayscale, write_json, write_label_grid
import logging

logger = logging.getLogger(__name__)

# label grid codes
OUTSIDE, CORE, LAYER_E, LAYER_F = 0, 1, 2, 3


def _require_scales(ctx: CommandContext) -> List[int]:
    if not ctx.config.m:
        raise ConfigurationError("This command needs --m, e.g. --m 4..8")
    return ctx.config.m


def run_decompose(ctx: CommandContext) -> Dict[str, Any]:
    """Core, layer, validation, partition of unity and label grids per scale."""
    scales = _require_scales(ctx)
    c1 = ctx.args.c1
    if c1 is not None and c1 <= 0:
        raise ConfigurationError(f"--c1 must be positive, got {c1}")
    dom = ctx.domain()
    level = ctx.args.max_level if ctx.args.max_level is not None else default_max_level(dom)
    dec = whitney_decompose(dom, level)

    cores = []
    failures: List[ValidationFailure] = []
    per_scale: Dict[str, Any] = {}
    for m in scales:
        core = refine_core(dec, dom, m, choose_c1(dec, dom, m, c1))
        layer = boundary_layer(dec, dom, core)
        chain = chain_length_bound(dec, dom, core, layer, seed=ctx.config.seed)
        report = validate_partitioning(core, layer, dom, chain_bound=chain)
        report_name = f"validation_m{m}.json"
        write_json(ctx.path(report_name), report)
        if not report.passed:
            failed = [check.name for check in report.failures()]
            failures.append(ValidationFailure(
                f"Scale {m} failed checks: {', '.join(failed)}",
                report_path=str(ctx.output / report_name),
                context={"m": m, "failed": failed},
            ))

        pou = build_partition(core, layer, dom, ctx.threads)
        codes = np.zeros(dom.node_count, dtype=np.int32)
        codes[core.omega] = CORE
        codes[layer.f_raw] = LAYER_F
        codes[layer.e_raw] = LAYER_E
        grid = np.full(dom.shape, OUTSIDE, dtype=np.int32)
        grid[dom.occupancy] = codes
        write_label_grid(ctx.path(f"labels_m{m}.bin"), grid)
        if dom.dimension == 2:
            psi = np.zeros(dom.shape)
            psi[dom.occupancy] = pou.psi
            write_grayscale(ctx.path(f"psi_m{m}.pgm"), psi)
            total = np.zeros(dom.shape)
            total[dom.occupancy] = pou.raw_total / max(float(pou.raw_total.max()), 1.0)
            write_grayscale(ctx.path(f"total_m{m}.pgm"), total)

        cores.append(core)
        per_scale[str(m)] = {
            "core": core.summary(),
            "chain_bound": chain,
            "layer": {"e_cells": int(layer.e_raw.size), "f_cells": int(layer.f_raw.size)},
            "partition": {
                "gradient_bound": pou.gradient_bound,
                "locality": pou.locality,
                "sum_error": float(np.abs(pou.total() - 1.0).max()) if dom.node_count else 0.0,
            },
            "passed": report.passed,
        }

    ctx.results.update({
        "max_level": level,
        "grid_shape": list(dom.shape),
        "label_codes": {"outside": OUTSIDE, "core": CORE, "e": LAYER_E, "f": LAYER_F},
        "scales": per_scale,
        "exhaustion_depth": exhaustion_depth(cores),
    })
    if failures:
        raise failures[0]
    return ctx.results


def run_approximate(ctx: CommandContext) -> Dict[str, Any]:
    """Density experiment over the requested scales."""
    scales = _require_scales(ctx)
    p = ctx.config.p if ctx.config.p is not None else 2.0
    if p < 1:
        raise ConfigurationError(f"--p must be >= 1, got {p}")
    dom = ctx.domain()
    low, high = catalog_p_range(ctx.args.u, dom.dimension)
    if not low <= p < high:
        raise ConfigurationError(f"{ctx.args.u} is not in W^1,{p}; p must lie in [{low}, {high})")
    u = catalog(ctx.args.u, dom)
    study = density_experiment(dom, u, p, scales, c1=ctx.args.c1, max_level=ctx.args.max_level,
                               threads=ctx.threads)
    write_csv(ctx.path("density.csv"), study.rows)
    ctx.results.update({"function": u.name, "p": p, "diagnostics": study.diagnostics})
    return ctx.results


def register(subparsers: argparse._SubParsersAction) -> None:
    """Add decompose and approximate."""
    parser = subparsers.add_parser("decompose", help="Core, layer and partition of unity per scale")
    add_domain(parser)
    add_common(parser)
    parser.add_argument("--m", required=True, help="Scales, e.g. 4..8")
    parser.add_argument("--c1", type=float, default=None,
                        help="Ball-separation constant; picked per scale when omitted")
    parser.add_argument("--max-level", type=int, default=None)
    parser.set_defaults(handler=run_decompose)

    parser = subparsers.add_parser("approximate", help="Density experiment CSV")
    add_domain(parser)
    add_common(parser)
    parser.add_argument("--u", required=True, help="Test function, e.g. power:0.1")
    parser.add_argument("--p", type=float, default=2.0)
    parser.add_argument("--m", required=True, help="Scales, e.g. 4..8")
    parser.add_argument("--c1", type=float, default=None)
    parser.add_argument("--max-level", type=int, default=None)
    parser.set_defaults(handler=run_approximate)
