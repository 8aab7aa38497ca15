"""
counterexample subcommands: cantor, energy, curve, trace, strip, lewis, domain3d.
"""
import argparse
from typing import Any, Dict, List, Optional

import numpy as np

from qhgeo.commands.base import CommandContext, add_common
from qhgeo.core.config import settings
from qhgeo.core.exceptions import ConfigurationError
from qhgeo.schemas.experiments import SweepRow
from qhgeo.services.counterexample import (
    CantorSpec,
    build_3d_domain,
    build_fat_cantor,
    build_lewis_cantor,
    build_removable_set,
    build_thin_cantor,
    cantor_spec,
    curve_condition,
    curve_series,
    fat_cantor_measure,
    gradient_energy,
    is_cauchy,
    line_lipschitz,
    lift_function,
    porosity_check,
    step_function,
    strip_energy,
    tail_estimate,
    trace_variation,
)
from qhgeo.services.approximation import sobolev_norm
from qhgeo.services.qh_metric import estimate_delta
from qhgeo.utils.io import write_csv, write_intervals, write_json
from qhgeo.utils.parsing import parse_range, parse_rational
import logging

logger = logging.getLogger(__name__)


def _spec(ctx: CommandContext, depth: Optional[int] = None) -> CantorSpec:
    p = ctx.config.p
    if p is None:
        raise ConfigurationError("This command needs --p")
    return cantor_spec(p, ctx.config.depth if depth is None else depth, ctx.args.i0)


def run_cantor(ctx: CommandContext) -> Dict[str, Any]:
    """Thin and fat sets with their exact algebra."""
    spec = _spec(ctx)
    thin = build_thin_cantor(spec)
    fat = build_fat_cantor(spec)
    write_intervals(ctx.path("thin_cantor.txt"), thin.pairs())
    write_intervals(ctx.path("fat_cantor.txt"), fat.pairs())
    telescoping = max(
        (abs(spec.beta_exact(i) - (spec.product_exact(i) - spec.product_exact(i + 1)))
         for i in range(1, spec.depth + 1)),
        default=0,
    )
    start = spec.i0 if spec.i0 is not None else spec.depth + 1
    pidef = max((spec.pidef_residual(i) for i in range(start, spec.depth + 1)), default=0.0)
    measure = fat_cantor_measure(spec)
    ctx.results.update({
        "p": spec.p,
        "depth": spec.depth,
        "i0": spec.i0,
        "lambdas": list(spec.lambdas),
        "thin_intervals": len(thin),
        "thin_length": spec.product(spec.depth),
        "fat_intervals": len(fat),
        "fat_measure": float(measure),
        "fat_measure_exact_matches": fat.exact_measure == measure,
        "beta_telescoping_residual": float(telescoping),
        "pidef_max_residual": pidef,
        "removable_set_measure": thin.measure * fat.measure,
    })
    return ctx.results


def run_energy(ctx: CommandContext) -> Dict[str, Any]:
    q = ctx.config.q if ctx.config.q is not None else ctx.config.p
    spec = _spec(ctx, depth=1)
    rows = gradient_energy(spec, q, ctx.args.N)
    write_csv(ctx.path("energy.csv"), rows)
    ctx.results.update({
        "q": q,
        "i0": spec.i0,
        "partial_sum": rows[-1].partial_sum,
        "tail_estimate": tail_estimate(rows),
    })
    return ctx.results


def run_strip(ctx: CommandContext) -> Dict[str, Any]:
    spec = _spec(ctx)
    q = ctx.config.q if ctx.config.q is not None else spec.p
    rows = [strip_energy(spec, q, i) for i in range(1, spec.depth + 1)]
    write_csv(ctx.path("strip.csv"), rows)
    ratios = [row.ratio for row in rows]
    ctx.results.update({"q": q, "ratio_min": min(ratios, default=0.0), "ratio_max": max(ratios, default=0.0)})
    return ctx.results


def run_curve(ctx: CommandContext) -> Dict[str, Any]:
    """Curve condition on sampled pairs off E plus the series criterion."""
    spec = _spec(ctx)
    q = ctx.config.q
    if q is None:
        raise ConfigurationError("curve needs --q")
    removable = build_removable_set(spec)
    series = curve_series(spec.p, q, settings.SERIES_TERMS)
    write_csv(ctx.path("curve_series.csv"), series)

    rng = np.random.default_rng(ctx.config.seed)
    samples = ctx.config.samples or 100
    outcomes = []
    while len(outcomes) < samples:
        z1, z2 = rng.random(2), rng.random(2)
        if removable.contains(z1[0], z1[1]) or removable.contains(z2[0], z2[1]):
            continue
        outcomes.append(curve_condition(spec, q, z1, z2, removable))
    ratios = [o.integral / o.bound for o in outcomes if o.bound > 0]
    ctx.results.update({
        "q": q,
        "criterion": outcomes[0].criterion if outcomes else None,
        "series_converges": is_cauchy(series),
        "pairs": len(outcomes),
        "passed": sum(1 for o in outcomes if o.passed),
        "max_ratio_to_bound": max(ratios, default=0.0),
        "curve_constant": settings.CURVE_CONSTANT,
    })
    return ctx.results


def run_trace(ctx: CommandContext) -> Dict[str, Any]:
    spec = _spec(ctx)
    step = step_function(build_removable_set(spec))
    y0 = float(parse_rational(ctx.args.y0))
    trace = trace_variation(step, y0)
    write_json(ctx.path("trace.json"), trace)
    ctx.results["trace"] = trace.model_dump()
    if ctx.args.y_off is not None:
        ctx.results["line_lipschitz"] = line_lipschitz(step, float(parse_rational(ctx.args.y_off)))
    return ctx.results


def run_lewis(ctx: CommandContext) -> Dict[str, Any]:
    p = ctx.config.p
    if p is None:
        raise ConfigurationError("lewis needs --p")
    lewis = build_lewis_cantor(p, ctx.args.s, ctx.config.depth)
    write_intervals(ctx.path("lewis_set.txt"), lewis.intervals.pairs())
    ctx.results.update({
        "residual_measure": lewis.residual_measure,
        "gap_sums": list(lewis.gap_sums),
        "intervals": len(lewis.intervals),
    })
    if ctx.config.q is not None:
        check = porosity_check(lewis, ctx.config.q, ctx.config.samples or 100, ctx.config.seed)
        ctx.results["porosity_min_ratio"] = check.min_ratio
    return ctx.results


def run_domain3d(ctx: CommandContext) -> Dict[str, Any]:
    """Build the slab domain per depth; optionally lift u and estimate delta."""
    if not ctx.config.h:
        raise ConfigurationError("domain3d needs --h")
    h = parse_rational(ctx.config.h)
    depths: List[int] = parse_range(ctx.args.depths) if ctx.args.depths else [ctx.config.depth]
    rows: List[SweepRow] = []
    per_depth: Dict[str, Any] = {}
    for depth in depths:
        spec = _spec(ctx, depth=depth)
        removable = build_removable_set(spec)
        dom = build_3d_domain(spec, h, removable)
        info: Dict[str, Any] = {
            "cells": dom.node_count,
            "occupied_volume": dom.node_count * dom.h ** 3,
            "removable_measure": removable.measure,
        }
        if ctx.args.lift:
            lifted = lift_function(step_function(removable), dom)
            info["lift_norm"] = sobolev_norm(lifted, dom, spec.p).total
        if ctx.config.samples:
            report = estimate_delta(dom, ctx.config.samples, ctx.config.seed, ctx.threads)
            info["delta_estimate"] = report.delta_estimate
            rows.append(SweepRow(parameter="depth", value=float(depth), estimate=report.delta_estimate))
        per_depth[str(depth)] = info
    if rows:
        write_csv(ctx.path("delta_sweep.csv"), rows)
    ctx.results.update({"h": float(h), "depths": per_depth})
    return ctx.results


HANDLERS = {
    "cantor": run_cantor,
    "energy": run_energy,
    "strip": run_strip,
    "curve": run_curve,
    "trace": run_trace,
    "lewis": run_lewis,
    "domain3d": run_domain3d,
}


def register(subparsers: argparse._SubParsersAction) -> None:
    """Add `counterexample <kind>`."""
    parser = subparsers.add_parser("counterexample", help="Cantor-set constructions")
    kinds = parser.add_subparsers(dest="kind", required=True)

    def add(name: str, help_text: str) -> argparse.ArgumentParser:
        sub = kinds.add_parser(name, help=help_text)
        add_common(sub)
        sub.add_argument("--p", type=float, required=True)
        sub.add_argument("--i0", type=int, default=None, help="First normalised ratio index")
        sub.set_defaults(handler=HANDLERS[name])
        return sub

    sub = add("cantor", "Thin and fat Cantor sets")
    sub.add_argument("--depth", type=int, default=10)

    sub = add("energy", "Gradient energy partial sums")
    sub.add_argument("--q", type=float, default=None)
    sub.add_argument("--N", type=int, default=100)

    sub = add("strip", "Strip energy against its closed form")
    sub.add_argument("--q", type=float, default=None)
    sub.add_argument("--depth", type=int, default=12)

    sub = add("curve", "Curve condition and its series")
    sub.add_argument("--q", type=float, required=True)
    sub.add_argument("--depth", type=int, default=12)
    sub.add_argument("--samples", type=int, default=100)

    sub = add("trace", "Variation of u along a line in F")
    sub.add_argument("--depth", type=int, default=10)
    sub.add_argument("--y0", default="0")
    sub.add_argument("--y-off", default=None, help="Line off F for the Lipschitz witness")

    sub = add("lewis", "Middle-gap set for 1 < p <= 2")
    sub.add_argument("--s", type=float, default=0.1)
    sub.add_argument("--depth", type=int, default=10)
    sub.add_argument("--q", type=float, default=None, help="Porosity exponent in (p, 2)")
    sub.add_argument("--samples", type=int, default=100)

    sub = add("domain3d", "Slab domain over E")
    sub.add_argument("--h", required=True)
    sub.add_argument("--depth", type=int, default=1)
    sub.add_argument("--depths", default=None, help="Depth sweep, e.g. 0..2")
    sub.add_argument("--samples", type=int, default=None, help="Triples for the delta sweep")
    sub.add_argument("--lift", action="store_true", help="Also lift u and report its norm")
