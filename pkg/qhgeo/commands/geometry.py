"""
Subcommands on a single domain: whitney, qh-dist, geodesic, hyperbolicity.
"""
import argparse
from typing import Any, Dict

from qhgeo.commands.base import CommandContext, add_common, add_domain
from qhgeo.schemas.experiments import CubeRow, VertexRow
from qhgeo.services.approximation import default_max_level
from qhgeo.services.qh_metric import four_point_delta, hyperbolicity_report, qh_distance, qh_geodesic
from qhgeo.services.whitney import validate_whitney, whitney_decompose
from qhgeo.utils.io import write_csv, write_json
from qhgeo.utils.parsing import parse_point
import logging

logger = logging.getLogger(__name__)


def run_whitney(ctx: CommandContext) -> Dict[str, Any]:
    """Decompose, export the cube list and validate."""
    dom = ctx.domain()
    level = ctx.args.max_level if ctx.args.max_level is not None else default_max_level(dom)
    dec = whitney_decompose(dom, level)
    rows = [
        CubeRow(
            level=cube.level,
            corner=" ".join(str(c) for c in cube.corner),
            side=float(cube.side),
            distance=float(dist),
        )
        for cube, dist in zip(dec.cubes, dec.distances)
    ]
    write_csv(ctx.path("cubes.csv"), rows)
    report = validate_whitney(dec, dom)
    ctx.results.update({
        "max_level": level,
        "cube_count": len(dec),
        "residual_cells": int(dec.residual.size),
        "levels": {str(k): v for k, v in dec.level_counts().items()},
    })
    ctx.report("whitney_validation.json", report)
    return ctx.results


def run_qh_dist(ctx: CommandContext) -> Dict[str, Any]:
    dom = ctx.domain()
    a, b = parse_point(ctx.args.a), parse_point(ctx.args.b)
    distance = qh_distance(dom, a, b)
    ctx.results.update({"a": list(a), "b": list(b), "qh_distance": distance})
    write_json(ctx.path("qh_distance.json"), {"a": list(a), "b": list(b), "qh_distance": distance})
    return ctx.results


def run_geodesic(ctx: CommandContext) -> Dict[str, Any]:
    dom = ctx.domain()
    a, b = parse_point(ctx.args.a), parse_point(ctx.args.b)
    path = qh_geodesic(dom, a, b)
    rows = [
        VertexRow(index=i, x=v[0], y=v[1], z=v[2] if dom.dimension == 3 else None)
        for i, v in enumerate(path.vertices.tolist())
    ]
    columns = ["index", "x", "y"] + (["z"] if dom.dimension == 3 else [])
    write_csv(ctx.path("geodesic.csv"), rows, columns)
    ctx.results.update({
        "vertices": len(path),
        "euclidean_length": path.euclidean_length,
        "qh_length": path.qh_length,
    })
    return ctx.results


def run_hyperbolicity(ctx: CommandContext) -> Dict[str, Any]:
    dom = ctx.domain()
    samples = ctx.config.samples or 50
    report = hyperbolicity_report(dom, samples, ctx.config.seed, ctx.threads)
    write_json(ctx.path("hyperbolicity.json"), report)
    ctx.results["report"] = report.model_dump()
    if ctx.args.four_point:
        ctx.results["four_point_delta"] = four_point_delta(dom, samples, ctx.config.seed, ctx.threads)
    return ctx.results


def register(subparsers: argparse._SubParsersAction) -> None:
    """Add the single-domain subcommands."""
    parser = subparsers.add_parser("whitney", help="Whitney decomposition with validation")
    add_domain(parser)
    add_common(parser)
    parser.add_argument("--max-level", type=int, default=None)
    parser.set_defaults(handler=run_whitney)

    for name, handler, help_text in (
        ("qh-dist", run_qh_dist, "Quasihyperbolic distance between two points"),
        ("geodesic", run_geodesic, "Quasihyperbolic geodesic between two points"),
    ):
        parser = subparsers.add_parser(name, help=help_text)
        add_domain(parser)
        add_common(parser)
        parser.add_argument("--a", required=True, help="Point x,y[,z]")
        parser.add_argument("--b", required=True, help="Point x,y[,z]")
        parser.set_defaults(handler=handler)

    parser = subparsers.add_parser("hyperbolicity", help="Delta, C1 and C2 estimates")
    add_domain(parser)
    add_common(parser)
    parser.add_argument("--samples", type=int, default=50)
    parser.add_argument("--four-point", action="store_true", help="Also run the four-point check")
    parser.set_defaults(handler=run_hyperbolicity)
