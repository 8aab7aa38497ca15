"""
CLI subcommand registration.
"""
from qhgeo.commands.geometry import register as register_geometry
from qhgeo.commands.analysis import register as register_analysis
from qhgeo.commands.counterexample import register as register_counterexample

__all__ = [
    "register_geometry",
    "register_analysis",
    "register_counterexample",
]
