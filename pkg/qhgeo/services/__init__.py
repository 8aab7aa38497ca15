"""
Geometry services: domains, Whitney cubes, the qh metric, decompositions,
partitions of unity, approximation and the Cantor counterexample.
"""
from qhgeo.services.domain import DiscreteDomain, InnerRegion, build_domain, domain_from_mask
from qhgeo.services.whitney import DyadicCube, WhitneyDecomposition, whitney_decompose, validate_whitney
from qhgeo.services.qh_metric import QhPath, qh_distance, qh_geodesic, hyperbolicity_report
from qhgeo.services.decomposition import CorePartition, BoundaryLayer, refine_core, boundary_layer
from qhgeo.services.partition import PartitionOfUnity, build_partition
from qhgeo.services.approximation import GridFunction, approximate, density_experiment
from qhgeo.services.counterexample import CantorSpec, IntervalSet, StepFunctionField, cantor_spec

__all__ = [
    "DiscreteDomain",
    "InnerRegion",
    "build_domain",
    "domain_from_mask",
    "DyadicCube",
    "WhitneyDecomposition",
    "whitney_decompose",
    "validate_whitney",
    "QhPath",
    "qh_distance",
    "qh_geodesic",
    "hyperbolicity_report",
    "CorePartition",
    "BoundaryLayer",
    "refine_core",
    "boundary_layer",
    "PartitionOfUnity",
    "build_partition",
    "GridFunction",
    "approximate",
    "density_experiment",
    "CantorSpec",
    "IntervalSet",
    "StepFunctionField",
    "cantor_spec",
]
