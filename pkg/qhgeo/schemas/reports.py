"""
Pydantic schemas for validator reports and estimator results.
"""
from typing import Dict, List, Optional

from pydantic import BaseModel, Field, computed_field


class CheckResult(BaseModel):
    """Outcome of one named check."""
    name: str
    passed: bool
    value: Optional[float] = None
    limit: Optional[float] = None
    counterexample: Optional[str] = None


class ValidationReport(BaseModel):
    """Pass/fail per condition with the first counterexample."""
    subject: str
    checks: List[CheckResult] = Field(default_factory=list)
    metrics: Dict[str, float] = Field(default_factory=dict)

    @computed_field  # type: ignore[prop-decorator]
    @property
    def passed(self) -> bool:
        return all(check.passed for check in self.checks)

    def check(self, name: str) -> CheckResult:
        """Look up a check by name."""
        for result in self.checks:
            if result.name == name:
                return result
        raise KeyError(name)

    def failures(self) -> List[CheckResult]:
        return [check for check in self.checks if not check.passed]


class HyperbolicityReport(BaseModel):
    """Empirical delta, C1 and C2 estimates from one seeded sample stream."""
    delta_estimate: float = Field(ge=0)
    c1_estimate: Optional[float] = Field(default=None, ge=0)
    c2_estimate: Optional[float] = Field(default=None, ge=0)
    sample_count: int = Field(ge=1)
    seed: int
    h: float


class SobolevNorm(BaseModel):
    """Discrete W^{1,p} norm split into its two terms."""
    p: float = Field(ge=1)
    lp_term: float = Field(ge=0)
    gradient_term: float = Field(ge=0)
    total: float = Field(ge=0)


class ChainReport(BaseModel):
    """Whitney chain along a quasihyperbolic geodesic."""
    cubes: List[str]
    length: int
    min_side_ratio: float
    max_side_ratio: float


class TraceVariation(BaseModel):
    """Variation of the step function along a horizontal line through F."""
    variation: float
    variation_exact: str
    support_measure: float
    plateau_count: int


class CurveCondition(BaseModel):
    """Three-segment curve integral against the removability bound."""
    integral: float
    bound: float
    passed: bool
    scale_level: int
    criterion: float
    series_converges: bool


class StripEnergy(BaseModel):
    """Quadrature of the strip energy against its closed form."""
    i: int
    q: float
    integral: float
    bound: float
    ratio: float
    steps: int


class PorosityCheck(BaseModel):
    """Sampled gap-to-radius ratios for the 1 < p <= 2 set."""
    q: float
    min_ratio: float
    ratios: List[float]
