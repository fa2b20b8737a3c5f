from pydantic import BaseModel
from typing import Any, Dict, List, Optional


class WeylFitReport(BaseModel):
    constant: float
    exponent: float
    r2: float
    constant_free: float
    fixed_exponent: float
    lambda_lo: float
    lambda_hi: float
    points: int
    reference: Optional[float] = None

    @property
    def relative_error(self) -> Optional[float]:
        if self.reference is None:
            return None
        return abs(self.constant - self.reference) / self.reference


class TorusFitReport(BaseModel):
    constant: float
    exponent: float
    lambda_lo: float
    lambda_hi: float


class SpectrumReport(BaseModel):
    lambda_max: float
    entries: int
    counting: int
    weyl: Optional[WeylFitReport] = None
    torus: Optional[TorusFitReport] = None


class KernelReport(BaseModel):
    x: float
    y: float
    z: float
    t: float
    value: float
    t2_value: float
    truncation: float
    nodes: int


class HeatKernelTable(BaseModel):
    points: List[KernelReport]
    local_weyl_constant: float


class KaramataReport(BaseModel):
    constant: float
    weyl_constant: float
    exponent: float
    r2: float
    t_lo: float
    t_hi: float
    points: int
    warning: Optional[str] = None


class GaugeReport(BaseModel):
    max_spectral_deviation: float
    max_abs_potential: float
    max_popp_shift: float
    max_midpoint_gap: float
    shift_within_bound: bool
    n_grid: int
    m: int = 0
    count: int = 20


class DensityComparison(BaseModel):
    popp: WeylFitReport
    density: WeylFitReport
    relative_gap: float


class WeylReport(BaseModel):
    fit: WeylFitReport
    popp_volume: float
    eigenvalue_count: int
    sectors: int
    n_grid: int
    gauge: Optional[GaugeReport] = None
    density: Optional[DensityComparison] = None


class ClassificationRecord(BaseModel):
    sigma_fraction: float
    vertical: float
    horizontal: float
    degenerate: bool = False


class QEReport(BaseModel):
    lambdas: List[float]
    cesaro: List[float]
    variance: List[float]
    torus_fraction: List[float]
    torus_fraction_slope: float
    kvn_density: float
    kvn_torus_kept_fraction: float
    ambient_torus_fraction: float
    classifications: List[ClassificationRecord] = []


class FlowReport(BaseModel):
    flow: str
    scheme: str
    T: float
    dt: float
    samples: int
    gstar_drift: float
    adiabatic_drift: Optional[float] = None
    oracle_error: Optional[float] = None
    truncated: bool = False
    final_state: List[float]


class AdiabaticRun(BaseModel):
    epsilon: float
    I0: float
    horizon: float
    deviation: float
    truncated: bool = False


class AdiabaticReport(BaseModel):
    runs: List[AdiabaticRun]
    slope: Optional[float] = None


class RegionAverage(BaseModel):
    name: str
    measure: float
    averages: List[float]
    mean: float
    relative_error: float


class ErgodicReport(BaseModel):
    testbed: str
    T: float
    dt: float
    starts: int
    regions: List[RegionAverage] = []
    flat_reeb_value: Optional[float] = None
    flat_reeb_deviation: Optional[float] = None


class NormalFormReport(BaseModel):
    mode: str
    order: int
    normal_form: str
    generators: List[str]
    residual: str
    invariant_coefficients: Dict[str, str] = {}
    replay_exact: bool = True


class Manifest(BaseModel):
    experiment: str
    inputs: Dict[str, Any]
    versions: Dict[str, str]
    wall_time_seconds: float
    files: Dict[str, str]


class ErrorReport(BaseModel):
    error: str
    detail: str
    exit_code: int
    context: Dict[str, Any] = {}
