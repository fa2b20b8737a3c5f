from pydantic import BaseModel, Field
from typing import Any, Dict, List, Literal, Optional, Type

from app.schemas.contact import ContactModelConfig, FourierTermConfig

ExperimentName = Literal["spectrum", "weyl", "heat", "qe", "flow", "spiral", "nf", "ergodic"]


class SpectrumParams(BaseModel):
    lambda_max: float = Field(2000.0, gt=0)
    fit_lo: float = Field(200.0, gt=0)
    fit_hi: Optional[float] = None
    points: int = Field(32, ge=10)
    torus_lo: float = Field(100.0, gt=0)

    class Config:
        extra = "forbid"


class WeylParams(BaseModel):
    lambda_lo: float = Field(20.0, gt=0)
    lambda_hi: float = Field(60.0, gt=0)
    n_grid: int = Field(48, ge=8)
    points: int = Field(32, ge=10)
    quad_n: int = Field(128, ge=8)
    gauge_n_grid: Optional[int] = Field(None, ge=8)
    gauge_h: List[FourierTermConfig] = []
    compare_density: bool = True
    density_h: Optional[List[FourierTermConfig]] = None
    write_operator_m: Optional[int] = None

    class Config:
        extra = "forbid"


class HeatParams(BaseModel):
    experiment: Literal["karamata", "kernel", "both"] = "both"
    t_lo: float = Field(1e-4, gt=0)
    t_hi: float = Field(1e-3, gt=0)
    points: int = Field(24, ge=3)
    curve_points: int = Field(40, ge=2)
    curve_t_max: float = Field(1.0, gt=0)
    kernel_points: List[List[float]] = [[0.0, 0.0, 0.0, 1.0], [0.0, 0.0, 0.0, 0.1], [1.0, 1.0, 0.0, 0.5]]
    tol: float = Field(1e-10, gt=0)

    class Config:
        extra = "forbid"


class QEParams(BaseModel):
    lambda_max: float = Field(1e4, gt=0)
    curve_lambdas: List[float] = [1e2, 1e3, 1e4]
    kvn_lambda: float = Field(1000.0, gt=0)
    classify_m: List[int] = [0, 5]
    classify_n_grid: int = Field(32, ge=8)
    classify_count: int = Field(6, ge=1)

    class Config:
        extra = "forbid"


class FlowParams(BaseModel):
    flow: Literal["geodesic", "reeb"] = "geodesic"
    scheme: Literal["rk4", "implicit-midpoint"] = "rk4"
    q: List[float] = Field([0.0, 0.0, 0.0], min_length=3, max_length=3)
    p: List[float] = Field([1.0, 0.0, 1.0], min_length=3, max_length=3)
    T: float = Field(10.0, gt=0)
    dt: float = Field(1e-3, gt=0)
    record_every: int = Field(10, ge=1)

    class Config:
        extra = "forbid"


class SpiralParams(BaseModel):
    epsilons: List[float] = [0.0, 0.1, 0.05, 0.025]
    I0s: Optional[List[float]] = None
    dt: float = Field(0.005, gt=0)
    scheme: Literal["rk4", "implicit-midpoint"] = "implicit-midpoint"
    horizon_cap: Optional[float] = None
    q: List[float] = Field([0.1, 0.2, 0.0], min_length=3, max_length=3)

    class Config:
        extra = "forbid"


class NormalFormParams(BaseModel):
    input: str = "H2+u3"
    order: int = Field(6, ge=2)
    mode: Literal["local", "semiglobal"] = "semiglobal"
    truncation: int = Field(8, ge=2)

    class Config:
        extra = "forbid"


class ErgodicParams(BaseModel):
    starts: int = Field(16, ge=1)
    T: float = Field(1000.0, gt=0)
    dt: float = Field(0.05, gt=0)
    reeb_x0: float = 0.7
    reeb_T: float = Field(100.0, gt=0)

    class Config:
        extra = "forbid"


PARAMS: Dict[str, Type[BaseModel]] = {
    "spectrum": SpectrumParams,
    "weyl": WeylParams,
    "heat": HeatParams,
    "qe": QEParams,
    "flow": FlowParams,
    "spiral": SpiralParams,
    "nf": NormalFormParams,
    "ergodic": ErgodicParams,
}


class ExperimentConfig(BaseModel):
    experiment: ExperimentName
    model: ContactModelConfig = ContactModelConfig()
    parameters: Dict[str, Any] = {}
    output_dir: Optional[str] = None
    seed: int = 0
    threads: Optional[int] = Field(None, ge=1)

    class Config:
        extra = "forbid"

    def params(self, **overrides: Any) -> BaseModel:
        """Validated parameter model; non-None overrides win over file values"""
        merged = dict(self.parameters)
        merged.update({k: v for k, v in overrides.items() if v is not None})
        return PARAMS[self.experiment](**merged)
