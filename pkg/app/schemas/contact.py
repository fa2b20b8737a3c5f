from pydantic import BaseModel, Field
from typing import List, Optional

from app.models.contact import SQRT_2PI, ContactModel, FourierSeries, FourierTerm, Lattice


class FourierTermConfig(BaseModel):
    p: int
    q: int
    amplitude: float
    phase: float = 0.0

    class Config:
        extra = "forbid"


def to_series(terms: List[FourierTermConfig]) -> FourierSeries:
    return FourierSeries(tuple(FourierTerm(t.p, t.q, t.amplitude, t.phase) for t in terms))


def _terms(series: FourierSeries) -> List[FourierTermConfig]:
    return [FourierTermConfig(p=t.p, q=t.q, amplitude=t.amplitude, phase=t.phase) for t in series.terms]


class ContactModelConfig(BaseModel):
    """JSON form of a ContactModel; the flat Heisenberg quotient by default"""

    epsilon: float = 0.0
    coeff_a: List[FourierTermConfig] = []
    coeff_b: List[FourierTermConfig] = []
    density_h: Optional[List[FourierTermConfig]] = None
    Lx: float = Field(SQRT_2PI, gt=0)
    Ly: float = Field(SQRT_2PI, gt=0)
    Lz: float = Field(2.0 * 3.141592653589793, gt=0)

    class Config:
        extra = "forbid"

    def to_model(self) -> ContactModel:
        return ContactModel(
            epsilon=self.epsilon,
            coeff_a=to_series(self.coeff_a),
            coeff_b=to_series(self.coeff_b),
            lattice=Lattice(self.Lx, self.Ly, self.Lz),
            density_h=None if self.density_h is None else to_series(self.density_h),
        )

    @classmethod
    def from_model(cls, model: ContactModel) -> "ContactModelConfig":
        lat = model.lattice
        return cls(
            epsilon=model.epsilon,
            coeff_a=_terms(model.coeff_a),
            coeff_b=_terms(model.coeff_b),
            density_h=None if model.density_h is None else _terms(model.density_h),
            Lx=lat.Lx,
            Ly=lat.Ly,
            Lz=lat.Lz,
        )
