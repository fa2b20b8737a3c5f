from app.models.spectrum import SectorKind, SpectralDatum, SpectrumList
from app.models.contact import ContactModel, FourierSeries, FourierTerm, Lattice
from app.models.operator import EigenPair, SparseOperator, Symmetry
from app.models.series import DensityOneSet, MatrixElementSeries
from app.models.dynamics import FlowKind, HyperbolicState, PhasePoint, Scheme, TrajectorySample
from app.models.symbol import BaseCoeff, GradedSymbol, HomPoly, NormalFormResult

__all__ = [
    "SectorKind",
    "SpectralDatum",
    "SpectrumList",
    "ContactModel",
    "FourierSeries",
    "FourierTerm",
    "Lattice",
    "EigenPair",
    "SparseOperator",
    "Symmetry",
    "DensityOneSet",
    "MatrixElementSeries",
    "FlowKind",
    "HyperbolicState",
    "PhasePoint",
    "Scheme",
    "TrajectorySample",
    "BaseCoeff",
    "GradedSymbol",
    "HomPoly",
    "NormalFormResult",
]
