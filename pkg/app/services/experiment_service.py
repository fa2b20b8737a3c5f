import logging
import math
import time
from typing import Callable, Dict

import numpy as np

from app.core.config import settings
from app.models.contact import ContactModel
from app.models.dynamics import FlowKind, PhasePoint, Scheme
from app.models.series import MatrixElementSeries
from app.schemas.contact import to_series
from app.schemas.experiment import ExperimentConfig
from app.schemas.reports import (
    ErgodicReport,
    FlowReport,
    HeatKernelTable,
    NormalFormReport,
    QEReport,
    SpectrumReport,
    WeylReport,
)
from app.services import (
    discretize,
    dynamics,
    eigensolve,
    exact_heisenberg,
    heat,
    hyperbolic,
    normal_form,
    weyl_qe,
)
from app.storage.artifacts import ArtifactStore

logger = logging.getLogger(__name__)

# concentration on the characteristic cone tends to 1
CONCENTRATION_LIMIT = 1.0


class ExperimentService:
    """Runs one configured experiment and writes its artifacts under the store"""

    def __init__(self, config: ExperimentConfig, store: ArtifactStore, **overrides):
        self.config = config
        self.store = store
        self.params = config.params(**overrides)
        self._model = None

    @property
    def model(self) -> ContactModel:
        if self._model is None:
            model = self.config.model.to_model()
            model.check_invariants(settings.MODEL_SAMPLE_GRID)
            self._model = model
        return self._model

    def run(self) -> Dict:
        handlers: Dict[str, Callable[[], Dict]] = {
            "spectrum": self.run_spectrum,
            "weyl": self.run_weyl,
            "heat": self.run_heat,
            "qe": self.run_qe,
            "flow": self.run_flow,
            "spiral": self.run_spiral,
            "nf": self.run_normal_form,
            "ergodic": self.run_ergodic,
        }
        started = time.time()
        logger.info("running %s experiment into %s", self.config.experiment, self.store.root)
        summary = handlers[self.config.experiment]()
        inputs = self.config.model_dump(mode="json")
        inputs["parameters"] = self.params.model_dump(mode="json")
        self.store.write_manifest(inputs, started, self.config.experiment)
        logger.info("%s finished in %.2fs", self.config.experiment, time.time() - started)
        return summary

    def run_spectrum(self) -> Dict:
        p = self.params
        spectrum = exact_heisenberg.enumerate_spectrum(p.lambda_max)
        exact_heisenberg.write_spectrum_csv(spectrum, self.store)
        fit_hi = p.fit_hi or p.lambda_max
        report = SpectrumReport(
            lambda_max=p.lambda_max,
            entries=len(spectrum),
            counting=exact_heisenberg.counting(spectrum, p.lambda_max),
            weyl=weyl_qe.weyl_fit(spectrum, p.fit_lo, fit_hi, p.points, reference=exact_heisenberg.WEYL_CONSTANT_FLAT),
            torus=exact_heisenberg.torus_counting_fit(spectrum, p.torus_lo, p.lambda_max, p.points),
        )
        self.store.write_json("weyl.json", report)
        return report.model_dump(mode="json")

    def run_weyl(self) -> Dict:
        p = self.params
        model = self.model
        values = weyl_qe.sector_spectrum(model, p.lambda_hi, p.n_grid)
        self.store.write_csv("eigenvalues.csv", ("index", "value"), enumerate(values.tolist()))
        volume = discretize.popp_volume(model, p.quad_n)
        fit = weyl_qe.weyl_fit(values, p.lambda_lo, p.lambda_hi, p.points, reference=volume / 32.0)
        gauge = None
        if p.gauge_h:
            gauge = discretize.gauge_check(model, to_series(p.gauge_h), p.gauge_n_grid or p.n_grid)
        density = None
        if p.compare_density:
            h = to_series(p.density_h) if p.density_h is not None else model.density_h
            density = weyl_qe.density_comparison(
                model,
                h,
                p.lambda_lo,
                p.lambda_hi,
                p.n_grid,
                p.points,
                popp_values=values if model.density_h is None else None,
            )
        if p.write_operator_m is not None:
            m = p.write_operator_m
            op = _sector_operator(model, m, p.n_grid)
            discretize.write_matrix_market(op, self.store, "operator.mtx")
        report = WeylReport(
            fit=fit,
            popp_volume=volume,
            eigenvalue_count=int(values.size),
            sectors=discretize.sector_range(model, p.lambda_hi) + 1,
            n_grid=p.n_grid,
            gauge=gauge,
            density=density,
        )
        self.store.write_json("weyl.json", report)
        return report.model_dump(mode="json")

    def run_heat(self) -> Dict:
        p = self.params
        summary: Dict = {}
        if p.experiment in ("karamata", "both"):
            ts = np.geomspace(p.t_lo, p.curve_t_max, p.curve_points)
            heat.write_trace_csv(heat.trace_curve(exact_heisenberg.heat_trace_closed_form, ts), self.store)
            report = heat.karamata_constant(exact_heisenberg.heat_trace_closed_form, p.t_lo, p.t_hi, p.points)
            self.store.write_json("karamata.json", report)
            summary["karamata"] = report.model_dump(mode="json")
        if p.experiment in ("kernel", "both"):
            table = HeatKernelTable(
                points=[heat.kernel_report(*point, tol=p.tol) for point in p.kernel_points],
                local_weyl_constant=heat.local_weyl_constant(),
            )
            self.store.write_json("kernel.json", table)
            summary["kernel"] = table.model_dump(mode="json")
        return summary

    def run_qe(self) -> Dict:
        p = self.params
        spectrum = exact_heisenberg.enumerate_spectrum(max(p.lambda_max, p.kvn_lambda, max(p.curve_lambdas)))
        series = weyl_qe.concentration_series(spectrum)
        weyl_qe.write_series_csv(series, self.store)

        lams = np.asarray(p.curve_lambdas, dtype=float)
        cesaro = weyl_qe.cesaro_curve(series, lams)
        var = weyl_qe.variance_curve(series, lams, CONCENTRATION_LIMIT)
        fractions, slope = weyl_qe.torus_fraction_curve(spectrum, lams)

        # deficit 1 - concentration along the expanded series below kvn_lambda
        below = series.eigenvalues <= p.kvn_lambda
        expanded = MatrixElementSeries(
            series.eigenvalues[below], series.values[below], series.weights[below], series.label, series.tags[below]
        ).expanded()
        deficit = np.clip(CONCENTRATION_LIMIT - expanded.values, 0.0, None)
        extraction = weyl_qe.kvn_extract(deficit)
        weyl_qe.write_mask_csv(deficit, extraction, self.store)
        kept_fraction, ambient_fraction = _tail_torus_fractions(expanded.tags == 1, extraction.kept)

        classifications = []
        for m in p.classify_m:
            vertical, horizontal = discretize.energy_operators(self.model, m, p.classify_n_grid)
            op = _sector_operator(self.model, m, p.classify_n_grid)
            for pair in eigensolve.solve_lowest(op, p.classify_count, seed=self.config.seed):
                classifications.append(weyl_qe.quantum_limit_classify(pair.vector, vertical, horizontal))

        report = QEReport(
            lambdas=lams.tolist(),
            cesaro=cesaro.tolist(),
            variance=var.tolist(),
            torus_fraction=fractions.tolist(),
            torus_fraction_slope=slope,
            kvn_density=extraction.density_estimate,
            kvn_torus_kept_fraction=kept_fraction,
            ambient_torus_fraction=ambient_fraction,
            classifications=classifications,
        )
        self.store.write_json("qe.json", report)
        return report.model_dump(mode="json")

    def run_flow(self) -> Dict:
        p = self.params
        model = self.model
        start = PhasePoint.of(p.q, p.p)
        flow = FlowKind(p.flow)
        sample = dynamics.integrate(model, flow, start, p.T, p.dt, Scheme(p.scheme), p.record_every)
        dynamics.write_trajectory_csv(sample, self.store)

        oracle_error = None
        if model.is_flat and flow == FlowKind.GEODESIC:
            exact = dynamics.flat_geodesic(start, sample.times)
            oracle_error = float(np.max(np.abs(sample.states[:, :3] - exact[:, :3])))
        I = sample.adiabatic
        adiabatic_drift = None if np.all(np.isnan(I)) else float(np.nanmax(np.abs(I - I[0])))
        report = FlowReport(
            flow=flow.value,
            scheme=Scheme(p.scheme).value,
            T=p.T,
            dt=p.dt,
            samples=len(sample),
            gstar_drift=float(np.max(np.abs(sample.gstar - sample.gstar[0]))),
            adiabatic_drift=adiabatic_drift,
            oracle_error=oracle_error,
            truncated=sample.truncated,
            final_state=sample.states[-1].tolist(),
        )
        self.store.write_json("flow.json", report)
        return report.model_dump(mode="json")

    def run_spiral(self) -> Dict:
        p = self.params
        report = dynamics.adiabatic_experiment(
            self.model,
            p.epsilons,
            p.I0s,
            dt=p.dt,
            scheme=Scheme(p.scheme),
            horizon_cap=p.horizon_cap,
            q0=tuple(p.q),
        )
        self.store.write_json("spiral.json", report)
        return report.model_dump(mode="json")

    def run_normal_form(self) -> Dict:
        p = self.params
        h = normal_form.parse_hamiltonian(p.input, p.truncation)
        result = normal_form.birkhoff_normalize(h, p.order, p.mode)
        truncation = p.order if p.mode == "local" else None
        replayed = normal_form.replay(h, result.generators, truncation)
        replay_exact = replayed.same_terms(result.normal_form + result.residual)
        if not replay_exact:
            logger.warning("generator replay does not reproduce the normal form")

        generators = [f"{space}: {generator.to_text()}" for space, generator in result.generators]
        self.store.write_text("normal_form.txt", result.normal_form.to_text())
        self.store.write_text("generators.txt", "\n".join(generators) if generators else "")
        report = NormalFormReport(
            mode=result.mode,
            order=result.order,
            normal_form=result.normal_form.to_text(),
            generators=generators,
            residual=result.residual.to_text(),
            invariant_coefficients=normal_form.invariant_coefficients(result.normal_form),
            replay_exact=replay_exact,
        )
        self.store.write_json("nf.json", report)
        return report.model_dump(mode="json")

    def run_ergodic(self) -> Dict:
        p = self.params
        regions = hyperbolic.bolza_ergodic_averages(p.starts, p.T, p.dt, self.config.seed)

        # flat Reeb flow moves only z, so the average of cos x is frozen
        flat = ContactModel.flat()
        start = PhasePoint.of((p.reeb_x0, 0.3, 0.0), (0.0, 0.0, 1.0))
        rows = dynamics.birkhoff_average(flat, FlowKind.REEB, start, lambda s: np.cos(s[:, 0]), p.reeb_T)
        value = float(rows[-1, 1])
        report = ErgodicReport(
            testbed="bolza",
            T=p.T,
            dt=p.dt,
            starts=p.starts,
            regions=regions,
            flat_reeb_value=value,
            flat_reeb_deviation=float(np.max(np.abs(rows[:, 1] - math.cos(p.reeb_x0)))),
        )
        self.store.write_json("ergodic.json", report)
        return report.model_dump(mode="json")


def _sector_operator(model: ContactModel, m: int, n_grid: int):
    if m == 0:
        return discretize.build_torus_sector(model, n_grid)
    return discretize.build_sector_operator(model, m, n_grid)


def _tail_torus_fractions(is_torus: np.ndarray, kept: np.ndarray):
    """Torus share among kept indices and among all indices, over the second half"""
    tail = slice(is_torus.size // 2, None)
    torus, keep = is_torus[tail], kept[tail]
    ambient = float(torus.mean()) if torus.size else 0.0
    kept_fraction = float(torus[keep].mean()) if keep.any() else 0.0
    return kept_fraction, ambient
