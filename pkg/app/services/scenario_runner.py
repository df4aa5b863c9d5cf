# app/services/scenario_runner.py

import logging
from dataclasses import asdict
from pathlib import Path
from typing import Callable, Dict, List, Optional, Union

import numpy as np

from app.config.settings import settings
from app.core.exceptions import CertificateError, InvalidInputError, ScenarioError
from app.models.operator import CoefficientBundleX, DiscreteOperator
from app.models.spectral import SpectralDecomposition
from app.schemas.scenario import Scenario, Task
from app.services.estimate_lab import estimate_lab
from app.services.export_service import ExportService
from app.services.families import family_factory, support_window
from app.services.grid_operator import build_modal_from_spec, bundle_from_spec
from app.services.interpolation import CONVENTIONS, interpolation
from app.services.solution_builder import solution_builder
from app.services.spectral_calculus import spectral_calculus
from app.services.spectral_ode import spectral_ode

logger = logging.getLogger(__name__)

# e^2 .. e^10
DEFAULT_LAMBDAS = tuple(float(np.exp(k)) for k in range(2, 11))

MULTIPLIER_GRID = np.linspace(-1e3, 1e3, 1001)


class ScenarioRunner:
    """Runs one task of a scenario and writes its artifacts."""

    def __init__(
        self,
        scenario: Scenario,
        out_dir: Union[str, Path],
        seed: Optional[int] = None,
        tol: Optional[float] = None,
    ):
        self.scenario = scenario
        self.params = scenario.parameters
        if seed is not None:
            self.seed = int(seed)
        elif scenario.seed is not None:
            self.seed = int(scenario.seed)
        else:
            self.seed = settings.DEFAULT_SEED
        self.tol = settings.ODE_TOL if tol is None else float(tol)
        self.export = ExportService(out_dir, scenario, self.seed, self.tol)
        self._operator: Optional[DiscreteOperator] = None

    # shared inputs

    def operator(self) -> DiscreteOperator:
        """The 1-D operator of the scenario (the first mode of a separable one)."""
        if self._operator is None:
            self._operator = build_modal_from_spec(self.scenario.operator).operators[0]
        return self._operator

    def decomposition(self) -> SpectralDecomposition:
        return spectral_calculus.decompose(self.operator())

    def bundle(self) -> CoefficientBundleX:
        if self.scenario.bundle_x is None:
            raise ScenarioError(f"Scenario '{self.scenario.name}' has no bundle_x section")
        return bundle_from_spec(self.scenario.bundle_x)

    def probe(self, dec: SpectralDecomposition) -> np.ndarray:
        spec = self.params.u
        grid = dec.source.grid
        y = grid.unknowns
        if spec.kind == "eigenvector":
            if not 0 <= spec.index < dec.n:
                raise InvalidInputError(f"Eigenvector index {spec.index} outside 0..{dec.n - 1}")
            return dec.eigenvectors[:, spec.index].copy()
        if spec.kind == "gaussian":
            radius = 4.0 * spec.width
            return np.exp(-0.5 * ((y - spec.center) / spec.width) ** 2) * support_window(
                y, spec.center, radius
            )
        rng = np.random.default_rng(self.seed)
        return rng.standard_normal(y.size)

    def _rng(self) -> np.random.Generator:
        return np.random.default_rng(self.seed)

    # tasks

    def spectrum(self) -> List[Path]:
        dec = self.decomposition()
        op = dec.source
        rows = [{"k": k, "lambda": lam} for k, lam in enumerate(dec.eigenvalues)]
        report = {
            "n": dec.n,
            "shift": op.shift,
            "lambda_min": float(dec.eigenvalues[0]),
            "lambda_max": dec.lambda_max,
            "max_residual": dec.max_residual,
            "orthonormality_error": dec.orthonormality_error,
        }
        return [
            self.export.write_table("spectrum.csv", rows),
            self.export.write_report("spectrum.json", "spectrum", report),
        ]

    def bands(self) -> List[Path]:
        dec = self.decomposition()
        bands = spectral_calculus.build_bands(dec)
        u = self.probe(dec)
        rows = spectral_calculus.band_diagnostics(bands, u)
        sandwiches = {
            name: asdict(spectral_calculus.norm_sandwich_check(f, dec, u, bands))
            for name, f in (("sqrt", np.sqrt), ("identity", lambda lam: lam))
        }
        report = {
            "j_max": bands.j_max,
            "partition_error": bands.partition_error,
            "square_sum_range": list(bands.square_sum_range),
            "sandwich": sandwiches,
            "bands": rows,
        }
        flat = []
        for row in rows:
            lo, hi = row["support"]
            flat.append({**{k: v for k, v in row.items() if k != "support"}, "support_lo": lo, "support_hi": hi})
        return [
            self.export.write_table("bands.csv", flat),
            self.export.write_report("bands.json", "bands", report),
        ]

    def ode_sweep(self) -> List[Path]:
        bundle = self.bundle()
        lambdas = self.params.lambdas or list(DEFAULT_LAMBDAS)
        rows, solutions = spectral_ode.sweep(bundle, lambdas, self.params.radius, self.tol)
        table = []
        for row, sol in zip(rows, solutions):
            residual = spectral_ode.ode_residual(sol, bundle)
            table.append(
                {
                    "lambda": row.lam,
                    "M": row.M,
                    "C_x0": row.C_x0,
                    "certified": row.certified,
                    "rescaled": row.rescaled,
                    "worst_ratio": sol.certificate.worst_ratio,
                    "worst_vdv_ratio": sol.certificate.worst_vdv_ratio,
                    "fd_residual": residual["relative"],
                }
            )
        report: Dict = {"radius": self.params.radius, "rows": table}
        if len(lambdas) >= 2:
            slope, intercept = spectral_ode.fit_lambda_scaling(
                [row.lam for row in rows], [row.M for row in rows]
            )
            report["scaling"] = {"slope": slope, "intercept": intercept}
        paths = [
            self.export.write_table("ode_sweep.csv", table),
            self.export.write_report("ode_sweep.json", "ode_sweep", report),
        ]
        failed = [row.lam for row in rows if not row.certified]
        if failed:
            raise CertificateError(
                f"{len(failed)} ODE solutions failed their growth certificate",
                {"lambdas": failed},
            )
        return paths

    def build_solution(self) -> List[Path]:
        dec = self.decomposition()
        bands = spectral_calculus.build_bands(dec)
        bundle = self.bundle()
        u = self.probe(dec)
        sol = solution_builder.build_solution(
            u,
            bands,
            bundle,
            self.params.epsilon,
            self.params.bands,
            tol=self.tol,
            samples=self.params.samples,
        )
        residuals = solution_builder.residual_check(sol, bundle, dec.source)
        exp_bounds = [
            {"j": j, **solution_builder.pj_exp_bound(u, j, self.params.epsilon, bands)}
            for j in sol.bands
        ]
        report = {
            "bands": list(sol.bands),
            "epsilon": sol.epsilon,
            "radius": sol.radius,
            "C_x0": sol.C_x0,
            "eigenvalues_used": int(sol.indices.size),
            "exponential_weight": sol.exponential_weight,
            "trace_error": float(np.linalg.norm(sol.w[(sol.x_grid.size - 1) // 2] - sol.trace)),
            "residuals": residuals,
            "pj_exp_bounds": exp_bounds,
        }
        if len(sol.bands) == 1:
            report["band_growth"] = solution_builder.band_growth(sol, bands, u)
        if sol.x_grid.size > 1:
            # inner radii are fractions of the solution radius
            report["closed_graph"] = estimate_lab.closed_graph_constant(
                sol, self.params.s2, [f * sol.radius for f in self.params.inner_radii]
            )
            report["mixed_norm"] = estimate_lab.mixed_norm_check(
                sol.w,
                self.params.s1,
                self.params.s2,
                float(sol.x_grid[1] - sol.x_grid[0]),
                float(sol.y_grid[1] - sol.y_grid[0]),
            )
        report["sobolev_multiplier_sup"] = estimate_lab.sobolev_multiplier_check(
            self.params.s1, self.params.s2, MULTIPLIER_GRID, MULTIPLIER_GRID
        )
        return [
            self.export.write_matrix("solution_w.csv", sol.w, sol.x_grid, sol.y_grid),
            self.export.write_report("solution.json", "build_solution", report),
        ]

    def _estimate_rows(self, report) -> List[Dict]:
        return [
            {"epsilon": eps, "C_eps": c, "worst_member": k}
            for eps, c, k in zip(report.epsilons, report.C_eps, report.worst_member)
        ]

    def superlog(self) -> List[Path]:
        report = estimate_lab.superlog_verdict(
            self.scenario.operator,
            self.params.family,
            self.params.epsilons,
            self._family_seed(),
        )
        return [
            self.export.write_table("superlog.csv", self._estimate_rows(report)),
            self.export.write_report("superlog.json", "superlog", report),
        ]

    def subelliptic(self) -> List[Path]:
        report = estimate_lab.subelliptic_verdict(
            self.scenario.operator, self.params.family, self.params.delta, self._family_seed()
        )
        return [
            self.export.write_table("subelliptic.csv", self._estimate_rows(report)),
            self.export.write_report("subelliptic.json", "subelliptic", report),
        ]

    def smoothing(self) -> List[Path]:
        dec = self.decomposition()
        bands = spectral_calculus.build_bands(dec)
        family = family_factory.build(
            self.params.family, dec.source.grid, 1, self._family_seed()
        )
        indices = self.params.bands
        if indices is None:
            indices = [j for j in bands.indices if bands.band_members(j).size > 0]
        report = estimate_lab.smoothing_ratio(
            dec.source, indices, self.params.s2, family, bands
        )
        return [
            self.export.write_table("smoothing.csv", [row.model_dump() for row in report.bands]),
            self.export.write_report("smoothing.json", "smoothing", report),
        ]

    def interpolate(self) -> List[Path]:
        grid = self.operator().grid
        rng = self._rng()
        s2 = self.params.s2
        rows = []
        for index in range(self.params.sequence_count):
            seq = interpolation.random_sequence(grid, self.params.sequence_bands, s2, rng)
            for eps in self.params.epsilons:
                checks = [("low", interpolation.low_band_inequality(seq, s2, eps))]
                checks += [
                    ("high", interpolation.high_band_inequality(seq, s2, eps, convention))
                    for convention in CONVENTIONS
                ]
                for side, check in checks:
                    rows.append(
                        {
                            "sequence": index,
                            "epsilon": eps,
                            "side": side,
                            "convention": check.convention,
                            "lhs": check.lhs,
                            "rhs": check.rhs,
                            "ratio": check.ratio,
                        }
                    )
        summary = {
            "s2": s2,
            "epsilons": self.params.epsilons,
            "sequences": self.params.sequence_count,
            "checks": len(rows),
            "max_ratio": {
                side: max(r["ratio"] for r in rows if r["side"] == side) for side in ("low", "high")
            },
        }
        return [
            self.export.write_table("interpolation.csv", rows),
            self.export.write_report("interpolation.json", "interpolate", summary),
        ]

    def assemble(self) -> List[Path]:
        dec = self.decomposition()
        u = self.probe(dec)
        if self.params.u.kind != "gaussian":
            # random and eigenvector inputs do not vanish on the outer unknowns
            u[[0, -1]] = 0.0
        reports = [
            interpolation.assemble_theorem(u, dec.source, self.params.s2, eps)
            for eps in sorted(self.params.epsilons, reverse=True)
        ]
        contributions = [
            {"epsilon": report.epsilon, **row}
            for report in reports
            for row in report.band_contributions
        ]
        measured = [report.measured_C for report in reports]
        summary = {
            "reports": reports,
            "measured_C_nondecreasing": all(b >= a for a, b in zip(measured, measured[1:])),
        }
        return [
            self.export.write_table("assembly_bands.csv", contributions),
            self.export.write_report("assembly.json", "assemble", summary),
        ]

    def full_report(self) -> List[Path]:
        paths: List[Path] = []
        for step in (
            self.spectrum,
            self.bands,
            self.ode_sweep,
            self.build_solution,
            self.superlog,
            self.assemble,
        ):
            paths.extend(step())
        return paths

    def _family_seed(self) -> int:
        seed = self.params.family.seed
        return self.seed if seed is None else int(seed)

    def handlers(self) -> Dict[Task, Callable[[], List[Path]]]:
        return {
            Task.SPECTRUM: self.spectrum,
            Task.BANDS: self.bands,
            Task.ODE_SWEEP: self.ode_sweep,
            Task.BUILD_SOLUTION: self.build_solution,
            Task.SUPERLOG: self.superlog,
            Task.SUBELLIPTIC: self.subelliptic,
            Task.SMOOTHING: self.smoothing,
            Task.INTERPOLATE: self.interpolate,
            Task.ASSEMBLE: self.assemble,
            Task.FULL_REPORT: self.full_report,
        }

    def run(self, task: Optional[Task] = None) -> List[Path]:
        task = task or self.scenario.task
        logger.info(f"Running '{task.value}' for scenario '{self.scenario.name}' (seed {self.seed})")
        return self.handlers()[task]()
