"""Five-method comparison: LQR against the guaranteed cost syntheses."""

from dataclasses import dataclass
from typing import Callable, List, Optional, TextIO
import csv
import logging

from ..exceptions import AssumptionError, GccError, SynthesisInfeasibleError
from ..model.system import CostFunctional, UncertainSystem
from ..monitoring.metrics import MetricsCollector
from ..sdp.solver import SolverOptions
from ..simulation.montecarlo import SimConfig, run
from .certify import certify
from .gcc import GccSynthesizer
from .lqr import lqr
from .result import SynthesisOptions, SynthesisResult

CSV_COLUMNS = ('method', 'synthesis_cost', 'effective_cost', 'ci95', 'certified', 'status')


@dataclass
class ComparisonRow:
    method: str
    synthesis_cost: Optional[float] = None
    effective_cost: Optional[float] = None
    ci95: Optional[float] = None
    certified: Optional[bool] = None
    bound_violations: Optional[int] = None
    status: str = "ok"
    result: Optional[SynthesisResult] = None

    def csv_row(self) -> list:
        def num(v):
            return '' if v is None else repr(float(v))
        certified = '' if self.certified is None else str(self.certified).lower()
        return [self.method, num(self.synthesis_cost), num(self.effective_cost), num(self.ci95),
                certified, self.status]


class MethodComparison:
    """
    Runs, in fixed order: LQR, Xie's unstructured GCC (Lemma path with a
    single full block), dilated unstructured, Lemma structured and dilated
    structured. A method whose precondition fails is marked n/a, one whose
    SDP has no solution is marked infeasible; any other failure is recorded
    in its row.
    """

    def __init__(self, sys: UncertainSystem, cost: CostFunctional,
                 synth_options: Optional[SynthesisOptions] = None,
                 solver_options: Optional[SolverOptions] = None,
                 sim_config: Optional[SimConfig] = None):
        self.sys = sys
        self.cost = cost
        self.synth_options = synth_options or SynthesisOptions()
        self.solver_options = solver_options or SolverOptions()
        self.sim_config = sim_config or SimConfig()
        self.logger = logging.getLogger("compare")
        self.metrics = MetricsCollector()

    def methods(self) -> List[tuple]:
        gcc = GccSynthesizer(self.sys, self.cost, self.synth_options, self.solver_options)
        return [
            ('lqr', lambda: lqr(self.sys, self.cost, self.synth_options)),
            ('xie-unstructured', lambda: gcc.synth_lemma(structured=False)),
            ('gcc-dilated-unstructured', lambda: gcc.synth_dilated(structured=False)),
            ('gcc-lemma-structured', lambda: gcc.synth_lemma(structured=True)),
            ('gcc-dilated-structured', lambda: gcc.synth_dilated(structured=True)),
        ]

    def _evaluate(self, label: str, synthesize: Callable[[], SynthesisResult]) -> ComparisonRow:
        row = ComparisonRow(method=label)
        try:
            with self.metrics.measure(label):
                result = synthesize()
        except AssumptionError as e:
            row.status = f"n/a: {e}"
            self.logger.info(f"{label}: not applicable ({e})")
            return row
        except SynthesisInfeasibleError as e:
            row.status = f"infeasible: {e}"
            self.logger.info(f"{label}: no guaranteed cost controller ({e})")
            return row
        except Exception as e:
            row.status = f"failed: {e}"
            self.logger.warning(f"{label}: synthesis failed ({e})")
            return row
        row.result = result
        row.synthesis_cost = result.synthesis_cost

        try:
            verdict = certify(self.sys, self.cost, result.k, structured=True,
                              solver_options=self.solver_options)
            row.certified = verdict.certified
        except GccError as e:
            row.certified = False
            self.logger.warning(f"{label}: certification failed ({e})")

        certificate = None if label == 'lqr' else result.p
        try:
            report = run(self.sys, self.cost, result.k, self.sim_config, certificate=certificate)
        except Exception as e:
            row.status = f"failed: simulation ({e})"
            self.logger.warning(f"{label}: simulation failed ({e})")
            return row
        row.effective_cost = report.effective_cost
        row.ci95 = report.ci95_halfwidth
        row.bound_violations = report.bound_violations
        if report.diverged_runs:
            row.status = f"ok ({report.diverged_runs} diverged runs excluded)"
        return row

    def run(self) -> List[ComparisonRow]:
        rows = [self._evaluate(label, fn) for label, fn in self.methods()]
        for record in self.metrics.records:
            self.logger.info(
                f"{record.label}: {record.wall_time:.2f}s wall, {record.rss_mb:.1f} MiB resident"
            )
        return rows


def compare(sys: UncertainSystem, cost: CostFunctional, **kwargs) -> List[ComparisonRow]:
    return MethodComparison(sys, cost, **kwargs).run()


def write_comparison_csv(rows: List[ComparisonRow], stream: TextIO) -> None:
    writer = csv.writer(stream, lineterminator='\n')
    writer.writerow(CSV_COLUMNS)
    for row in rows:
        writer.writerow(row.csv_row())

