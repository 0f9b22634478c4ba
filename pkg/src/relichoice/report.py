"""One-call analysis of a system and its JSON/text renderings."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

from relichoice import analysis
from relichoice.analysis import RteResult, ShapeUnsupported
from relichoice.model import SystemSpec, shape_of


@dataclass(frozen=True)
class AnalysisReport:
    shape: str
    formula_mode: str
    mttf: float
    mtbf: float
    mttr: float
    sfr_at: tuple[tuple[float, float], ...]
    pdf_at: tuple[tuple[float, float], ...]
    rte: RteResult
    notes: tuple[str, ...] = field(default=(), compare=False)

    def to_json_dict(self) -> dict:
        rte = {
            "rho": self.rte.rho,
            "reliable_until": self.rte.reliable_until,
            "method": self.rte.method,
        }
        q = self.rte.quadratic_detail
        if q is not None and q.real:
            rte["quadratic"] = {"Q": q.Q, "t1": q.t1, "t2": q.t2}
        return {
            "shape": self.shape,
            "mode": self.formula_mode,
            "mttf": self.mttf,
            "mtbf": self.mtbf,
            "mttr": self.mttr,
            "sfr": [{"t": t, "lambda_eq": v} for t, v in self.sfr_at],
            "rte": rte,
            "pdf": [{"t": t, "f": v} for t, v in self.pdf_at],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), indent=2) + "\n"

    def to_text(self) -> str:
        rows = [
            ("shape", self.shape),
            ("mode", self.formula_mode),
            ("MTTF", f"{self.mttf:.10g}"),
            ("MTBF", f"{self.mtbf:.10g}"),
            ("MTTR", f"{self.mttr:.10g}"),
            (
                f"RTE (rho={self.rte.rho:g})",
                f"{self.rte.reliable_until:.10g}  [{self.rte.method}]",
            ),
        ]
        q = self.rte.quadratic_detail
        if q is not None:
            rows.append(
                ("quadratic Q", f"{q.Q:.6g}" + (f"  t2={q.t2:.10g}  t1={q.t1:.10g}" if q.real else "  (no real roots)"))
            )
        for t, v in self.sfr_at:
            rows.append((f"SFR at T={t:g}", f"{v:.10g}"))
        for t, v in self.pdf_at:
            rows.append((f"pdf at T={t:g}", f"{v:.10g}"))
        width = max(len(k) for k, _ in rows)
        lines = [f"{k:<{width}}  {v}" for k, v in rows]
        lines += [f"note: {n}" for n in self.notes]
        return "\n".join(lines) + "\n"


def analyze(
    spec: SystemSpec,
    mode: str = "numeric",
    rho: float = 0.9,
    times: Sequence[float] | None = None,
    rte_method: str = "auto",
) -> AnalysisReport:
    """Compute every degradation parameter of ``spec``.

    In paper mode, shapes without closed forms fall back to numeric mode for
    the whole report; ``formula_mode`` names the mode actually used and
    ``notes`` says why.

    Args:
        times: evaluation times for the failure rate and density; defaults to
            the latest installation time.
    """
    shape = shape_of(spec.root)
    notes: list[str] = []
    used = mode
    if mode == "paper":
        try:
            mtbf = analysis.mtbf(spec, "paper")
            mttf = analysis.mttf(spec, "paper")
        except ShapeUnsupported as exc:
            notes.append(f"{exc}; computed numerically")
            used = "numeric"
    if used == "numeric":
        mtbf = analysis.mtbf(spec, "numeric")
        mttf = analysis.mttf(spec, "numeric")
    mttr = analysis.mttr(spec, used)
    if times is None:
        times = [max(c.t0 for c in spec.leaves())]
    sfr_at = tuple((float(t), analysis.sfr(spec, t)) for t in times)
    pdf_at = tuple((float(t), analysis.pdf(spec, t)) for t in times)
    rte = analysis.rte(spec, rho, rte_method, used)
    notes.extend(rte.notes)
    return AnalysisReport(shape, used, mttf, mtbf, mttr, sfr_at, pdf_at, rte, tuple(notes))
