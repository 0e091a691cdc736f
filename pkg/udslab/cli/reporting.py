"""Formatting helpers for presenting verification and run reports to users."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, TextIO, Tuple

from udslab.cli.outputs import RunSummary, TraceRow
from udslab.modules.metrics import COSINE_SENTINEL, CosineProfile, term_cosine_profile
from udslab.modules.reference_oracles import VerificationReport


class _ConsolePresenter:
    """Shared ``render``/``print`` on top of ``iter_lines``."""

    def iter_lines(self) -> Iterable[str]:  # pragma: no cover - overridden
        raise NotImplementedError

    def render(self) -> str:
        """Return the console report as a single string."""

        return "\n".join(self.iter_lines())

    def print(self, stream: Optional[TextIO] = None) -> None:
        """Write all report lines to ``stream`` (defaults to ``sys.stdout``)."""

        if stream is None:
            import sys

            stream = sys.stdout
        for line in self.iter_lines():
            print(line, file=stream)


def _number(value: Optional[float], digits: int = 4) -> str:
    if value is None:
        return "-"
    if math.isinf(value):
        return "inf"
    return f"{value:.{digits}g}"


@dataclass
class VerificationReportPresenter(_ConsolePresenter):
    """Convert a :class:`VerificationReport` into a pass/fail table."""

    report: VerificationReport

    def iter_lines(self) -> Iterable[str]:
        yield "[Verifikation] Algebraische Identitäten und geschlossene Formen:"
        if self.report.fault:
            yield f"  • Fehlerinjektion aktiv: {self.report.fault}"
        width = max((len(result.name) for result in self.report.results), default=10)
        for result in self.report.results:
            if result.diagnostic:
                status = "INFO"
            else:
                status = "OK" if result.passed else "FEHLER"
            detail = f" – {result.details}" if result.details else ""
            yield (
                f"  [{status:<6}] {result.name:<{width}}  Abweichung {result.deviation:.3e}"
                f"  (Toleranz {result.tolerance:.0e}){detail}"
            )
        failed = self.report.failed
        if not failed:
            yield "[Verifikation] Alle Prüfungen bestanden."
        else:
            names = ", ".join(result.name for result in failed)
            yield f"[Verifikation] {len(failed)} Prüfung(en) fehlgeschlagen: {names}"


@dataclass
class RunSummaryPresenter(_ConsolePresenter):
    """One line per seed plus the mean over all seeds."""

    summaries: Sequence[RunSummary]
    out_dir: Optional[Path] = None

    def iter_lines(self) -> Iterable[str]:
        if not self.summaries:
            yield "[Lauf] Keine Ergebnisse."
            return
        first = self.summaries[0]
        yield f"[Lauf] {first.method} ({first.task}, w={first.w:g}, {first.steps} Schritte):"
        for summary in self.summaries:
            yield (
                f"  • Seed {summary.seed}: log-Dichte (Proxy) {_number(summary.target_log_density_proxy)}"
                f", Identität {_number(summary.identity_preservation)}"
                f", Gradient std {_number(summary.stability.std)}"
            )
        if len(self.summaries) > 1:
            yield from self._iter_mean_lines()
        if self.out_dir is not None:
            yield f"[Lauf] Ergebnisse unter {self.out_dir}"

    # ------------------------------------------------------------------
    def _iter_mean_lines(self) -> Iterable[str]:
        proxies = [summary.target_log_density_proxy for summary in self.summaries]
        stds = [summary.stability.std for summary in self.summaries]
        line = (
            f"  • Mittel über {len(self.summaries)} Seeds: log-Dichte (Proxy) {_number(sum(proxies) / len(proxies))}"
            f", Gradient std {_number(sum(stds) / len(stds))}"
        )
        preservation = [s.identity_preservation for s in self.summaries if s.identity_preservation is not None]
        if preservation:
            line += f", Identität {_number(sum(preservation) / len(preservation))}"
        yield line


@dataclass
class TraceAnalysisPresenter(_ConsolePresenter):
    """Tail cosine profile per method after ``trace-analysis``."""

    analysis: Dict[str, Tuple[Path, List[TraceRow]]]
    tail_fraction: float = 0.2
    profiles: Dict[str, CosineProfile] = field(init=False)

    def __post_init__(self) -> None:
        self.profiles = {
            method: term_cosine_profile(rows, self.tail_fraction) for method, (_, rows) in self.analysis.items()
        }

    def iter_lines(self) -> Iterable[str]:
        yield f"[Spuranalyse] Mittlere Kosinuswerte im letzten {self.tail_fraction:.0%} der Schritte:"
        for method, (path, rows) in self.analysis.items():
            profile = self.profiles[method]
            yield (
                f"  • {method}: cos_recon {self._cosine(profile.recon)}, cos_cls {self._cosine(profile.cls)}"
                f", cos_identity {self._cosine(profile.identity)} ({len(rows)} Zeilen, {path.name})"
            )

    # ------------------------------------------------------------------
    @staticmethod
    def _cosine(value: float) -> str:
        return "-" if value == COSINE_SENTINEL else f"{value:+.3f}"


__all__ = ["RunSummaryPresenter", "TraceAnalysisPresenter", "VerificationReportPresenter"]
