"""Verification suite behind ``uds-lab verify``.

Each check runs a seeded fuzz loop against one of the reference oracles and
reports the worst deviation next to its tolerance.  ``fault`` swaps in a
deliberately broken implementation so the suite can prove it detects it.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from ...core.logging_manager import get_logger
from ..distillers import (
    DeltaTerms,
    DistillerConfig,
    Method,
    PromptPair,
    assemble_unified,
    compute_delta,
    delta_uds_edit,
)
from ..gmm_oracle import AnalyticDenoiser, Condition, ConditionRegistry, GaussianMixture
from ..schedule import NoiseSchedule, make_linear_schedule
from .module import (
    ConstantDenoiser,
    cfg_decomposition_check,
    ddim_roundtrip_check,
    pds_coeff_check,
    tweedie_gaussian_check,
    uds_rewrite_check,
    uds_rewrite_unshifted_gap,
)

FAULTS = ("uds_edit_sign",)


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    deviation: float
    tolerance: float
    details: str = ""
    diagnostic: bool = False

    def to_dict(self) -> Dict[str, object]:
        return asdict(self)


@dataclass
class VerificationReport:
    results: List[CheckResult] = field(default_factory=list)
    fault: Optional[str] = None

    @property
    def all_passed(self) -> bool:
        return all(result.passed for result in self.results)

    @property
    def failed(self) -> List[CheckResult]:
        return [result for result in self.results if not result.passed]

    def to_dict(self) -> Dict[str, object]:
        return {
            "all_passed": self.all_passed,
            "fault": self.fault,
            "checks": [result.to_dict() for result in self.results],
        }


def _sign_flipped_uds_edit(*args: object, **kwargs: object) -> DeltaTerms:
    terms = delta_uds_edit(*args, **kwargs)  # type: ignore[arg-type]
    return assemble_unified(-terms.identity, terms.cls, terms.w, terms.omega_t, slot="identity")


def default_registry() -> ConditionRegistry:
    """Two separated two-component prompts in 2D ("a" left, "b" right)."""

    return ConditionRegistry(
        prompts={
            "a": GaussianMixture.from_components([(0.5, (-2.0, 1.0), 0.3), (0.5, (-2.0, -1.0), 0.3)]),
            "b": GaussianMixture.from_components([(0.5, (2.0, 1.0), 0.3), (0.5, (2.0, -1.0), 0.3)]),
        }
    )


class VerificationSuite:
    """Runs all algebraic identities and closed-form comparisons."""

    def __init__(
        self,
        sched: Optional[NoiseSchedule] = None,
        *,
        trials: int = 1000,
        seed: int = 0,
        fault: Optional[str] = None,
        logger: Optional[logging.Logger] = None,
    ) -> None:
        if fault is not None and fault not in FAULTS:
            raise ValueError(f"Unbekannte Fehlerinjektion {fault!r} (erlaubt: {', '.join(FAULTS)})")
        self.sched = sched or make_linear_schedule()
        self.trials = int(trials)
        self.seed = int(seed)
        self.fault = fault
        self.logger = logger or get_logger("modules.reference_oracles")
        self.registry = default_registry()
        self.denoiser = AnalyticDenoiser(self.registry, self.sched)
        self.src = Condition.prompt("a")
        self.tgt = Condition.prompt("b")

    # ------------------------------------------------------------------
    def run(self) -> VerificationReport:
        report = VerificationReport(fault=self.fault)
        checks: List[Callable[[], CheckResult]] = [
            self.check_cfg_decomposition,
            self.check_pds_decomposition,
            self.check_uds_rewrite,
            self.check_uds_rewrite_counterexample,
            self.check_uds_rewrite_unshifted,
            self.check_tweedie_gaussian,
            self.check_ddim_roundtrip_dirac,
            self.check_ddim_roundtrip_mixture,
            self.check_editing_fixed_point,
            self.check_delta_reassembly,
        ]
        for check in checks:
            result = check()
            report.results.append(result)
            level = logging.INFO if result.passed else logging.ERROR
            self.logger.log(level, "Prüfung %s: %s (Abweichung %.3e, Toleranz %.1e)",
                            result.name, "OK" if result.passed else "FEHLER", result.deviation, result.tolerance)
        return report

    # ------------------------------------------------------------------
    def _rng(self, offset: int) -> np.random.Generator:
        return np.random.default_rng(self.seed + offset)

    def _random_case(self, rng: np.random.Generator, low: int = 2) -> Tuple[np.ndarray, np.ndarray, np.ndarray, int]:
        x0_src = 2.0 * rng.standard_normal(2)
        x0_tgt = 2.0 * rng.standard_normal(2)
        eps = rng.standard_normal(2)
        t = int(rng.integers(low, self.sched.T + 1))
        return x0_src, x0_tgt, eps, t

    def _uds_delta_fn(self) -> Callable[..., DeltaTerms]:
        return _sign_flipped_uds_edit if self.fault == "uds_edit_sign" else delta_uds_edit

    # ------------------------------------------------------------------
    def check_cfg_decomposition(self) -> CheckResult:
        rng = self._rng(1)
        worst = 0.0
        for _ in range(self.trials):
            _, x0, eps, t = self._random_case(rng, low=1)
            w = float(rng.uniform(0.0, 100.0))
            worst = max(worst, cfg_decomposition_check(x0, eps, t, w, self.denoiser, self.tgt, self.sched))
        return CheckResult("cfg_decomposition", worst <= 1e-12, worst, 1e-12,
                           "guided eps - eps == recon + w * cls")

    def check_pds_decomposition(self) -> CheckResult:
        rng = self._rng(2)
        worst = 0.0
        constant = ConstantDenoiser(np.array([0.3, -0.7]))
        for trial in range(self.trials):
            x0_src, x0_tgt, eps, t = self._random_case(rng)
            denoiser = constant if trial % 10 == 0 else self.denoiser
            w = float(rng.uniform(0.0, 10.0))
            worst = max(worst, pds_coeff_check(x0_src, x0_tgt, eps, t, denoiser, (self.src, self.tgt), self.sched, w=w))
        return CheckResult("pds_decomposition", worst <= 1e-10, worst, 1e-10, "z_tgt - z_src == c0 dx0 + c1 d eps")

    def check_uds_rewrite(self) -> CheckResult:
        rng = self._rng(3)
        worst = 0.0
        delta_fn = self._uds_delta_fn()
        for _ in range(self.trials):
            x0_src, x0_tgt, eps, t = self._random_case(rng, low=1)
            deviation = uds_rewrite_check(
                x0_src, x0_tgt, eps, t, self.denoiser, (self.src, self.tgt), self.sched, delta_fn=delta_fn
            )
            worst = max(worst, deviation)
        return CheckResult("uds_rewrite_identity", worst <= 1e-12, worst, 1e-12, "w = 1, Tweedie")

    def check_uds_rewrite_counterexample(self) -> CheckResult:
        x0_src, x0_tgt, eps, t = self._random_case(self._rng(4))
        deviation = uds_rewrite_check(
            x0_src, x0_tgt, eps, t, self.denoiser, (self.src, self.tgt), self.sched, w=2.0, delta_fn=self._uds_delta_fn()
        )
        return CheckResult("uds_rewrite_counterexample", deviation > 1e-6, deviation, 1e-6,
                           "w = 2 muss die Identität verletzen")

    def check_uds_rewrite_unshifted(self) -> CheckResult:
        rng = self._rng(5)
        worst = 0.0
        for _ in range(min(self.trials, 100)):
            x0_src, x0_tgt, eps, t = self._random_case(rng, low=1)
            worst = max(worst, uds_rewrite_unshifted_gap(x0_src, x0_tgt, eps, t, self.denoiser, (self.src, self.tgt), self.sched))
        return CheckResult("uds_rewrite_unshifted", True, worst, 0.0,
                           "Lücke der Koeffizientenform ohne Offset 1 (nur Diagnose)", diagnostic=True)

    def check_tweedie_gaussian(self) -> CheckResult:
        mean = np.array([2.0, -1.0])
        s2 = 0.5
        registry = ConditionRegistry(prompts={"g": GaussianMixture.single(mean, s2)})
        denoiser = AnalyticDenoiser(registry, self.sched)
        cond = Condition.prompt("g")
        worst = 0.0
        for x_value in np.linspace(-4.0, 4.0, 20):
            for t in np.linspace(1, self.sched.T, 20).astype(int):
                x_t = np.array([x_value, -x_value / 2.0])
                worst = max(worst, tweedie_gaussian_check(mean, s2, x_t, int(t), denoiser, cond, self.sched))
        return CheckResult("tweedie_gaussian", worst <= 1e-9, worst, 1e-9, "20 x 20 Raster")

    def check_ddim_roundtrip_dirac(self) -> CheckResult:
        mean = np.array([1.5, -0.5])
        registry = ConditionRegistry(prompts={"d": GaussianMixture.single(mean, 1e-20)})
        denoiser = AnalyticDenoiser(registry, self.sched)
        result = ddim_roundtrip_check(mean, 1000, 50, denoiser, Condition.prompt("d"), self.sched)
        return CheckResult("ddim_roundtrip_dirac", result.abs_error <= 1e-9, result.abs_error, 1e-9, "50 + 50 Schritte")

    def check_ddim_roundtrip_mixture(self) -> CheckResult:
        x0 = np.array([-2.0, 0.8])
        result = ddim_roundtrip_check(x0, 200, 50, self.denoiser, self.src, self.sched)
        return CheckResult("ddim_roundtrip_mixture", result.rel_error <= 1e-2, result.rel_error, 1e-2,
                           "relativer Fehler, t = 200")

    def check_editing_fixed_point(self) -> CheckResult:
        rng = self._rng(6)
        worst = 0.0
        for _ in range(min(self.trials, 200)):
            x0, _, eps, t = self._random_case(rng)
            pair = PromptPair(tgt=self.src, src=self.src)
            for method in (Method.DDS, Method.PDS, Method.UDS_EDIT):
                config = DistillerConfig.for_method(method)
                if method is Method.UDS_EDIT:
                    terms = self._uds_delta_fn()(x0, t, eps, self.denoiser, pair, config, self.sched, x0_src=x0)
                else:
                    terms = compute_delta(x0, t, eps, self.denoiser, pair, config, self.sched, x0_src=x0)
                worst = max(worst, float(np.max(np.abs(terms.total))))
        return CheckResult("editing_fixed_point", worst == 0.0, worst, 0.0, "DDS, PDS, UDS_EDIT")

    def check_delta_reassembly(self) -> CheckResult:
        rng = self._rng(7)
        worst = 0.0
        neg = Condition.negative("a")
        for trial in range(self.trials):
            x0_src, x0_tgt, eps, t = self._random_case(rng, low=60)
            method = list(Method)[trial % len(Method)]
            config = DistillerConfig.for_method(method, w=float(rng.uniform(0.0, 100.0)))
            pair = PromptPair(tgt=self.tgt, src=self.src, neg=neg)
            terms = compute_delta(x0_tgt, t, eps, self.denoiser, pair, config, self.sched, x0_src=x0_src)
            tolerance = 1e-10 if method is Method.PDS else 1e-12
            worst = max(worst, terms.reassembly_error() / terms.scale() / tolerance)
        return CheckResult("delta_reassembly", worst <= 1.0, worst, 1.0,
                           "Abweichung in Vielfachen der Toleranz (1e-12, PDS 1e-10)")


__all__ = ["CheckResult", "FAULTS", "VerificationReport", "VerificationSuite", "default_registry"]
