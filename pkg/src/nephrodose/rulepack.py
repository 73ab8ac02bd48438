"""Dose-adjustment knowledge base: rule packs, eGFR bands and structural validation."""

from __future__ import annotations

import math
import operator
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Iterable

INF = math.inf


class DoseUnit(str, Enum):
    MG = "mg"
    G = "g"
    MIU = "MIU"
    MG_PER_KG = "mg_per_kg"


class Covariate(str, Enum):
    WEIGHT_KG = "weight_kg"
    SYSTOLIC_BP_MMHG = "systolic_bp_mmHg"
    PLASMA_CONCENTRATION_MG_PER_L = "plasma_concentration_mg_per_l"
    TREATMENT_DURATION_DAYS = "treatment_duration_days"


class Comparator(str, Enum):
    LT = "<"
    LE = "<="
    GT = ">"
    GE = ">="


_COMPARE: dict[Comparator, Callable[[float, float], bool]] = {
    Comparator.LT: operator.lt,
    Comparator.LE: operator.le,
    Comparator.GT: operator.gt,
    Comparator.GE: operator.ge,
}


@dataclass(frozen=True, order=True)
class CovariateGuard:
    """A predicate on one patient covariate, e.g. ``plasma_concentration_mg_per_l <= 4``."""

    covariate: Covariate
    comparator: Comparator
    threshold: float

    def holds(self, value: float) -> bool:
        return _COMPARE[self.comparator](value, self.threshold)

    def __str__(self) -> str:
        return f"{self.covariate.value} {self.comparator.value} {_fmt(self.threshold)}"


def _guard_key(guard: CovariateGuard) -> tuple[str, str, float]:
    return (guard.covariate.value, guard.comparator.value, guard.threshold)


@dataclass(frozen=True)
class EgfrBandRule:
    """Dose constraints for one half-open eGFR interval ``[egfr_low, egfr_high)``.

    Guards are stored in canonical order so that two rules with the same guard
    set compare equal regardless of declaration order.
    """

    rule_id: str
    egfr_low: float
    egfr_high: float
    recommendation: str
    max_daily_dose: float | None = None
    min_daily_dose: float | None = None
    max_frequency_per_day: int | None = None
    guards: tuple[CovariateGuard, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "guards", tuple(sorted(self.guards, key=_guard_key)))

    def contains(self, egfr: float) -> bool:
        return self.egfr_low <= egfr < self.egfr_high

    @property
    def interval(self) -> str:
        return f"[{_fmt(self.egfr_low)}, {_fmt(self.egfr_high)})"


@dataclass(frozen=True)
class MedicationRuleSet:
    medication_code: str
    medication_name: str
    dose_unit: DoseUnit
    bands: tuple[EgfrBandRule, ...] = ()


@dataclass(frozen=True)
class RulePack:
    name: str
    version: str
    rulesets: tuple[MedicationRuleSet, ...] = ()

    def ruleset(self, medication_code: str) -> MedicationRuleSet | None:
        """Return the ruleset for ``medication_code`` (first match), or None."""
        for rs in self.rulesets:
            if rs.medication_code == medication_code:
                return rs
        return None

    def rule_ids(self) -> list[str]:
        return [band.rule_id for rs in self.rulesets for band in rs.bands]

    @property
    def rule_count(self) -> int:
        return sum(len(rs.bands) for rs in self.rulesets)


class DefectKind(str, Enum):
    OVERLAPPING_BANDS = "OverlappingBands"
    COVERAGE_GAP = "CoverageGap"
    INVERTED_DOSE_RANGE = "InvertedDoseRange"
    DUPLICATE_MEDICATION = "DuplicateMedication"
    DUPLICATE_RULE_ID = "DuplicateRuleId"
    EMPTY_BAND_CONSTRAINT = "EmptyBandConstraint"
    INVALID_BAND_BOUNDS = "InvalidBandBounds"
    INVALID_VALUE = "InvalidValue"


@dataclass(frozen=True)
class Finding:
    subject: str
    kind: DefectKind
    message: str

    def __str__(self) -> str:
        return f"{self.kind.value} [{self.subject}]: {self.message}"


@dataclass
class ValidationReport:
    findings: list[Finding] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.findings

    def kinds(self) -> set[DefectKind]:
        return {f.kind for f in self.findings}

    def __len__(self) -> int:
        return len(self.findings)

    def __iter__(self):
        return iter(self.findings)


class NoBandMatch(LookupError):
    """No band contains the eGFR. Only reachable on packs that fail validation."""


def _fmt(x: float) -> str:
    if math.isinf(x):
        return "inf"
    if float(x).is_integer() and abs(x) < 1e15:
        return str(int(x))
    return repr(float(x))


def _is_valid_number(x: float | None) -> bool:
    return x is None or (math.isfinite(x) and x >= 0)


def _band_findings(rs: MedicationRuleSet) -> Iterable[Finding]:
    code = rs.medication_code
    for band in rs.bands:
        rid = band.rule_id
        if not (band.egfr_low >= 0 and math.isfinite(band.egfr_low)) or math.isnan(band.egfr_high):
            yield Finding(rid, DefectKind.INVALID_BAND_BOUNDS,
                          f"band {band.interval} must start at a finite eGFR >= 0")
        elif not band.egfr_low < band.egfr_high:
            yield Finding(rid, DefectKind.INVALID_BAND_BOUNDS,
                          f"band {band.interval} is empty (low must be < high)")
        if band.max_daily_dose is None and band.min_daily_dose is None:
            yield Finding(rid, DefectKind.EMPTY_BAND_CONSTRAINT,
                          "band declares neither max_daily nor min_daily")
        for label, value in (("max_daily", band.max_daily_dose), ("min_daily", band.min_daily_dose)):
            if not _is_valid_number(value):
                yield Finding(rid, DefectKind.INVALID_VALUE, f"{label} {value} must be finite and >= 0")
        if (band.max_daily_dose is not None and band.min_daily_dose is not None
                and band.min_daily_dose > band.max_daily_dose):
            yield Finding(rid, DefectKind.INVERTED_DOSE_RANGE,
                          f"min_daily {_fmt(band.min_daily_dose)} > max_daily {_fmt(band.max_daily_dose)}")
        if band.max_frequency_per_day is not None and band.max_frequency_per_day < 1:
            yield Finding(rid, DefectKind.INVALID_VALUE, "max_freq must be >= 1")
        for guard in band.guards:
            if not _is_valid_number(guard.threshold):
                yield Finding(rid, DefectKind.INVALID_VALUE,
                              f"guard threshold in '{guard}' must be finite and >= 0")

    well_formed = [b for b in rs.bands
                   if b.egfr_low >= 0 and math.isfinite(b.egfr_low) and b.egfr_low < b.egfr_high]
    # Pairwise so that the reported pairs do not depend on declaration order.
    ordered = sorted(well_formed, key=lambda b: (b.egfr_low, b.egfr_high, b.rule_id))
    for i, a in enumerate(ordered):
        for b in ordered[i + 1:]:
            if b.egfr_low >= a.egfr_high:
                break
            yield Finding(code, DefectKind.OVERLAPPING_BANDS,
                          f"{a.rule_id} {a.interval} overlaps {b.rule_id} {b.interval}")

    reach = 0.0
    for band in ordered:
        if band.egfr_low > reach:
            yield Finding(code, DefectKind.COVERAGE_GAP,
                          f"no band covers [{_fmt(reach)}, {_fmt(band.egfr_low)})")
        reach = max(reach, band.egfr_high)
    if reach != INF:
        yield Finding(code, DefectKind.COVERAGE_GAP, f"no band covers [{_fmt(reach)}, inf)")


def validate_pack(pack: RulePack) -> ValidationReport:
    """Check every structural invariant of ``pack`` and collect the defects found.

    An empty report means each medication's bands partition ``[0, inf)``, dose
    ranges are consistent, and medication codes and rule ids are unique.
    """
    findings: list[Finding] = []
    codes = Counter(rs.medication_code for rs in pack.rulesets)
    for code, n in sorted(codes.items()):
        if n > 1:
            findings.append(Finding(code, DefectKind.DUPLICATE_MEDICATION,
                                    f"medication declared {n} times"))
    ids = Counter(pack.rule_ids())
    for rid, n in sorted(ids.items()):
        if n > 1:
            findings.append(Finding(rid, DefectKind.DUPLICATE_RULE_ID, f"rule id used {n} times"))
    for rs in pack.rulesets:
        findings.extend(_band_findings(rs))
    return ValidationReport(findings)


def find_band(ruleset: MedicationRuleSet, egfr: float) -> EgfrBandRule:
    if not (math.isfinite(egfr) and egfr >= 0):
        raise ValueError(f"eGFR must be finite and >= 0, got {egfr!r}")
    for band in ruleset.bands:
        if band.contains(egfr):
            return band
    raise NoBandMatch(f"{ruleset.medication_code}: no band contains eGFR {egfr}")
