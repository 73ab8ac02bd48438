"""Per-line dose checking against a rule pack."""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import TYPE_CHECKING, Iterable, Sequence

from .renal import InvalidInput, MissingEgfr, resolve_egfr
from .rulepack import Covariate, DoseUnit, RulePack, find_band

if TYPE_CHECKING:
    from .ingest import PrescriptionLine


class MissingWeight(LookupError):
    pass


class UnitMismatch(ValueError):
    pass


@dataclass(frozen=True)
class DoseRegimen:
    amount: float
    unit: DoseUnit
    frequency_per_day: int

    def __post_init__(self) -> None:
        if not (math.isfinite(self.amount) and self.amount > 0):
            raise ValueError(f"dose amount must be finite and positive, got {self.amount!r}")
        if int(self.frequency_per_day) != self.frequency_per_day or self.frequency_per_day < 1:
            raise ValueError(f"frequency must be an integer >= 1, got {self.frequency_per_day!r}")

    def __str__(self) -> str:
        unit = "mg/kg" if self.unit is DoseUnit.MG_PER_KG else self.unit.value
        amount = int(self.amount) if float(self.amount).is_integer() else self.amount
        return f"{amount}{unit} x{self.frequency_per_day}"


_MASS = "mass"
_FAMILY = {DoseUnit.MG: _MASS, DoseUnit.G: _MASS, DoseUnit.MIU: "MIU", DoseUnit.MG_PER_KG: "per_kg"}


def daily_dose(regimen: DoseRegimen, weight: float | None = None,
               target: DoseUnit = DoseUnit.MG) -> float:
    """Total dose per day, expressed in the family of ``target``.

    mg and g targets yield mg/day, MIU yields MIU/day and mg_per_kg yields
    mg/kg/day. Weight is needed whenever a per-kg amount meets a mass limit
    or vice versa.
    """
    per_day = regimen.amount * regimen.frequency_per_day
    source = _FAMILY[regimen.unit]
    wanted = _FAMILY[target]
    if regimen.unit is DoseUnit.G:
        per_day *= 1000.0
    if source == wanted:
        return per_day
    if "MIU" in (source, wanted):
        raise UnitMismatch(f"cannot compare a {regimen.unit.value} dose with a {target.value} limit")
    if weight is None:
        raise MissingWeight(f"{regimen.unit.value} dose against a {target.value} limit needs weight")
    if not (math.isfinite(weight) and weight > 0):
        raise ValueError(f"weight must be positive, got {weight!r}")
    return per_day * weight if source == "per_kg" else per_day / weight


class VerdictKind(str, Enum):
    ACCEPT = "Accept"
    OVER = "AlertOverMaxDailyDose"
    UNDER = "AlertUnderDose"
    INDETERMINATE = "Indeterminate"

    @property
    def fired(self) -> bool:
        return self in (VerdictKind.OVER, VerdictKind.UNDER)


class ReferenceVerdict(str, Enum):
    ACCEPT = "ACCEPT"
    OVER = "OVER"
    UNDER = "UNDER"

    @property
    def fired(self) -> bool:
        return self is not ReferenceVerdict.ACCEPT


# Indeterminate reasons; MissingCovariate carries the covariate as "MissingCovariate(<name>)".
CONDITIONAL_LINE = "ConditionalLine"
MISSING_EGFR = "MissingEgfr"
MISSING_WEIGHT = "MissingWeight"
NO_RULE_FOR_MEDICATION = "NoRuleForMedication"
UNIT_MISMATCH = "UnitMismatch"


def missing_covariate(covariate: Covariate) -> str:
    return f"MissingCovariate({covariate.value})"


@dataclass(frozen=True)
class Verdict:
    kind: VerdictKind
    rule_id: str | None = None
    recommendation: str | None = None
    indeterminate_reason: str | None = None
    egfr: float | None = None
    daily_dose: float | None = None

    def __post_init__(self) -> None:
        if self.kind.fired and (self.rule_id is None or self.recommendation is None):
            raise ValueError("alert verdicts need a rule id and a recommendation")
        if self.kind is VerdictKind.ACCEPT and self.rule_id is None:
            raise ValueError("accept verdicts need the rule id of the matched band")
        if (self.kind is VerdictKind.INDETERMINATE) != (self.indeterminate_reason is not None):
            raise ValueError("exactly the indeterminate verdicts carry a reason")

    @property
    def fired(self) -> bool:
        return self.kind.fired


@dataclass(frozen=True)
class VerdictRecord:
    """Engine verdict for one log line, paired with the pharmacist's verdict when there is one."""

    patient_id: str
    encounter_id: str
    medication_code: str
    verdict: Verdict
    reference_verdict: ReferenceVerdict | None = None

    @property
    def scorable(self) -> bool:
        return self.reference_verdict is not None and self.verdict.kind is not VerdictKind.INDETERMINATE


def _covariate_value(line: "PrescriptionLine", covariate: Covariate) -> float | None:
    if covariate is Covariate.WEIGHT_KG:
        return line.weight
    if covariate is Covariate.SYSTOLIC_BP_MMHG:
        return line.systolic_bp
    if covariate is Covariate.PLASMA_CONCENTRATION_MG_PER_L:
        return line.plasma_concentration
    return line.treatment_duration_days


def _indeterminate(reason: str, **context) -> Verdict:
    return Verdict(VerdictKind.INDETERMINATE, indeterminate_reason=reason, **context)


def evaluate_line(pack: RulePack, line: "PrescriptionLine") -> Verdict:
    """Check one prescription line; missing clinical data yields an Indeterminate verdict."""
    if line.regimen is None:
        return _indeterminate(CONDITIONAL_LINE)
    ruleset = pack.ruleset(line.medication_code)
    if ruleset is None:
        return _indeterminate(NO_RULE_FOR_MEDICATION)
    try:
        egfr = resolve_egfr(line)
    except (MissingEgfr, InvalidInput):
        return _indeterminate(MISSING_EGFR)

    band = find_band(ruleset, egfr)
    unmet = []
    for guard in band.guards:
        value = _covariate_value(line, guard.covariate)
        if value is None:
            return _indeterminate(missing_covariate(guard.covariate), rule_id=band.rule_id, egfr=egfr)
        if not guard.holds(value):
            unmet.append(guard)

    try:
        dose = daily_dose(line.regimen, line.weight, ruleset.dose_unit)
    except MissingWeight:
        return _indeterminate(MISSING_WEIGHT, rule_id=band.rule_id, egfr=egfr)
    except UnitMismatch:
        return _indeterminate(UNIT_MISMATCH, rule_id=band.rule_id, egfr=egfr)

    context = dict(rule_id=band.rule_id, egfr=egfr, daily_dose=dose)
    # daily_dose reports grams as mg; bring g-unit limits onto the same scale.
    scale = 1000.0 if ruleset.dose_unit is DoseUnit.G else 1.0
    max_dose = None if band.max_daily_dose is None else band.max_daily_dose * scale
    min_dose = None if band.min_daily_dose is None else band.min_daily_dose * scale
    if max_dose is not None and dose > max_dose:
        return Verdict(VerdictKind.OVER, recommendation=band.recommendation, **context)
    if (band.max_frequency_per_day is not None
            and line.regimen.frequency_per_day > band.max_frequency_per_day):
        rec = (f"{band.recommendation} (at most {band.max_frequency_per_day} "
               f"administrations per day, prescribed {line.regimen.frequency_per_day})")
        return Verdict(VerdictKind.OVER, recommendation=rec, **context)
    if min_dose is not None and dose < min_dose:
        return Verdict(VerdictKind.UNDER, recommendation=band.recommendation, **context)
    if unmet:
        conditions = "; ".join(str(g) for g in unmet)
        rec = f"dose within range but guard not met ({conditions}): {band.recommendation}"
        return Verdict(VerdictKind.ACCEPT, recommendation=rec, **context)
    return Verdict(VerdictKind.ACCEPT, **context)


def evaluate_log(pack: RulePack, lines: Iterable["PrescriptionLine"]) -> list[VerdictRecord]:
    return [
        VerdictRecord(
            patient_id=line.patient_id,
            encounter_id=line.encounter_id,
            medication_code=line.medication_code,
            verdict=evaluate_line(pack, line),
            reference_verdict=line.reference_verdict,
        )
        for line in lines
    ]


def count_kinds(records: Sequence[VerdictRecord]) -> dict[VerdictKind, int]:
    counts = {kind: 0 for kind in VerdictKind}
    for rec in records:
        counts[rec.verdict.kind] += 1
    return counts
