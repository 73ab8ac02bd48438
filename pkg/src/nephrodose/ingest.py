"""Prescription-log and verdict-log CSV files.

Both files use the comma dialect with double-quote escaping, UTF-8, ISO-8601
dates and '.' decimals; an empty field means the optional value is absent.
Row numbers in error reports count data rows from 1 (the header is row 0).
"""

from __future__ import annotations

import csv
import math
import re
from dataclasses import dataclass, field
from datetime import date
from os import PathLike
from typing import IO, Iterable, Iterator, Sequence, Union

from .engine import DoseRegimen, ReferenceVerdict, Verdict, VerdictKind, VerdictRecord
from .renal import Sex
from .rulepack import DoseUnit

Source = Union[str, PathLike, IO[str]]

PRESCRIPTION_COLUMNS = (
    "patient_id", "encounter_id", "birth_date", "sex", "department",
    "medication_code", "medication_name", "dose_amount", "dose_unit", "frequency_per_day",
    "start_date", "end_date", "egfr", "serum_creatinine", "weight", "systolic_bp",
    "plasma_concentration", "reference_verdict",
)
REQUIRED_PRESCRIPTION_COLUMNS = (
    "patient_id", "encounter_id", "medication_code", "dose_amount", "dose_unit", "frequency_per_day",
)
VERDICT_COLUMNS = (
    "patient_id", "encounter_id", "medication_code", "engine_verdict", "alert_kind", "rule_id",
    "recommendation", "reference_verdict", "egfr", "daily_dose_mg", "indeterminate_reason",
)

_UNIT_TOKENS = {"mg": DoseUnit.MG, "g": DoseUnit.G, "MIU": DoseUnit.MIU,
                "mg/kg": DoseUnit.MG_PER_KG, "mg_per_kg": DoseUnit.MG_PER_KG}
_REGIMEN_RE = re.compile(r"\s*(\d+(?:\.\d+)?)\s*(mg/kg|mg|g|MIU)\s+x\s*(\d+)\s*\Z")


class FileUnreadable(OSError):
    pass


class FileUnwritable(OSError):
    pass


class MissingHeader(ValueError):
    pass


class RegimenParseError(ValueError):
    def __init__(self, fragment: str, message: str = "expected '<number><unit> x<int>'"):
        self.fragment = fragment
        super().__init__(f"{message}: {fragment!r}")


@dataclass(frozen=True)
class PrescriptionLine:
    """One drug line of a medication order. ``regimen is None`` marks a conditional line."""

    patient_id: str
    encounter_id: str
    medication_code: str
    medication_name: str = ""
    regimen: DoseRegimen | None = None
    birth_date: date | None = None
    sex: Sex | None = None
    department: str = ""
    start_date: date | None = None
    end_date: date | None = None
    egfr: float | None = None
    serum_creatinine: float | None = None
    weight: float | None = None
    systolic_bp: float | None = None
    plasma_concentration: float | None = None
    reference_verdict: ReferenceVerdict | None = None
    treatment_duration_override: int | None = field(default=None, repr=False)

    def __post_init__(self) -> None:
        if self.start_date and self.end_date and self.start_date > self.end_date:
            raise ValueError(f"start date {self.start_date} is after end date {self.end_date}")

    @property
    def conditional(self) -> bool:
        return self.regimen is None

    @property
    def treatment_duration_days(self) -> int | None:
        if self.treatment_duration_override is not None:
            return self.treatment_duration_override
        if self.start_date is None or self.end_date is None:
            return None
        return (self.end_date - self.start_date).days + 1


@dataclass(frozen=True)
class RowError:
    row_number: int
    message: str


@dataclass(frozen=True)
class ExclusionSummary:
    total: int
    conditional_excluded: int
    unanalyzed_excluded: int
    analyzed: int

    def pct(self, count: int) -> float | None:
        return 100.0 * count / self.total if self.total else None

    @property
    def conditional_pct(self) -> float | None:
        return self.pct(self.conditional_excluded)

    @property
    def unanalyzed_pct(self) -> float | None:
        return self.pct(self.unanalyzed_excluded)

    @property
    def analyzed_pct(self) -> float | None:
        return self.pct(self.analyzed)


def parse_regimen(text: str) -> DoseRegimen:
    """Parse ``"500mg x3"`` style regimens.

    >>> parse_regimen("3mg/kg x1")
    DoseRegimen(amount=3.0, unit=<DoseUnit.MG_PER_KG: 'mg_per_kg'>, frequency_per_day=1)
    """
    m = _REGIMEN_RE.match(text)
    if not m:
        raise RegimenParseError(text)
    amount, unit, freq = m.groups()
    try:
        return DoseRegimen(float(amount), _UNIT_TOKENS[unit], int(freq))
    except ValueError as exc:
        raise RegimenParseError(text, str(exc)) from None


def _open_text(source: Source) -> tuple[IO[str], bool]:
    if isinstance(source, (str, PathLike)):
        try:
            return open(source, newline="", encoding="utf-8"), True
        except OSError as exc:
            raise FileUnreadable(f"cannot read {source}: {exc.strerror or exc}") from exc
    return source, False


def _opt_float(text: str, name: str, *, positive: bool = False) -> float | None:
    if text == "":
        return None
    try:
        value = float(text)
    except ValueError:
        raise ValueError(f"{name}: not a number: {text!r}") from None
    if not math.isfinite(value) or value < 0 or (positive and value == 0):
        raise ValueError(f"{name}: out of range: {text!r}")
    return value


def _opt_date(text: str, name: str) -> date | None:
    if text == "":
        return None
    try:
        return date.fromisoformat(text)
    except ValueError:
        raise ValueError(f"{name}: not an ISO date: {text!r}") from None


def _regimen_from_row(row: dict[str, str]) -> DoseRegimen | None:
    amount, unit, freq = row["dose_amount"], row["dose_unit"], row["frequency_per_day"]
    if amount == unit == freq == "":
        return None
    if "" in (amount, unit, freq):
        raise ValueError("dose_amount, dose_unit and frequency_per_day must be all present or all empty")
    try:
        value = float(amount)
    except ValueError:
        raise ValueError(f"dose_amount: not a number: {amount!r}") from None
    if unit not in _UNIT_TOKENS:
        raise ValueError(f"dose_unit: unknown unit {unit!r}")
    if not freq.isdigit():
        raise ValueError(f"frequency_per_day: not an integer: {freq!r}")
    return DoseRegimen(value, _UNIT_TOKENS[unit], int(freq))


def _line_from_row(row: dict[str, str]) -> PrescriptionLine:
    for col in ("patient_id", "encounter_id", "medication_code"):
        if row[col] == "":
            raise ValueError(f"{col} is empty")
    sex = row.get("sex", "")
    ref = row.get("reference_verdict", "")
    try:
        reference = ReferenceVerdict(ref) if ref else None
    except ValueError:
        raise ValueError(f"reference_verdict: expected ACCEPT, OVER or UNDER, got {ref!r}") from None
    return PrescriptionLine(
        patient_id=row["patient_id"],
        encounter_id=row["encounter_id"],
        medication_code=row["medication_code"],
        medication_name=row.get("medication_name", ""),
        regimen=_regimen_from_row(row),
        birth_date=_opt_date(row.get("birth_date", ""), "birth_date"),
        sex=Sex.parse(sex) if sex else None,
        department=row.get("department", ""),
        start_date=_opt_date(row.get("start_date", ""), "start_date"),
        end_date=_opt_date(row.get("end_date", ""), "end_date"),
        egfr=_opt_float(row.get("egfr", ""), "egfr"),
        serum_creatinine=_opt_float(row.get("serum_creatinine", ""), "serum_creatinine", positive=True),
        weight=_opt_float(row.get("weight", ""), "weight", positive=True),
        systolic_bp=_opt_float(row.get("systolic_bp", ""), "systolic_bp"),
        plasma_concentration=_opt_float(row.get("plasma_concentration", ""), "plasma_concentration"),
        reference_verdict=reference,
    )


def _rows(stream: IO[str], required: Sequence[str]) -> Iterator[tuple[int, dict[str, str] | str]]:
    reader = csv.reader(stream)
    header = next(reader, None)
    if header is None:
        raise MissingHeader("file is empty; a header row is required")
    header = [h.strip().lstrip("﻿") for h in header]
    missing = [c for c in required if c not in header]
    if missing:
        raise MissingHeader(f"header lacks required column(s): {', '.join(missing)}")
    n = 0
    for raw in reader:
        if not raw:
            continue
        n += 1
        if len(raw) != len(header):
            yield n, f"expected {len(header)} fields, found {len(raw)}"
        else:
            yield n, dict(zip(header, raw))


def parse_prescription_log(source: Source) -> tuple[list[PrescriptionLine], list[RowError]]:
    """Read a prescription log; malformed rows are reported and skipped, never fatal."""
    stream, owned = _open_text(source)
    lines: list[PrescriptionLine] = []
    errors: list[RowError] = []
    try:
        for n, row in _rows(stream, REQUIRED_PRESCRIPTION_COLUMNS):
            if isinstance(row, str):
                errors.append(RowError(n, row))
                continue
            try:
                lines.append(_line_from_row(row))
            except ValueError as exc:
                errors.append(RowError(n, str(exc)))
    finally:
        if owned:
            stream.close()
    return lines, errors


def apply_exclusions(lines: Iterable[PrescriptionLine]) -> tuple[list[PrescriptionLine], ExclusionSummary]:
    """Drop conditional lines, then lines no pharmacist analyzed."""
    total = conditional = unanalyzed = 0
    kept = []
    for line in lines:
        total += 1
        if line.conditional:
            conditional += 1
        elif line.reference_verdict is None:
            unanalyzed += 1
        else:
            kept.append(line)
    return kept, ExclusionSummary(total, conditional, unanalyzed, len(kept))


def _fmt_float(x: float | None) -> str:
    return "" if x is None else repr(float(x))


_ENGINE_CODES = {VerdictKind.ACCEPT: "ACCEPT", VerdictKind.OVER: "OVER",
                 VerdictKind.UNDER: "UNDER", VerdictKind.INDETERMINATE: "INDETERMINATE"}
_ENGINE_KINDS = {v: k for k, v in _ENGINE_CODES.items()}
_ALERT_KINDS = {VerdictKind.OVER: "exceeds_max_daily_dose", VerdictKind.UNDER: "under_dose"}


def verdict_row(rec: VerdictRecord) -> dict[str, str]:
    v = rec.verdict
    return {
        "patient_id": rec.patient_id,
        "encounter_id": rec.encounter_id,
        "medication_code": rec.medication_code,
        "engine_verdict": _ENGINE_CODES[v.kind],
        "alert_kind": _ALERT_KINDS.get(v.kind, ""),
        "rule_id": v.rule_id or "",
        "recommendation": v.recommendation or "",
        "reference_verdict": rec.reference_verdict.value if rec.reference_verdict else "",
        "egfr": _fmt_float(v.egfr),
        "daily_dose_mg": _fmt_float(v.daily_dose),
        "indeterminate_reason": v.indeterminate_reason or "",
    }


def write_verdict_log(records: Iterable[VerdictRecord], target: str | PathLike | IO[str]) -> None:
    def _write(stream: IO[str]) -> None:
        writer = csv.DictWriter(stream, fieldnames=VERDICT_COLUMNS)
        writer.writeheader()
        for rec in records:
            writer.writerow(verdict_row(rec))

    if isinstance(target, (str, PathLike)):
        try:
            with open(target, "w", newline="", encoding="utf-8") as fh:
                _write(fh)
        except OSError as exc:
            raise FileUnwritable(f"cannot write {target}: {exc.strerror}") from exc
    else:
        _write(target)


def _record_from_row(row: dict[str, str]) -> VerdictRecord:
    code = row["engine_verdict"]
    if code not in _ENGINE_KINDS:
        raise ValueError(f"engine_verdict: unknown value {code!r}")
    ref = row["reference_verdict"]
    kind = _ENGINE_KINDS[code]
    verdict = Verdict(
        kind=kind,
        rule_id=row["rule_id"] or None,
        # Alerts always carry a recommendation, possibly an empty one.
        recommendation=row["recommendation"] if kind.fired else (row["recommendation"] or None),
        indeterminate_reason=row.get("indeterminate_reason") or None,
        egfr=_opt_float(row["egfr"], "egfr"),
        daily_dose=_opt_float(row["daily_dose_mg"], "daily_dose_mg"),
    )
    return VerdictRecord(
        patient_id=row["patient_id"],
        encounter_id=row["encounter_id"],
        medication_code=row["medication_code"],
        verdict=verdict,
        reference_verdict=ReferenceVerdict(ref) if ref else None,
    )


def read_verdict_log(source: Source) -> list[VerdictRecord]:
    """Read a verdict log written by :func:`write_verdict_log`.

    Unlike prescription logs this file is machine-written, so any bad row is an error.
    """
    stream, owned = _open_text(source)
    records = []
    try:
        for n, row in _rows(stream, VERDICT_COLUMNS[:-1]):
            if isinstance(row, str):
                raise ValueError(f"verdict log row {n}: {row}")
            try:
                records.append(_record_from_row(row))
            except ValueError as exc:
                raise ValueError(f"verdict log row {n}: {exc}") from None
    finally:
        if owned:
            stream.close()
    return records


def write_prescription_log(lines: Iterable[PrescriptionLine], target: IO[str]) -> None:
    writer = csv.writer(target)
    writer.writerow(PRESCRIPTION_COLUMNS)
    for line in lines:
        r = line.regimen
        writer.writerow([
            line.patient_id, line.encounter_id,
            line.birth_date.isoformat() if line.birth_date else "",
            line.sex.value if line.sex else "", line.department,
            line.medication_code, line.medication_name,
            _num(r.amount) if r else "", r.unit.value if r else "", r.frequency_per_day if r else "",
            line.start_date.isoformat() if line.start_date else "",
            line.end_date.isoformat() if line.end_date else "",
            _num(line.egfr), _num(line.serum_creatinine), _num(line.weight),
            _num(line.systolic_bp), _num(line.plasma_concentration),
            line.reference_verdict.value if line.reference_verdict else "",
        ])


def _num(x: float | None) -> str:
    if x is None:
        return ""
    return str(int(x)) if float(x).is_integer() else repr(float(x))
