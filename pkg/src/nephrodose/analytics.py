"""Agreement and accuracy statistics for engine verdicts against pharmacist verdicts.

Only *scorable* records enter the statistics: those with a pharmacist verdict
and a non-Indeterminate engine verdict. Everything else is counted and
reported, never silently dropped.
"""

from __future__ import annotations

import csv
import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import IO, Iterable, Mapping, Sequence

from .engine import ReferenceVerdict, VerdictKind, VerdictRecord
from .ingest import MissingHeader, Source, _open_text

Z_95 = 1.96


def _pct(count: int, total: int) -> float | None:
    return 100.0 * count / total if total else None


def _ratio(num: int, den: int) -> float | None:
    return num / den if den else None


# --- contingency and kappa ---------------------------------------------------

@dataclass(frozen=True)
class ContingencyTable:
    """Fired / not-fired cross-tabulation; the engine is the row rater."""

    both_fired: int = 0
    engine_only: int = 0
    reference_only: int = 0
    neither: int = 0
    excluded_indeterminate: int = 0
    excluded_unpaired: int = 0

    def __post_init__(self) -> None:
        if min(self.both_fired, self.engine_only, self.reference_only, self.neither) < 0:
            raise ValueError("contingency counts must be non-negative")

    @property
    def n(self) -> int:
        return self.both_fired + self.engine_only + self.reference_only + self.neither

    @property
    def cells(self) -> tuple[int, int, int, int]:
        return (self.both_fired, self.engine_only, self.reference_only, self.neither)

    def transposed(self) -> "ContingencyTable":
        return ContingencyTable(self.both_fired, self.reference_only, self.engine_only, self.neither)


def contingency(records: Iterable[VerdictRecord]) -> ContingencyTable:
    cells = [0, 0, 0, 0]
    indeterminate = unpaired = 0
    for rec in records:
        if rec.reference_verdict is None:
            unpaired += 1
            continue
        if rec.verdict.kind is VerdictKind.INDETERMINATE:
            indeterminate += 1
            continue
        e, r = rec.verdict.fired, rec.reference_verdict.fired
        cells[(0 if e else 1) * 2 + (0 if r else 1)] += 1
    return ContingencyTable(*cells, excluded_indeterminate=indeterminate, excluded_unpaired=unpaired)


class DegenerateTable(ValueError):
    pass


@dataclass(frozen=True)
class KappaResult:
    kappa: float
    observed_agreement: float
    expected_agreement: float
    standard_error: float
    ci95_low: float
    ci95_high: float
    n: int


def cohen_kappa(table: ContingencyTable) -> KappaResult:
    """Cohen's kappa with a 95% CI from the Fleiss, Cohen & Everitt (1969) large-sample variance.

    Agreement proportions and kappa itself are computed in exact rational
    arithmetic, so identities such as kappa == 0 for independent raters hold
    exactly. Only the standard error is floating point.
    """
    n = table.n
    if n == 0:
        raise DegenerateTable("kappa is undefined for an empty table")
    a, b, c, d = table.cells
    p = [[Fraction(a, n), Fraction(b, n)], [Fraction(c, n), Fraction(d, n)]]
    row = [p[0][0] + p[0][1], p[1][0] + p[1][1]]
    col = [p[0][0] + p[1][0], p[0][1] + p[1][1]]
    po = p[0][0] + p[1][1]
    pe = row[0] * col[0] + row[1] * col[1]
    if pe == 1:
        raise DegenerateTable("expected agreement is 1 (a rater used a single category)")
    kappa = (po - pe) / (1 - pe)

    # Fleiss-Cohen-Everitt: sum_i p_ii [1 - (p_i. + p_.i)(1 - k)]^2
    #   + (1 - k)^2 sum_{i != j} p_ij (p_.i + p_j.)^2 - [k - p_e (1 - k)]^2, over n (1 - p_e)^2.
    one_minus_k = 1 - kappa
    diag = sum(p[i][i] * (1 - (row[i] + col[i]) * one_minus_k) ** 2 for i in range(2))
    off = one_minus_k ** 2 * sum(p[i][j] * (col[i] + row[j]) ** 2
                                 for i in range(2) for j in range(2) if i != j)
    tail = (kappa - pe * one_minus_k) ** 2
    variance = (diag + off - tail) / (n * (1 - pe) ** 2)
    se = math.sqrt(max(float(variance), 0.0))
    k = float(kappa)
    return KappaResult(
        kappa=k,
        observed_agreement=float(po),
        expected_agreement=float(pe),
        standard_error=se,
        ci95_low=k - Z_95 * se,
        ci95_high=k + Z_95 * se,
        n=n,
    )


# --- diagnostic accuracy -----------------------------------------------------

@dataclass(frozen=True)
class DiagnosticMetrics:
    """2x2 accuracy against a gold standard. Undefined rates are ``None``."""

    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def n(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    @property
    def sensitivity(self) -> float | None:
        return _ratio(self.tp, self.tp + self.fn)

    @property
    def specificity(self) -> float | None:
        return _ratio(self.tn, self.tn + self.fp)

    @property
    def ppv(self) -> float | None:
        return _ratio(self.tp, self.tp + self.fp)

    @property
    def npv(self) -> float | None:
        return _ratio(self.tn, self.tn + self.fn)

    @property
    def accuracy(self) -> float | None:
        return _ratio(self.tp + self.tn, self.n)


class Rater(str, Enum):
    ENGINE = "Engine"
    REFERENCE = "Reference"


def _rater_fired(rec: VerdictRecord, rater: Rater) -> bool:
    if rater is Rater.ENGINE:
        return rec.verdict.fired
    return rec.reference_verdict.fired


def diagnostic_metrics(records: Sequence[VerdictRecord], gold: Sequence[bool],
                       rater: Rater = Rater.ENGINE) -> DiagnosticMetrics:
    """Score one rater against ``gold`` (True = an alert should fire), aligned with ``records``."""
    if len(records) != len(gold):
        raise ValueError(f"{len(records)} records but {len(gold)} gold labels")
    tp = fp = fn = tn = 0
    for rec, truth in zip(records, gold):
        fired = _rater_fired(rec, rater)
        if fired and truth:
            tp += 1
        elif fired:
            fp += 1
        elif truth:
            fn += 1
        else:
            tn += 1
    return DiagnosticMetrics(tp, fp, fn, tn)


# --- discordance -------------------------------------------------------------

class DiscordanceType(str, Enum):
    A = "A"  # engine silent, pharmacist reported an error
    B = "B"  # engine over-dose alert, pharmacist accepted
    C = "C"  # engine under-dose alert, pharmacist accepted
    OTHER = "Other"  # both alerted, different kinds


def discordance_type(rec: VerdictRecord) -> DiscordanceType | None:
    """Type of disagreement for a scorable record, None if the raters agree."""
    if not rec.scorable:
        return None
    kind, ref = rec.verdict.kind, rec.reference_verdict
    if kind is VerdictKind.ACCEPT:
        return None if ref is ReferenceVerdict.ACCEPT else DiscordanceType.A
    if ref is ReferenceVerdict.ACCEPT:
        return DiscordanceType.B if kind is VerdictKind.OVER else DiscordanceType.C
    same = (kind is VerdictKind.OVER) == (ref is ReferenceVerdict.OVER)
    return None if same else DiscordanceType.OTHER


def classify_discordances(records: Iterable[VerdictRecord]) -> list[tuple[VerdictRecord, DiscordanceType]]:
    out = []
    for rec in records:
        t = discordance_type(rec)
        if t is not None:
            out.append((rec, t))
    return out


def discordance_counts(records: Iterable[VerdictRecord]) -> dict[DiscordanceType, int]:
    counts = {t: 0 for t in DiscordanceType}
    for _, t in classify_discordances(records):
        counts[t] += 1
    return counts


# --- adjudication ------------------------------------------------------------

class ReasonCategory(str, Enum):
    EGFR_MISCONFIGURED = "EgfrMisconfigured"
    MISSED_OVERDOSE = "MissedOverdose"
    MISSED_UNDERDOSE = "MissedUnderdose"
    WEIGHT_NOT_USED = "WeightNotUsed"
    PLASMA_CONC_NOT_USED = "PlasmaConcNotUsed"
    BLOOD_PRESSURE_NOT_USED = "BloodPressureNotUsed"
    DURATION_NOT_USED = "DurationNotUsed"
    DUPLICATE_LINES_NOT_SUMMED = "DuplicateLinesNotSummed"
    OTHER = "Other"


class Severity(str, Enum):
    NONE = "None"
    PURELY_PREVENTIVE = "PurelyPreventive"
    SERIOUS = "SeriousOrLifeThreatening"


@dataclass(frozen=True)
class Adjudication:
    """One row of an adjudication file; ``record_ref`` is the 1-based verdict-log data row."""

    record_ref: int
    agrees_with: Rater
    reason_category: ReasonCategory
    severity: Severity


@dataclass(frozen=True)
class AdjudicatedCase:
    record_ref: int
    record: VerdictRecord
    discordance_type: DiscordanceType
    agrees_with: Rater
    reason_category: ReasonCategory
    severity: Severity


ADJUDICATION_COLUMNS = ("record_ref", "agrees_with", "reason_category", "severity")


def read_adjudications(source: Source) -> list[Adjudication]:
    stream, owned = _open_text(source)
    try:
        reader = csv.DictReader(stream)
        if reader.fieldnames is None or any(c not in reader.fieldnames for c in ADJUDICATION_COLUMNS):
            raise MissingHeader(f"adjudication header must contain {', '.join(ADJUDICATION_COLUMNS)}")
        out = []
        for n, row in enumerate(reader, start=1):
            try:
                out.append(Adjudication(int(row["record_ref"]), Rater(row["agrees_with"]),
                                        ReasonCategory(row["reason_category"]), Severity(row["severity"])))
            except (TypeError, ValueError) as exc:
                raise ValueError(f"adjudication row {n}: {exc}") from None
        return out
    finally:
        if owned:
            stream.close()


def write_adjudications(adjudications: Iterable[Adjudication], stream: IO[str]) -> None:
    writer = csv.writer(stream)
    writer.writerow(ADJUDICATION_COLUMNS)
    for a in adjudications:
        writer.writerow([a.record_ref, a.agrees_with.value, a.reason_category.value, a.severity.value])


def adjudicate(records: Sequence[VerdictRecord],
               adjudications: Iterable[Adjudication]) -> list[AdjudicatedCase]:
    """Join adjudications to their verdict records, checking each refers to a discordance."""
    cases = []
    seen = set()
    for adj in adjudications:
        if not 1 <= adj.record_ref <= len(records):
            raise ValueError(f"record_ref {adj.record_ref} is outside the verdict log (1..{len(records)})")
        if adj.record_ref in seen:
            raise ValueError(f"record_ref {adj.record_ref} adjudicated twice")
        seen.add(adj.record_ref)
        rec = records[adj.record_ref - 1]
        t = discordance_type(rec)
        if t is None:
            raise ValueError(f"record_ref {adj.record_ref} is not a discordant record")
        cases.append(AdjudicatedCase(adj.record_ref, rec, t, adj.agrees_with,
                                     adj.reason_category, adj.severity))
    return cases


def derive_gold(records: Sequence[VerdictRecord],
                adjudications: Iterable[Adjudication]) -> list[bool | None]:
    """Per-record truth (should an alert fire?) implied by the raters and the adjudicator.

    Concordant records take the shared answer; fired/not-fired discordances
    take the answer of the rater the adjudicator sided with. Records that are
    not scorable get ``None``.
    """
    by_ref = {a.record_ref: a for a in adjudications}
    gold: list[bool | None] = []
    for i, rec in enumerate(records, start=1):
        if not rec.scorable:
            gold.append(None)
            continue
        e, r = rec.verdict.fired, rec.reference_verdict.fired
        if e == r:
            gold.append(e)
            continue
        adj = by_ref.get(i)
        if adj is None:
            raise ValueError(f"discordant record {i} has no adjudication")
        gold.append(e if adj.agrees_with is Rater.ENGINE else r)
    return gold


@dataclass(frozen=True)
class CorrectAnalysis:
    n: int
    engine_correct: int
    reference_correct: int

    @property
    def engine_pct(self) -> float | None:
        return _pct(self.engine_correct, self.n)

    @property
    def reference_pct(self) -> float | None:
        return _pct(self.reference_correct, self.n)


def correct_analysis(records: Sequence[VerdictRecord],
                     adjudications: Iterable[Adjudication]) -> CorrectAnalysis:
    gold = derive_gold(records, adjudications)
    n = engine = reference = 0
    for rec, truth in zip(records, gold):
        if truth is None:
            continue
        n += 1
        engine += rec.verdict.fired == truth
        reference += rec.reference_verdict.fired == truth
    return CorrectAnalysis(n, engine, reference)


# --- frequency, rule impact, severity ------------------------------------------

@dataclass
class FrequencyRow:
    medication_code: str
    n_lines: int = 0
    engine_over: int = 0
    engine_under: int = 0
    reference_over: int = 0
    reference_under: int = 0

    @property
    def engine_alerts(self) -> int:
        return self.engine_over + self.engine_under

    @property
    def reference_alerts(self) -> int:
        return self.reference_over + self.reference_under

    def pct(self, count: int) -> float | None:
        return _pct(count, self.n_lines)


@dataclass
class FrequencyTable:
    rows: list[FrequencyRow]
    totals: FrequencyRow


def alert_frequency_table(records: Iterable[VerdictRecord]) -> FrequencyTable:
    """Per-medication alert counts over scorable records, sorted by medication code."""
    rows: dict[str, FrequencyRow] = {}
    totals = FrequencyRow("TOTAL")
    for rec in records:
        if not rec.scorable:
            continue
        row = rows.setdefault(rec.medication_code, FrequencyRow(rec.medication_code))
        for target in (row, totals):
            target.n_lines += 1
            target.engine_over += rec.verdict.kind is VerdictKind.OVER
            target.engine_under += rec.verdict.kind is VerdictKind.UNDER
            target.reference_over += rec.reference_verdict is ReferenceVerdict.OVER
            target.reference_under += rec.reference_verdict is ReferenceVerdict.UNDER
    return FrequencyTable([rows[k] for k in sorted(rows)], totals)


@dataclass
class RuleImpactRow:
    rule_id: str
    alerts_fired: int = 0
    adjudicated: int = 0
    adjudicated_wrong: int = 0
    reasons: Counter = field(default_factory=Counter)


@dataclass
class RuleImpactReport:
    rows: list[RuleImpactRow]
    total_rules: int | None
    egfr_misconfigured_rules: list[str]

    @property
    def egfr_misconfigured_pct(self) -> float | None:
        if not self.total_rules:
            return None
        return _pct(len(self.egfr_misconfigured_rules), self.total_rules)


def rule_impact(records: Sequence[VerdictRecord], adjudications: Iterable[Adjudication] = (),
                total_rules: int | None = None) -> RuleImpactReport:
    """Alerts and adjudicated errors per rule id.

    ``adjudicated_wrong`` counts adjudications that sided with the pharmacist,
    i.e. cases where the rule's verdict was judged incorrect. ``total_rules``
    (usually the pack's rule count) is the denominator of the misconfigured
    fraction.
    """
    rows: dict[str, RuleImpactRow] = {}
    for rec in records:
        if rec.verdict.fired:
            rid = rec.verdict.rule_id
            rows.setdefault(rid, RuleImpactRow(rid)).alerts_fired += 1
    misconfigured = set()
    for case in adjudicate(records, adjudications):
        rid = case.record.verdict.rule_id
        if rid is None:
            continue
        row = rows.setdefault(rid, RuleImpactRow(rid))
        row.adjudicated += 1
        row.adjudicated_wrong += case.agrees_with is Rater.REFERENCE
        row.reasons[case.reason_category] += 1
        if case.reason_category is ReasonCategory.EGFR_MISCONFIGURED:
            misconfigured.add(rid)
    return RuleImpactReport([rows[k] for k in sorted(rows)], total_rules, sorted(misconfigured))


def severity_summary(adjudications: Iterable[Adjudication | AdjudicatedCase]) -> dict[Severity, int]:
    counts = {s: 0 for s in Severity}
    for a in adjudications:
        counts[a.severity] += 1
    return counts


def adjudication_breakdown(cases: Iterable[AdjudicatedCase]) -> Mapping[DiscordanceType, dict[str, Counter]]:
    """Per discordance type, the reason histogram on each side of the adjudication."""
    out: dict[DiscordanceType, dict[str, Counter]] = defaultdict(lambda: {r.value: Counter() for r in Rater})
    for case in cases:
        out[case.discordance_type][case.agrees_with.value][case.reason_category] += 1
    return out


GOLD_LABELS = {"should_fire": True, "should_not_fire": False}


def read_gold(source: Source) -> dict[int, bool]:
    """Read a gold-label CSV ``record_ref,gold`` (gold is should_fire / should_not_fire)."""
    stream, owned = _open_text(source)
    try:
        reader = csv.DictReader(stream)
        if reader.fieldnames is None or not {"record_ref", "gold"} <= set(reader.fieldnames):
            raise MissingHeader("gold header must contain record_ref, gold")
        out = {}
        for n, row in enumerate(reader, start=1):
            try:
                ref = int(row["record_ref"])
                label = GOLD_LABELS[row["gold"]]
            except (KeyError, ValueError, TypeError):
                raise ValueError(f"gold row {n}: bad record_ref or label {row!r}") from None
            if ref in out:
                raise ValueError(f"gold row {n}: record_ref {ref} repeated")
            out[ref] = label
        return out
    finally:
        if owned:
            stream.close()
