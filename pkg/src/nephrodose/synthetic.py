"""Deterministic synthetic reconstruction of the HEGP silent-mode study data.

No patient data from the study is public, so this module builds a log whose
aggregate counts match the target study figures: 8251 lines, of which 1148 are
conditional and 2097 unanalyzed; per-medication alert counts for the 5006
analyzed lines; the 27/394/10/4575 agreement table; the A/B/C discordance
split with the adjudicator's side and reason; and a 962-rule pack with the
target per-medication rule counts. Doses and band edges in the replica
pack are synthetic and have no clinical meaning.

Regenerate the shipped files with ``python3 -m nephrodose.synthetic DIR``.
"""

from __future__ import annotations

import io
import random
import sys
from collections import Counter
from dataclasses import dataclass
from datetime import date, timedelta
from pathlib import Path

from .analytics import Adjudication, ReasonCategory, Rater, Severity, write_adjudications
from .dsl import serialize_rule_pack
from .engine import DoseRegimen, ReferenceVerdict, VerdictKind, evaluate_log
from .ingest import PrescriptionLine, write_prescription_log, write_verdict_log
from .renal import Sex
from .rulepack import INF, DoseUnit, EgfrBandRule, MedicationRuleSet, RulePack

SEED = 20110301

# code: (display name, rules in the pack)
RULE_COUNTS: dict[str, tuple[str, int]] = {
    "AMIKACIN": ("Amikacin", 72),
    "ATENOLOL": ("Atenolol", 30),
    "ETHAMBUTOL": ("Ethambutol", 30),
    "METRONIDAZOLE": ("Metronidazole", 24),
    "GENTAMICIN": ("Gentamicin", 40),
    "TRAMADOL": ("Tramadol", 16),
    "NORFLOXACIN": ("Norfloxacin", 12),
    "ISONIAZID": ("Isoniazid", 30),
    "METFORMIN": ("Metformin", 18),
    "TOBRAMYCIN": ("Tobramycin", 56),
    "RAMIPRIL": ("Ramipril", 36),
    "VANCOMYCIN": ("Vancomycin", 36),
    "ACICLOVIR": ("Aciclovir", 40),
    "ALLOPURINOL": ("Allopurinol", 60),
    "AMOXICILLIN": ("Amoxicillin", 64),
    "AMOX_CLAV": ("Amoxicillin and potassium clavulanate", 136),
    "BISOPROLOL": ("Bisoprolol", 34),
    "CEFOTAXIME": ("Cefotaxime", 32),
    "CIPROFLOXACIN": ("Ciprofloxacin", 42),
    "ERYTHROMYCIN": ("Erythromycin", 18),
    "FOSFOMYCIN": ("Fosfomycin", 10),
    "LEVOFLOXACIN": ("Levofloxacin", 24),
    "CAPTOPRIL": ("Captopril", 38),
    "SMX_TMP": ("Sulfamethoxazole and trimethoprim", 24),
    "VALACICLOVIR": ("Valaciclovir", 40),
}

# Analyzed lines per medication: (lines, engine over, engine under, pharmacist over, pharmacist under).
# The target rows total 4993 lines and include two medications outside the
# rule pack; those 112 lines plus the 13 unlisted ones form the ACICLOVIR stratum.
ANALYZED: dict[str, tuple[int, int, int, int, int]] = {
    "ALLOPURINOL": (309, 49, 2, 6, 0),
    "AMIKACIN": (21, 9, 2, 0, 0),
    "AMOXICILLIN": (310, 8, 1, 1, 0),
    "AMOX_CLAV": (440, 69, 5, 2, 0),
    "ATENOLOL": (303, 5, 8, 3, 0),
    "BISOPROLOL": (508, 0, 0, 0, 0),
    "CAPTOPRIL": (25, 0, 7, 0, 0),
    "CEFOTAXIME": (355, 2, 10, 1, 1),
    "CIPROFLOXACIN": (99, 2, 2, 0, 0),
    "ERYTHROMYCIN": (3, 0, 0, 0, 0),
    "ETHAMBUTOL": (35, 7, 1, 0, 0),
    "FOSFOMYCIN": (1, 0, 0, 0, 0),
    "GENTAMICIN": (56, 30, 6, 3, 0),
    "ISONIAZID": (38, 0, 34, 0, 0),
    "LEVOFLOXACIN": (230, 12, 3, 4, 0),
    "METFORMIN": (387, 69, 5, 10, 0),
    "METRONIDAZOLE": (99, 3, 0, 1, 0),
    "NORFLOXACIN": (19, 1, 9, 0, 0),
    "RAMIPRIL": (1148, 6, 16, 1, 1),
    "SMX_TMP": (256, 0, 0, 0, 0),
    "TRAMADOL": (82, 6, 2, 1, 0),
    "TOBRAMYCIN": (2, 0, 2, 0, 0),
    "VALACICLOVIR": (93, 0, 0, 0, 0),
    "VANCOMYCIN": (62, 5, 23, 1, 1),
    "ACICLOVIR": (125, 0, 0, 0, 0),
}

# Medications that reached the log without being in the rule pack.
OUT_OF_PACK = {"AMOROLFINE": "Amorolfine", "PARAFFIN_VASELINE": "Paraffin, Vaseline"}

TOTAL_LINES = 8251
CONDITIONAL_LINES = 1148
UNANALYZED_LINES = 2097

R = ReasonCategory
# Type A: engine silent, pharmacist alerted. (medication, pharmacist verdict, adjudicator side, reason, n)
TYPE_A = [
    ("ATENOLOL", ReferenceVerdict.OVER, Rater.REFERENCE, R.EGFR_MISCONFIGURED, 3),
    ("GENTAMICIN", ReferenceVerdict.OVER, Rater.REFERENCE, R.EGFR_MISCONFIGURED, 1),
    ("METFORMIN", ReferenceVerdict.OVER, Rater.REFERENCE, R.EGFR_MISCONFIGURED, 1),
    ("LEVOFLOXACIN", ReferenceVerdict.OVER, Rater.REFERENCE, R.DURATION_NOT_USED, 1),
    ("ALLOPURINOL", ReferenceVerdict.OVER, Rater.REFERENCE, R.DUPLICATE_LINES_NOT_SUMMED, 3),
    ("CEFOTAXIME", ReferenceVerdict.UNDER, Rater.ENGINE, R.OTHER, 1),
]
# Engine alerts the adjudicator rejected, by medication; the remaining B/C cases side with the engine.
TYPE_B_REJECTED = {
    "AMIKACIN": {R.PLASMA_CONC_NOT_USED: 3, R.WEIGHT_NOT_USED: 6},
    "GENTAMICIN": {R.WEIGHT_NOT_USED: 28},
    "VANCOMYCIN": {R.WEIGHT_NOT_USED: 4},
    "AMOX_CLAV": {R.WEIGHT_NOT_USED: 7},
    "ATENOLOL": {R.BLOOD_PRESSURE_NOT_USED: 5},
    "RAMIPRIL": {R.BLOOD_PRESSURE_NOT_USED: 4},
}
TYPE_C_REJECTED = {
    "VANCOMYCIN": {R.PLASMA_CONC_NOT_USED: 14, R.WEIGHT_NOT_USED: 2},
    "GENTAMICIN": {R.WEIGHT_NOT_USED: 6},
    "AMIKACIN": {R.WEIGHT_NOT_USED: 2},
    "TOBRAMYCIN": {R.WEIGHT_NOT_USED: 2},
    "CAPTOPRIL": {R.BLOOD_PRESSURE_NOT_USED: 6},
    "ISONIAZID": {R.DUPLICATE_LINES_NOT_SUMMED: 34},
    "CEFOTAXIME": {R.DUPLICATE_LINES_NOT_SUMMED: 10},
    "NORFLOXACIN": {R.DUPLICATE_LINES_NOT_SUMMED: 1},
}

DEPARTMENTS = (
    "nephrology", "vascular medicine", "clinical immunology", "cardiovascular surgery",
    "geriatrics", "orthopedics", "cardiology", "hypertension", "internal medicine",
)
PATIENTS = 3228
STUDY_START = date(2011, 3, 1)
STUDY_DAYS = 214


def _band_edges(n: int) -> list[float]:
    return [round(k * 120.0 / (n - 1), 2) for k in range(n)] + [INF]


def replica_pack() -> RulePack:
    rulesets = []
    for code, (name, n) in RULE_COUNTS.items():
        edges = _band_edges(n)
        bands = []
        for k in range(n):
            bands.append(EgfrBandRule(
                rule_id=f"{code}-{k + 1:03d}",
                egfr_low=edges[k],
                egfr_high=edges[k + 1],
                max_daily_dose=100.0 * (k + 1),
                min_daily_dose=25.0 * (k + 1),
                recommendation=(f"SYNTHETIC {name} eGFR {bands_label(edges[k], edges[k + 1])}: "
                                f"{25 * (k + 1)}-{100 * (k + 1)} mg/day"),
            ))
        rulesets.append(MedicationRuleSet(code, name, DoseUnit.MG, tuple(bands)))
    return RulePack("HEGP replica (synthetic)", "962", tuple(rulesets))


def bands_label(low: float, high: float) -> str:
    def f(x: float) -> str:
        return "inf" if x == INF else (str(int(x)) if float(x).is_integer() else str(x))
    return f"[{f(low)}, {f(high)})"


@dataclass(frozen=True)
class Case:
    medication_code: str
    engine: VerdictKind | None  # None: conditional line
    reference: ReferenceVerdict | None
    adjudication: tuple[Rater, ReasonCategory] | None = None


def _analyzed_cases() -> list[Case]:
    cases: list[Case] = []
    a_by_med: dict[str, list[tuple]] = {}
    for med, ref, side, reason, n in TYPE_A:
        a_by_med.setdefault(med, []).extend([(ref, side, reason)] * n)
    for med, (lines, e_over, e_under, r_over, r_under) in ANALYZED.items():
        a_cases = a_by_med.get(med, [])
        a_over = sum(1 for ref, *_ in a_cases if ref is ReferenceVerdict.OVER)
        a_under = len(a_cases) - a_over
        conc_over, conc_under = r_over - a_over, r_under - a_under
        assert 0 <= conc_over <= e_over and 0 <= conc_under <= e_under, med
        for ref, side, reason in a_cases:
            cases.append(Case(med, VerdictKind.ACCEPT, ref, (side, reason)))
        cases += [Case(med, VerdictKind.OVER, ReferenceVerdict.OVER)] * conc_over
        cases += [Case(med, VerdictKind.UNDER, ReferenceVerdict.UNDER)] * conc_under
        for kind, alerts, rejected, confirmed in (
            (VerdictKind.OVER, e_over - conc_over, TYPE_B_REJECTED.get(med, {}), R.MISSED_OVERDOSE),
            (VerdictKind.UNDER, e_under - conc_under, TYPE_C_REJECTED.get(med, {}), R.MISSED_UNDERDOSE),
        ):
            n_rejected = sum(rejected.values())
            assert n_rejected <= alerts, med
            for reason, n in rejected.items():
                cases += [Case(med, kind, ReferenceVerdict.ACCEPT, (Rater.REFERENCE, reason))] * n
            cases += [Case(med, kind, ReferenceVerdict.ACCEPT, (Rater.ENGINE, confirmed))] * (alerts - n_rejected)
        n_accept = lines - len(a_cases) - e_over - e_under
        cases += [Case(med, VerdictKind.ACCEPT, ReferenceVerdict.ACCEPT)] * n_accept
    return cases


def _excluded_cases(rng: random.Random) -> list[Case]:
    meds = list(ANALYZED) + list(OUT_OF_PACK)
    weights = [ANALYZED[m][0] + 10 if m in ANALYZED else 15 for m in meds]
    cases = []
    for m in rng.choices(meds, weights, k=CONDITIONAL_LINES):
        # A conditional line is excluded as conditional even if a pharmacist saw it.
        cases.append(Case(m, None, ReferenceVerdict.ACCEPT if rng.random() < 0.3 else None))
    for m in rng.choices(meds, weights, k=UNANALYZED_LINES):
        kind = VerdictKind.INDETERMINATE if m in OUT_OF_PACK else rng.choices(
            [VerdictKind.ACCEPT, VerdictKind.OVER, VerdictKind.UNDER], [90, 6, 4])[0]
        cases.append(Case(m, kind, None))
    return cases


def _regimen_for(kind: VerdictKind, k: int, rng: random.Random) -> DoseRegimen:
    scale = k + 1
    if kind is VerdictKind.OVER:
        return rng.choice([DoseRegimen(50.0 * scale, DoseUnit.MG, 3), DoseRegimen(150.0 * scale, DoseUnit.MG, 1)])
    if kind is VerdictKind.UNDER:
        return rng.choice([DoseRegimen(10.0 * scale, DoseUnit.MG, 1), DoseRegimen(5.0 * scale, DoseUnit.MG, 2)])
    return rng.choice([DoseRegimen(25.0 * scale, DoseUnit.MG, 2), DoseRegimen(50.0 * scale, DoseUnit.MG, 1),
                       DoseRegimen(20.0 * scale, DoseUnit.MG, 3)])


def _misconfigured(case: Case) -> bool:
    return case.adjudication is not None and case.adjudication[1] is R.EGFR_MISCONFIGURED


@dataclass
class Study:
    pack: RulePack
    lines: list[PrescriptionLine]
    adjudications: list[Adjudication]
    gold: dict[int, bool]


def build_study(seed: int = SEED) -> Study:
    rng = random.Random(seed)
    pack = replica_pack()
    cases = _analyzed_cases() + _excluded_cases(rng)
    rng.shuffle(cases)
    assert len(cases) == TOTAL_LINES

    band_cursor: Counter = Counter()
    # Misconfigured-threshold cases get evenly spread, hence distinct, bands of their medication.
    misconfigured_total = Counter(c.medication_code for c in cases if _misconfigured(c))
    misconfigured_seen: Counter = Counter()
    births: dict[int, tuple[date, Sex]] = {}
    lines: list[PrescriptionLine] = []
    adjudications: list[Adjudication] = []
    gold: dict[int, bool] = {}
    for ref_no, case in enumerate(cases, start=1):
        patient = rng.randint(1, PATIENTS)
        if patient not in births:
            births[patient] = (date(1920, 1, 1) + timedelta(days=rng.randint(0, 25000)),
                               rng.choice([Sex.MALE, Sex.FEMALE]))
        birth, sex = births[patient]
        start = STUDY_START + timedelta(days=rng.randint(0, STUDY_DAYS - 12))
        regimen = None
        egfr = None
        ruleset = pack.ruleset(case.medication_code)
        if ruleset is not None:
            if _misconfigured(case):
                i = misconfigured_seen[case.medication_code]
                misconfigured_seen[case.medication_code] += 1
                k = len(ruleset.bands) * (2 * i + 1) // (2 * misconfigured_total[case.medication_code])
            else:
                k = band_cursor[case.medication_code] % len(ruleset.bands)
                band_cursor[case.medication_code] += 1
            band = ruleset.bands[k]
            egfr = band.egfr_low + 30 if band.egfr_high == INF else round((band.egfr_low + band.egfr_high) / 2, 2)
            if case.engine is not None:
                regimen = _regimen_for(case.engine, k, rng)
        elif case.engine is not None:
            regimen = DoseRegimen(float(rng.choice([1, 2])), DoseUnit.G, 1)
            egfr = float(rng.randint(10, 110))
        name = ruleset.medication_name if ruleset else OUT_OF_PACK[case.medication_code]
        lines.append(PrescriptionLine(
            patient_id=f"P{patient:05d}",
            encounter_id=f"E{patient:05d}-{start.month:02d}",
            medication_code=case.medication_code,
            medication_name=name,
            regimen=regimen,
            birth_date=birth,
            sex=sex,
            department=rng.choice(DEPARTMENTS),
            start_date=start,
            end_date=start + timedelta(days=rng.randint(0, 10)),
            egfr=egfr,
            reference_verdict=case.reference,
        ))
        if case.engine is not None and case.reference is not None and case.engine is not VerdictKind.INDETERMINATE:
            engine_fired, ref_fired = case.engine.fired, case.reference.fired
            truth = engine_fired
            if case.adjudication is not None:
                side, reason = case.adjudication
                truth = engine_fired if side is Rater.ENGINE else ref_fired
                severity = Severity.PURELY_PREVENTIVE if truth else Severity.NONE
                adjudications.append(Adjudication(ref_no, side, reason, severity))
            gold[ref_no] = truth

    records = evaluate_log(pack, lines)
    for rec, case in zip(records, cases):
        expected = VerdictKind.INDETERMINATE if case.engine is None else case.engine
        assert rec.verdict.kind is expected, (rec, case)
    misconfigured = [records[a.record_ref - 1].verdict.rule_id for a in adjudications
                     if a.reason_category is R.EGFR_MISCONFIGURED]
    assert len(set(misconfigured)) == len(misconfigured), misconfigured
    return Study(pack, lines, adjudications, gold)


SHIPPED_FILES = ("replica_962.rules", "study_log.csv", "study_verdicts.csv", "tableII.csv",
                 "adjudications.csv", "gold.csv")


def render_study(study: Study) -> dict[str, str]:
    """The shipped files as text, keyed by file name."""
    out = {"replica_962.rules": (
        "# SYNTHETIC replica: 962 rules with the study's per-medication rule counts.\n"
        "# Band edges and doses are generated placeholders, NOT clinical guidance.\n"
        + serialize_rule_pack(study.pack))}
    buf = io.StringIO()
    write_prescription_log(study.lines, buf)
    out["study_log.csv"] = buf.getvalue()
    records = evaluate_log(study.pack, study.lines)
    buf = io.StringIO()
    write_verdict_log(records, buf)
    out["study_verdicts.csv"] = buf.getvalue()
    # Only the scorable pairs, i.e. exactly the 2x2 agreement table.
    buf = io.StringIO()
    write_verdict_log([r for r in records if r.scorable], buf)
    out["tableII.csv"] = buf.getvalue()
    buf = io.StringIO()
    write_adjudications(study.adjudications, buf)
    out["adjudications.csv"] = buf.getvalue()
    rows = ["record_ref,gold"] + [f"{ref},{'should_fire' if g else 'should_not_fire'}"
                                  for ref, g in sorted(study.gold.items())]
    out["gold.csv"] = "\r\n".join(rows) + "\r\n"
    return out


def write_study(directory: str | Path, seed: int = SEED) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for name, text in render_study(build_study(seed)).items():
        (directory / name).write_text(text, encoding="utf-8", newline="")


if __name__ == "__main__":
    if len(sys.argv) != 2:
        sys.exit("usage: python -m nephrodose.synthetic OUTPUT_DIR")
    write_study(sys.argv[1])
