import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from _support import allopurinol, band, pack_of
from nephrodose.engine import (
    CONDITIONAL_LINE,
    MISSING_EGFR,
    MISSING_WEIGHT,
    NO_RULE_FOR_MEDICATION,
    UNIT_MISMATCH,
    DoseRegimen,
    MissingWeight,
    ReferenceVerdict,
    UnitMismatch,
    Verdict,
    VerdictKind,
    count_kinds,
    daily_dose,
    evaluate_line,
    evaluate_log,
    missing_covariate,
)
from nephrodose.ingest import PrescriptionLine
from nephrodose.rulepack import INF, Comparator, Covariate, CovariateGuard, DoseUnit, MedicationRuleSet

MG, G, MIU, PER_KG = DoseUnit.MG, DoseUnit.G, DoseUnit.MIU, DoseUnit.MG_PER_KG


def line(code="ALLOPURINOL", amount=None, unit=MG, freq=1, **kw) -> PrescriptionLine:
    regimen = None if amount is None else DoseRegimen(amount, unit, freq)
    return PrescriptionLine("P1", "E1", code, regimen=regimen, **kw)


def ruleset(*bands, unit=MG, code="M") -> MedicationRuleSet:
    return MedicationRuleSet(code, code.title(), unit, tuple(bands))


MID = ruleset(band("M0", 0, 30, 500), band("M1", 30, 60, 1000, 250), band("M2", 60, INF, 2000), code="M")


@pytest.mark.parametrize("regimen, weight, target, expected", [
    (DoseRegimen(500, MG, 3), None, MG, 1500),
    (DoseRegimen(1, G, 2), None, MG, 2000),
    (DoseRegimen(3, PER_KG, 1), 70, MG, 210),
    (DoseRegimen(2, MIU, 3), None, MIU, 6),
    (DoseRegimen(3, PER_KG, 2), None, PER_KG, 6),
    (DoseRegimen(140, MG, 1), 70, PER_KG, 2),
    (DoseRegimen(0.5, G, 2), 50, PER_KG, 20),
])
def test_daily_dose(regimen, weight, target, expected):
    assert daily_dose(regimen, weight, target) == pytest.approx(expected)


def test_per_kg_needs_weight():
    with pytest.raises(MissingWeight):
        daily_dose(DoseRegimen(3, PER_KG, 1))


@pytest.mark.parametrize("unit, target", [(MIU, MG), (MG, MIU), (PER_KG, MIU)])
def test_unit_family_mismatch(unit, target):
    with pytest.raises(UnitMismatch):
        daily_dose(DoseRegimen(1, unit, 1), 70, target)


@pytest.mark.parametrize("amount, freq", [(0, 1), (-1, 1), (float("nan"), 1), (float("inf"), 1), (1, 0)])
def test_regimen_invariants(amount, freq):
    with pytest.raises(ValueError):
        DoseRegimen(amount, MG, freq)


def test_regimen_str():
    assert str(DoseRegimen(500, MG, 3)) == "500mg x3"


@pytest.mark.parametrize("amount, freq, kind", [
    (500, 3, VerdictKind.OVER),
    (100, 1, VerdictKind.UNDER),
    (250, 2, VerdictKind.ACCEPT),
    (250, 1, VerdictKind.ACCEPT),
    (1000, 1, VerdictKind.ACCEPT),
])
def test_band_bounds(amount, freq, kind):
    v = evaluate_line(pack_of(MID), line("M", amount, freq=freq, egfr=45))
    assert v.kind is kind
    assert v.rule_id == "M1"
    assert v.egfr == 45
    if kind.fired:
        assert v.recommendation == "M1 advice"


def test_conditional_line():
    v = evaluate_line(pack_of(MID), line("M", egfr=45))
    assert (v.kind, v.indeterminate_reason) == (VerdictKind.INDETERMINATE, CONDITIONAL_LINE)


def test_unknown_medication():
    v = evaluate_line(pack_of(MID), line("NOPE", 100, egfr=45))
    assert v.indeterminate_reason == NO_RULE_FOR_MEDICATION


def test_missing_egfr():
    assert evaluate_line(pack_of(MID), line("M", 100)).indeterminate_reason == MISSING_EGFR


def test_missing_weight():
    rs = ruleset(band("K", 0, INF, 5), unit=PER_KG)
    v = evaluate_line(pack_of(rs), line("M", 300, MG, egfr=45))
    assert (v.indeterminate_reason, v.rule_id) == (MISSING_WEIGHT, "K")


def test_unit_mismatch_is_indeterminate():
    rs = ruleset(band("K", 0, INF, 5), unit=MIU)
    assert evaluate_line(pack_of(rs), line("M", 300, MG, egfr=45)).indeterminate_reason == UNIT_MISMATCH


def test_gram_limits_compare_against_mg_doses():
    rs = ruleset(band("G1", 0, INF, 1, 0.5), unit=G)
    assert evaluate_line(pack_of(rs), line("M", 850, MG, egfr=45)).kind is VerdictKind.ACCEPT
    assert evaluate_line(pack_of(rs), line("M", 850, MG, 2, egfr=45)).kind is VerdictKind.OVER
    assert evaluate_line(pack_of(rs), line("M", 0.25, G, 1, egfr=45)).kind is VerdictKind.UNDER


def test_per_kg_limits():
    rs = ruleset(band("K", 0, INF, 5, 3), unit=PER_KG)
    assert evaluate_line(pack_of(rs), line("M", 4, PER_KG, weight=70, egfr=45)).kind is VerdictKind.ACCEPT
    assert evaluate_line(pack_of(rs), line("M", 420, MG, weight=70, egfr=45)).kind is VerdictKind.OVER
    assert evaluate_line(pack_of(rs), line("M", 4, PER_KG, egfr=45)).kind is VerdictKind.ACCEPT


BP_GUARD = CovariateGuard(Covariate.SYSTOLIC_BP_MMHG, Comparator.GE, 100)


def test_missing_guard_covariate():
    rs = ruleset(band("B", 0, INF, 100, guards=(BP_GUARD,)))
    v = evaluate_line(pack_of(rs), line("M", 50, egfr=45))
    assert v.indeterminate_reason == missing_covariate(Covariate.SYSTOLIC_BP_MMHG)
    assert v.indeterminate_reason == "MissingCovariate(systolic_bp_mmHg)"


def test_violated_guard_keeps_dose_checks():
    rs = ruleset(band("B", 0, INF, 100, guards=(BP_GUARD,)))
    over = evaluate_line(pack_of(rs), line("M", 150, egfr=45, systolic_bp=90))
    assert over.kind is VerdictKind.OVER
    ok = evaluate_line(pack_of(rs), line("M", 50, egfr=45, systolic_bp=90))
    assert ok.kind is VerdictKind.ACCEPT
    assert "guard not met" in ok.recommendation
    plain = evaluate_line(pack_of(rs), line("M", 50, egfr=45, systolic_bp=120))
    assert plain.recommendation is None


def test_duration_guard_uses_dates():
    from datetime import date
    guard = CovariateGuard(Covariate.TREATMENT_DURATION_DAYS, Comparator.LE, 14)
    rs = ruleset(band("D", 0, INF, 100, guards=(guard,)))
    long_course = line("M", 50, egfr=45, start_date=date(2011, 1, 1), end_date=date(2011, 1, 20))
    assert "guard not met" in evaluate_line(pack_of(rs), long_course).recommendation
    assert evaluate_line(pack_of(rs), line("M", 50, egfr=45)).indeterminate_reason == \
        "MissingCovariate(treatment_duration_days)"


def test_too_many_administrations_is_over():
    rs = ruleset(band("F", 0, INF, 1000, max_frequency_per_day=2))
    v = evaluate_line(pack_of(rs), line("M", 100, freq=3, egfr=45))
    assert v.kind is VerdictKind.OVER
    assert "at most 2 administrations per day" in v.recommendation


def test_computed_egfr_selects_band():
    from datetime import date
    from nephrodose.renal import Sex
    v = evaluate_line(pack_of(allopurinol()), line(amount=100, serum_creatinine=1.0, sex=Sex.MALE,
                                                   birth_date=date(1950, 1, 1), start_date=date(2010, 6, 1)))
    assert v.rule_id == "A4"
    assert v.egfr == pytest.approx(76.22, abs=0.01)


def test_verdict_invariants():
    with pytest.raises(ValueError):
        Verdict(VerdictKind.OVER, rule_id="x")
    with pytest.raises(ValueError):
        Verdict(VerdictKind.ACCEPT)
    with pytest.raises(ValueError):
        Verdict(VerdictKind.INDETERMINATE)
    with pytest.raises(ValueError):
        Verdict(VerdictKind.ACCEPT, rule_id="x", indeterminate_reason="MissingEgfr")


def test_evaluate_log_empty():
    assert evaluate_log(pack_of(MID), []) == []


def test_evaluate_log_pairs_reference_verdicts():
    lines = [line("M", 250, egfr=e, reference_verdict=ReferenceVerdict.ACCEPT) for e in (10, 40, 70)]
    records = evaluate_log(pack_of(MID), lines)
    assert [r.verdict.kind for r in records] == [VerdictKind.ACCEPT] * 3
    assert [r.verdict.rule_id for r in records] == ["M0", "M1", "M2"]
    assert all(r.reference_verdict is ReferenceVerdict.ACCEPT for r in records)
    assert count_kinds(records)[VerdictKind.ACCEPT] == 3


def test_evaluate_log_preserves_order_and_is_deterministic():
    lines = [line("M", a, egfr=45) for a in (100, 500, 2000, 300)]
    first = evaluate_log(pack_of(MID), lines)
    assert [r.verdict.kind for r in first] == [VerdictKind.UNDER, VerdictKind.ACCEPT,
                                               VerdictKind.OVER, VerdictKind.ACCEPT]
    assert evaluate_log(pack_of(MID), lines) == first


ORDER = {VerdictKind.UNDER: 0, VerdictKind.ACCEPT: 1, VerdictKind.OVER: 2}


@settings(max_examples=300)
@given(st.floats(1, 1000), st.floats(0, 2000), st.lists(st.floats(0.01, 5000), min_size=2, max_size=30),
       st.floats(30, 59.99))
def test_dose_sweep_is_monotone(min_dose, width, amounts, egfr):
    rs = ruleset(band("L", 0, 30, 1), band("S", 30, 60, min_dose + width, min_dose), band("H", 60, INF, 1))
    kinds = [evaluate_line(pack_of(rs), line("M", a, egfr=egfr)).kind for a in sorted(amounts)]
    ranks = [ORDER[k] for k in kinds]
    assert ranks == sorted(ranks)


@settings(max_examples=200)
@given(st.floats(30, 59.999), st.floats(30, 59.999), st.floats(1, 3000))
def test_egfr_locality(e1, e2, amount):
    a = evaluate_line(pack_of(MID), line("M", amount, egfr=e1))
    b = evaluate_line(pack_of(MID), line("M", amount, egfr=e2))
    assert (a.kind, a.rule_id, a.recommendation) == (b.kind, b.rule_id, b.recommendation)
