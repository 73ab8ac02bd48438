from datetime import date

import mpmath
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nephrodose.ingest import PrescriptionLine
from nephrodose.renal import InvalidInput, MissingEgfr, PatientRenalInput, Sex, age_on, mdrd_egfr, resolve_egfr

# Frozen from a 40-digit mpmath evaluation of 175 * scr^-1.154 * age^-0.203 (* 0.742 if female).
ORACLE_1_0_60_MALE = 76.22077229137906
ORACLE_2_0_60_MALE = 34.25190492556443
ORACLE_1_3_72_FEMALE = 40.26362092745627


def oracle(scr: float, age: int, female: bool) -> float:
    with mpmath.workdps(40):
        value = mpmath.mpf(175) * mpmath.mpf(scr) ** mpmath.mpf("-1.154") * mpmath.mpf(age) ** mpmath.mpf("-0.203")
        if female:
            value *= mpmath.mpf("0.742")
        return float(value)


@pytest.mark.parametrize("scr, age, sex, expected", [
    (1.0, 60, Sex.MALE, ORACLE_1_0_60_MALE),
    (2.0, 60, Sex.MALE, ORACLE_2_0_60_MALE),
    (1.3, 72, Sex.FEMALE, ORACLE_1_3_72_FEMALE),
])
def test_frozen_oracle_values(scr, age, sex, expected):
    assert mdrd_egfr(PatientRenalInput(scr, age, sex)) == pytest.approx(expected, rel=1e-12)


def test_reference_point_is_about_76_2():
    assert abs(mdrd_egfr(PatientRenalInput(1.0, 60, Sex.MALE)) - 76.2) < 0.1


def test_female_factor():
    f = mdrd_egfr(PatientRenalInput(1.0, 60, Sex.FEMALE))
    m = mdrd_egfr(PatientRenalInput(1.0, 60, Sex.MALE))
    assert f / m == pytest.approx(0.742, abs=1e-12)


def test_higher_creatinine_lowers_egfr():
    assert mdrd_egfr(PatientRenalInput(2.0, 60, Sex.MALE)) < mdrd_egfr(PatientRenalInput(1.0, 60, Sex.MALE))


@pytest.mark.parametrize("scr, age", [(0, 60), (-1, 60), (float("nan"), 60), (float("inf"), 60),
                                      (1.0, 17), (1.0, 40.5)])
def test_invalid_input(scr, age):
    with pytest.raises(InvalidInput):
        mdrd_egfr(PatientRenalInput(scr, age, Sex.MALE))


@pytest.mark.parametrize("text, sex", [("m", Sex.MALE), ("F", Sex.FEMALE), (" male ", Sex.MALE)])
def test_sex_parse(text, sex):
    assert Sex.parse(text) is sex


def test_sex_parse_rejects_other():
    with pytest.raises(ValueError):
        Sex.parse("x")


@pytest.mark.parametrize("birth, on, years", [
    (date(1950, 6, 15), date(2010, 6, 14), 59),
    (date(1950, 6, 15), date(2010, 6, 15), 60),
    (date(1952, 2, 29), date(2012, 2, 28), 59),
])
def test_age_is_floored(birth, on, years):
    assert age_on(birth, on) == years


def _line(**kw) -> PrescriptionLine:
    return PrescriptionLine("P", "E", "M", **kw)


def test_explicit_egfr_wins():
    assert resolve_egfr(_line(egfr=45.0, serum_creatinine=1.0, sex=Sex.MALE,
                              birth_date=date(1950, 1, 1), start_date=date(2010, 1, 1))) == 45.0


def test_computed_egfr_uses_age_at_start():
    line = _line(serum_creatinine=1.0, sex=Sex.MALE, birth_date=date(1950, 3, 1), start_date=date(2010, 3, 1))
    assert resolve_egfr(line) == pytest.approx(ORACLE_1_0_60_MALE, rel=1e-12)


@pytest.mark.parametrize("kw", [{}, {"serum_creatinine": 1.0}, {"serum_creatinine": 1.0, "sex": Sex.MALE}])
def test_missing_egfr(kw):
    with pytest.raises(MissingEgfr):
        resolve_egfr(_line(**kw))


scrs = st.floats(0.1, 15, allow_nan=False)
ages = st.integers(18, 110)


@settings(max_examples=200)
@given(scrs, ages, st.booleans())
def test_matches_high_precision_oracle(scr, age, female):
    value = mdrd_egfr(PatientRenalInput(scr, age, Sex.FEMALE if female else Sex.MALE))
    assert abs(value - oracle(scr, age, female)) < 0.05
    assert value == pytest.approx(oracle(scr, age, female), rel=1e-12)


@settings(max_examples=200)
@given(scrs, ages)
def test_monotone_and_scaling(scr, age):
    base = mdrd_egfr(PatientRenalInput(scr, age, Sex.MALE))
    assert mdrd_egfr(PatientRenalInput(scr * 1.01, age, Sex.MALE)) < base
    if age < 110:
        assert mdrd_egfr(PatientRenalInput(scr, age + 1, Sex.MALE)) < base
    doubled = mdrd_egfr(PatientRenalInput(2 * scr, age, Sex.MALE))
    assert doubled / base == pytest.approx(2 ** -1.154, rel=1e-9)
    female = mdrd_egfr(PatientRenalInput(scr, age, Sex.FEMALE))
    assert female / base == pytest.approx(0.742, rel=1e-9)
