"""eGFR by the revised 4-variable MDRD equation, without the race coefficient."""

from __future__ import annotations

import math
from dataclasses import dataclass
from datetime import date
from enum import Enum
from typing import TYPE_CHECKING

if TYPE_CHECKING:
    from .ingest import PrescriptionLine

# IDMS-traceable MDRD constants; creatinine in mg/dL.
MDRD_CONSTANT = 175.0
CREATININE_EXPONENT = -1.154
AGE_EXPONENT = -0.203
FEMALE_FACTOR = 0.742
ADULT_AGE = 18


class Sex(str, Enum):
    MALE = "male"
    FEMALE = "female"

    @classmethod
    def parse(cls, text: str) -> "Sex":
        t = text.strip().lower()
        if t in ("m", "male"):
            return cls.MALE
        if t in ("f", "female"):
            return cls.FEMALE
        raise ValueError(f"unknown sex {text!r} (expected male/female or m/f)")


class InvalidInput(ValueError):
    pass


class MissingEgfr(LookupError):
    """Neither an explicit eGFR nor the inputs to compute one are available."""


@dataclass(frozen=True)
class PatientRenalInput:
    serum_creatinine: float  # mg/dL
    age: int
    sex: Sex


def mdrd_egfr(inp: PatientRenalInput) -> float:
    """Estimated GFR in mL/min/1.73 m^2.

    >>> round(mdrd_egfr(PatientRenalInput(1.0, 60, Sex.MALE)), 2)
    76.22
    """
    scr = inp.serum_creatinine
    if not (isinstance(scr, (int, float)) and math.isfinite(scr) and scr > 0):
        raise InvalidInput(f"serum creatinine must be a positive number of mg/dL, got {scr!r}")
    if int(inp.age) != inp.age or inp.age < ADULT_AGE:
        raise InvalidInput(f"age must be a whole number of years >= {ADULT_AGE}, got {inp.age!r}")
    egfr = MDRD_CONSTANT * scr ** CREATININE_EXPONENT * float(inp.age) ** AGE_EXPONENT
    if inp.sex is Sex.FEMALE:
        egfr *= FEMALE_FACTOR
    return egfr


def age_on(birth_date: date, on: date) -> int:
    """Age in completed years at ``on``."""
    years = on.year - birth_date.year
    if (on.month, on.day) < (birth_date.month, birth_date.day):
        years -= 1
    return years


def resolve_egfr(line: "PrescriptionLine") -> float:
    """The line's eGFR: the explicit value if given, else MDRD from creatinine, age and sex.

    Raises :class:`MissingEgfr` when neither is possible and :class:`InvalidInput`
    when the computed path has out-of-range inputs (e.g. a minor).
    """
    if line.egfr is not None:
        return line.egfr
    if line.serum_creatinine is None or line.birth_date is None or line.sex is None \
            or line.start_date is None:
        raise MissingEgfr("no eGFR and not enough data to compute one")
    age = age_on(line.birth_date, line.start_date)
    return mdrd_egfr(PatientRenalInput(line.serum_creatinine, age, line.sex))
