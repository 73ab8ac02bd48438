from __future__ import annotations

from importlib import resources
from pathlib import Path

from nephrodose.engine import ReferenceVerdict, Verdict, VerdictKind, VerdictRecord
from nephrodose.rulepack import INF, DoseUnit, EgfrBandRule, MedicationRuleSet, RulePack

DATA = Path(str(resources.files("nephrodose") / "data"))
SYNTHETIC = DATA / "synthetic"
SAMPLE_PACK = DATA / "sample_hegp.rules"


def band(rule_id, low, high, max_daily=None, min_daily=None, **kw) -> EgfrBandRule:
    return EgfrBandRule(rule_id, low, high, kw.pop("recommendation", f"{rule_id} advice"),
                        max_daily_dose=max_daily, min_daily_dose=min_daily, **kw)


def allopurinol(*bands: EgfrBandRule) -> MedicationRuleSet:
    bands = bands or (
        band("A1", 0, 15, 100),
        band("A2", 15, 30, 100, 50),
        band("A3", 30, 60, 200, 100),
        band("A4", 60, INF, 800, 100),
    )
    return MedicationRuleSet("ALLOPURINOL", "Allopurinol", DoseUnit.MG, tuple(bands))


def pack_of(*rulesets: MedicationRuleSet) -> RulePack:
    return RulePack("test", "1", tuple(rulesets))


def record(engine: VerdictKind | str, reference: ReferenceVerdict | str | None,
           code: str = "MED", rule_id: str = "MED-1") -> VerdictRecord:
    """A verdict record from short labels: engine Accept/Over/Under/Indeterminate, reference ACCEPT/OVER/UNDER."""
    short = {"Accept": VerdictKind.ACCEPT, "Over": VerdictKind.OVER,
             "Under": VerdictKind.UNDER, "Indeterminate": VerdictKind.INDETERMINATE}
    kind = short.get(engine, engine) if isinstance(engine, str) else engine
    if kind is VerdictKind.INDETERMINATE:
        v = Verdict(kind, indeterminate_reason="MissingEgfr")
    else:
        v = Verdict(kind, rule_id=rule_id, recommendation="advice" if kind.fired else None,
                    egfr=40.0, daily_dose=100.0)
    ref = ReferenceVerdict(reference) if isinstance(reference, str) else reference
    return VerdictRecord("P1", "E1", code, v, ref)


# --- hypothesis strategies --------------------------------------------------

from hypothesis import strategies as st  # noqa: E402

from nephrodose.rulepack import Comparator, Covariate, CovariateGuard  # noqa: E402

idents = st.from_regex(r"[A-Za-z_][A-Za-z0-9_.\-]{0,10}", fullmatch=True).filter(lambda s: s != "inf")
# Any printable text on one line; the DSL only forbids \n and \r inside strings.
texts = st.text(st.characters(blacklist_characters="\n\r", blacklist_categories=("Cs",)), max_size=30)
doses = st.one_of(st.integers(0, 5000).map(float),
                  st.floats(0, 5000, allow_nan=False, allow_infinity=False))
guards = st.builds(CovariateGuard, st.sampled_from(Covariate), st.sampled_from(Comparator),
                   st.floats(0, 1000, allow_nan=False, allow_infinity=False))


@st.composite
def edges(draw, max_inner: int = 6) -> list[float]:
    inner = draw(st.lists(st.floats(0.01, 500, allow_nan=False).map(lambda x: round(x, 2)),
                          max_size=max_inner, unique=True))
    return [0.0] + sorted(set(inner) - {0.0}) + [INF]


@st.composite
def band_constraints(draw) -> dict:
    lo, hi = sorted((draw(doses), draw(doses)))
    which = draw(st.sampled_from(["max", "min", "both"]))
    return dict(
        max_daily_dose=hi if which != "min" else None,
        min_daily_dose=lo if which != "max" else None,
        max_frequency_per_day=draw(st.none() | st.integers(1, 6)),
        guards=tuple(draw(st.lists(guards, max_size=3, unique_by=lambda g: (g.covariate, g.comparator)))),
    )


@st.composite
def rulesets(draw, code: str | None = None) -> MedicationRuleSet:
    code = code or draw(idents)
    bounds = draw(edges())
    bands = tuple(
        EgfrBandRule(f"{code}-{i + 1}", lo, hi, draw(texts), **draw(band_constraints()))
        for i, (lo, hi) in enumerate(zip(bounds, bounds[1:]))
    )
    return MedicationRuleSet(code, draw(texts), draw(st.sampled_from(DoseUnit)), bands)


@st.composite
def valid_packs(draw) -> RulePack:
    codes = draw(st.lists(idents, min_size=1, max_size=4, unique=True))
    return RulePack(draw(texts), draw(texts), tuple(draw(rulesets(c)) for c in codes))


# --- seeded generators for the large acceptance sweeps ----------------------

import random  # noqa: E402
import string  # noqa: E402

_TEXT_CHARS = string.ascii_letters + string.digits + ' _-.,;:()[]{}<>=#"\\\'éµ≤≥\t\x85 '


def random_text(rng: random.Random, max_len: int = 20) -> str:
    return "".join(rng.choice(_TEXT_CHARS) for _ in range(rng.randint(0, max_len)))


def random_ident(rng: random.Random) -> str:
    head = rng.choice(string.ascii_letters + "_")
    return head + "".join(rng.choice(string.ascii_letters + string.digits + "_.-")
                          for _ in range(rng.randint(0, 8)))


def random_number(rng: random.Random) -> float:
    return float(rng.randint(0, 3000)) if rng.random() < 0.5 else rng.uniform(0, 3000)


def random_ruleset(rng: random.Random, code: str) -> MedicationRuleSet:
    inner = sorted({round(rng.uniform(0.01, 300), rng.choice([0, 1, 2])) for _ in range(rng.randint(0, 6))} - {0.0})
    bounds = [0.0] + inner + [INF]
    bands = []
    for i, (lo, hi) in enumerate(zip(bounds, bounds[1:])):
        a, b = sorted((random_number(rng), random_number(rng)))
        which = rng.choice(["max", "min", "both"])
        picked = rng.sample([(c, k) for c in Covariate for k in Comparator], rng.randint(0, 2))
        bands.append(EgfrBandRule(
            f"{code}-{i + 1}", lo, hi, random_text(rng),
            max_daily_dose=b if which != "min" else None,
            min_daily_dose=a if which != "max" else None,
            max_frequency_per_day=rng.choice([None, rng.randint(1, 6)]),
            guards=tuple(CovariateGuard(c, k, rng.choice([float(rng.randint(0, 200)), rng.uniform(0, 200)]))
                         for c, k in picked),
        ))
    return MedicationRuleSet(code, random_text(rng), rng.choice(list(DoseUnit)), tuple(bands))


def random_pack(rng: random.Random) -> RulePack:
    codes = list(dict.fromkeys(random_ident(rng) for _ in range(rng.randint(1, 4))))
    codes = [c for c in codes if c != "inf"] or ["MED"]
    return RulePack(random_text(rng), random_text(rng), tuple(random_ruleset(rng, c) for c in codes))
