"""Text format for rule packs (``.rules`` files): parser and canonical serializer.

Example::

    # comments run to end of line
    pack "HEGP sample" version "0.1"

    medication ALLOPURINOL "Allopurinol" unit mg {
      band [0, 15) {
        id ALLO-1
        max_daily 100
        recommend "eGFR < 15: 100 mg every other day maximum"
      }
      band [15, inf) {
        id ALLO-2
        max_daily 300
        min_daily 50
        guard treatment_duration_days <= 30
        recommend "..."
      }
    }

Whitespace, including newlines, only separates tokens. Strings are
double-quoted, may not span lines, and support the escapes ``\\"`` and ``\\\\``.
Parsing never validates band structure; run
:func:`nephrodose.rulepack.validate_pack` for that.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Iterator

from .rulepack import (
    Comparator,
    Covariate,
    CovariateGuard,
    DoseUnit,
    EgfrBandRule,
    MedicationRuleSet,
    RulePack,
)

INFINITY_TOKEN = "inf"

_NUMBER_RE = re.compile(r"-?\d+(\.\d+)?([eE][+-]?\d+)?\Z")
_INT_RE = re.compile(r"\d+\Z")
_IDENT_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_.\-]*\Z")
_NEWLINE_RE = re.compile(r"\r\n|\r|\n")
_BARE_CHARS = re.compile(r"[A-Za-z0-9_.\-+]+")
_CMP_TOKENS = {"<": Comparator.LT, "<=": Comparator.LE, "≤": Comparator.LE,
               ">": Comparator.GT, ">=": Comparator.GE, "≥": Comparator.GE}


class ParseError(ValueError):
    """Syntax error in a rule-pack source, with a 1-based position."""

    def __init__(self, line: int, column: int, expected: str, found: str):
        self.line = line
        self.column = column
        self.expected = expected
        self.found = found
        super().__init__(f"line {line}, column {column}: expected {expected}, found {found}")


@dataclass(frozen=True)
class Token:
    kind: str  # STRING, NUMBER, IDENT, PUNCT, CMP, EOF
    text: str
    value: object
    line: int
    column: int

    def describe(self) -> str:
        if self.kind == "EOF":
            return "end of input"
        if self.kind == "STRING":
            return f'"{self.value}"'
        return repr(self.text)


def _lines(source: str) -> list[str]:
    # Only \n, \r\n and \r end a line; str.splitlines would also split on
    # characters such as U+2028 that may legitimately appear inside strings.
    lines = _NEWLINE_RE.split(source)
    if lines and lines[-1] == "":
        lines.pop()
    return lines


def _tokenize(source: str) -> Iterator[Token]:
    lines = _lines(source)
    for lineno, line in enumerate(lines, start=1):
        i = 0
        n = len(line)
        while i < n:
            ch = line[i]
            col = i + 1
            if ch in " \t\r\f\v﻿":
                i += 1
            elif ch == "#":
                break
            elif ch == '"':
                j = i + 1
                buf = []
                while True:
                    if j >= n:
                        raise ParseError(lineno, col, "closing '\"'", "end of line")
                    c = line[j]
                    if c == "\\":
                        if j + 1 < n and line[j + 1] in '"\\':
                            buf.append(line[j + 1])
                            j += 2
                            continue
                        raise ParseError(lineno, j + 1, 'escape \\" or \\\\', repr(line[j:j + 2]))
                    if c == '"':
                        break
                    buf.append(c)
                    j += 1
                yield Token("STRING", line[i:j + 1], "".join(buf), lineno, col)
                i = j + 1
            elif ch in "{}[](),":
                yield Token("PUNCT", ch, ch, lineno, col)
                i += 1
            elif ch in "<>":
                text = line[i:i + 2] if line[i + 1:i + 2] == "=" else ch
                yield Token("CMP", text, _CMP_TOKENS[text], lineno, col)
                i += len(text)
            elif ch in "≤≥":
                yield Token("CMP", ch, _CMP_TOKENS[ch], lineno, col)
                i += 1
            else:
                m = _BARE_CHARS.match(line, i)
                if not m:
                    raise ParseError(lineno, col, "a token", repr(ch))
                text = m.group()
                if text == INFINITY_TOKEN:
                    yield Token("NUMBER", text, math.inf, lineno, col)
                elif _NUMBER_RE.match(text):
                    yield Token("NUMBER", text, float(text), lineno, col)
                elif _IDENT_RE.match(text):
                    yield Token("IDENT", text, text, lineno, col)
                else:
                    raise ParseError(lineno, col, "a number or identifier", repr(text))
                i = m.end()
    last = len(lines) or 1
    yield Token("EOF", "", None, last, (len(lines[-1]) + 1) if lines else 1)


class _Parser:
    def __init__(self, source: str):
        self._tokens = _tokenize(source)
        self._tok = next(self._tokens)

    def _advance(self) -> Token:
        tok = self._tok
        self._tok = next(self._tokens)
        return tok

    def _fail(self, expected: str):
        raise ParseError(self._tok.line, self._tok.column, expected, self._tok.describe())

    def _keyword(self, word: str, expected: str | None = None) -> Token:
        if self._tok.kind == "IDENT" and self._tok.text == word:
            return self._advance()
        self._fail(expected or f"'{word}'")

    def _punct(self, ch: str) -> Token:
        if self._tok.kind == "PUNCT" and self._tok.text == ch:
            return self._advance()
        self._fail(f"'{ch}'")

    def _string(self, what: str) -> str:
        if self._tok.kind == "STRING":
            return self._advance().value
        self._fail(what)

    def _name(self, what: str) -> str:
        # Pack names and versions may be quoted or bare.
        if self._tok.kind in ("STRING", "IDENT"):
            return self._advance().value
        if self._tok.kind == "NUMBER" and not math.isinf(self._tok.value):
            return self._advance().text
        self._fail(what)

    def _ident(self, what: str) -> str:
        if self._tok.kind == "IDENT":
            return self._advance().text
        self._fail(what)

    def _number(self, what: str, allow_inf: bool = False) -> float:
        tok = self._tok
        if tok.kind == "NUMBER" and (allow_inf or not math.isinf(tok.value)):
            return self._advance().value
        self._fail(what)

    def _int(self, what: str) -> int:
        if self._tok.kind == "NUMBER" and _INT_RE.match(self._tok.text):
            return int(self._advance().text)
        self._fail(what)

    def parse(self) -> RulePack:
        self._keyword("pack", "pack header")
        name = self._name("pack name")
        self._keyword("version")
        version = self._name("pack version")
        rulesets = []
        while self._tok.kind != "EOF":
            rulesets.append(self._medication())
        return RulePack(name, version, tuple(rulesets))

    def _medication(self) -> MedicationRuleSet:
        self._keyword("medication", "'medication' or end of input")
        code = self._ident("medication code")
        name = self._string("quoted medication name")
        self._keyword("unit")
        tok = self._tok
        unit_text = self._ident("dose unit (mg, g, MIU, mg_per_kg)")
        try:
            unit = DoseUnit(unit_text)
        except ValueError:
            raise ParseError(tok.line, tok.column, "dose unit (mg, g, MIU, mg_per_kg)", repr(unit_text))
        self._punct("{")
        bands = []
        while not (self._tok.kind == "PUNCT" and self._tok.text == "}"):
            if self._tok.kind == "EOF":
                self._fail("'band' or '}'")
            bands.append(self._band())
        self._punct("}")
        return MedicationRuleSet(code, name, unit, tuple(bands))

    def _band(self) -> EgfrBandRule:
        self._keyword("band", "'band' or '}'")
        self._punct("[")
        low = self._number("lower eGFR bound")
        self._punct(",")
        high = self._number(f"upper eGFR bound or '{INFINITY_TOKEN}'", allow_inf=True)
        self._punct(")")
        self._punct("{")
        fields: dict[str, object] = {}
        guards: list[CovariateGuard] = []
        while not (self._tok.kind == "PUNCT" and self._tok.text == "}"):
            tok = self._tok
            if tok.kind != "IDENT":
                self._fail("band attribute or '}'")
            key = tok.text
            if key in fields:
                raise ParseError(tok.line, tok.column, f"at most one '{key}' per band", repr(key))
            if key == "id":
                self._advance()
                fields[key] = self._ident("rule id")
            elif key in ("max_daily", "min_daily"):
                self._advance()
                fields[key] = self._number(f"{key} dose")
            elif key == "max_freq":
                self._advance()
                fields[key] = self._int("integer administrations per day")
            elif key == "recommend":
                self._advance()
                fields[key] = self._string("quoted recommendation text")
            elif key == "guard":
                self._advance()
                guard = self._guard()
                if guard in guards:
                    raise ParseError(tok.line, tok.column, "distinct guard clauses", f"duplicate '{guard}'")
                guards.append(guard)
            else:
                self._fail("band attribute (id, max_daily, min_daily, max_freq, guard, recommend) or '}'")
        closing = self._punct("}")
        for required in ("id", "recommend"):
            if required not in fields:
                raise ParseError(closing.line, closing.column, f"'{required}' in band", "'}'")
        return EgfrBandRule(
            rule_id=fields["id"],
            egfr_low=low,
            egfr_high=high,
            recommendation=fields["recommend"],
            max_daily_dose=fields.get("max_daily"),
            min_daily_dose=fields.get("min_daily"),
            max_frequency_per_day=fields.get("max_freq"),
            guards=tuple(guards),
        )

    def _guard(self) -> CovariateGuard:
        tok = self._tok
        text = self._ident("guard covariate")
        try:
            covariate = Covariate(text)
        except ValueError:
            names = ", ".join(c.value for c in Covariate)
            raise ParseError(tok.line, tok.column, f"guard covariate ({names})", repr(text))
        if self._tok.kind != "CMP":
            self._fail("comparator (<, <=, >, >=)")
        comparator = self._advance().value
        threshold = self._number("guard threshold")
        return CovariateGuard(covariate, comparator, threshold)


def parse_rule_pack(source: str) -> RulePack:
    return _Parser(source).parse()


def _quote(text: str) -> str:
    if "\n" in text or "\r" in text:
        raise ValueError("strings in rule packs may not contain line breaks")
    return '"' + text.replace("\\", "\\\\").replace('"', '\\"') + '"'


def _num(x: float) -> str:
    if math.isinf(x) and x > 0:
        return INFINITY_TOKEN
    if float(x).is_integer() and abs(x) < 1e15:
        return str(int(x))
    return repr(float(x))


def serialize_rule_pack(pack: RulePack) -> str:
    """Render ``pack`` in canonical form; ``parse_rule_pack`` of the result equals ``pack``."""
    out = [f"pack {_quote(pack.name)} version {_quote(pack.version)}"]
    for rs in pack.rulesets:
        out.append("")
        out.append(f"medication {rs.medication_code} {_quote(rs.medication_name)} "
                   f"unit {rs.dose_unit.value} {{")
        for band in rs.bands:
            out.append(f"  band [{_num(band.egfr_low)}, {_num(band.egfr_high)}) {{")
            out.append(f"    id {band.rule_id}")
            if band.max_daily_dose is not None:
                out.append(f"    max_daily {_num(band.max_daily_dose)}")
            if band.min_daily_dose is not None:
                out.append(f"    min_daily {_num(band.min_daily_dose)}")
            if band.max_frequency_per_day is not None:
                out.append(f"    max_freq {band.max_frequency_per_day}")
            for guard in band.guards:
                out.append(f"    guard {guard.covariate.value} {guard.comparator.value} "
                           f"{_num(guard.threshold)}")
            out.append(f"    recommend {_quote(band.recommendation)}")
            out.append("  }")
        out.append("}")
    return "\n".join(out) + "\n"
