"""Text and structured (JSON) rendering of analysis results.

Structured documents are plain dicts with a fixed key order and a leading
``"report"`` key naming the schema; see docs/reports.md. Undefined rates are
rendered as ``"n/a"`` in both forms.
"""

from __future__ import annotations

import json
from typing import Any, Mapping

from .analytics import (
    AdjudicatedCase,
    ContingencyTable,
    CorrectAnalysis,
    DiagnosticMetrics,
    DiscordanceType,
    FrequencyTable,
    KappaResult,
    RuleImpactReport,
    Severity,
    adjudication_breakdown,
)
from .engine import Verdict, VerdictKind
from .ingest import ExclusionSummary, RowError
from .rulepack import ValidationReport

NA = "n/a"


def _rate(x: float | None) -> float | str:
    return NA if x is None else x


def _pct_txt(x: float | None, digits: int = 2) -> str:
    return NA if x is None else f"{x:.{digits}f}%"


def _prop_txt(x: float | None) -> str:
    return NA if x is None else f"{100 * x:.2f}%"


def to_json(doc: Mapping[str, Any] | list) -> str:
    return json.dumps(doc, indent=2, ensure_ascii=False) + "\n"


def _table(header: list[str], rows: list[list[str]]) -> str:
    widths = [max(len(str(r[i])) for r in [header] + rows) for i in range(len(header))]
    lines = []
    for j, r in enumerate([header] + rows):
        cells = [str(c).ljust(w) if i == 0 else str(c).rjust(w) for i, (c, w) in enumerate(zip(r, widths))]
        lines.append("  ".join(cells).rstrip())
        if j == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines)


# --- validation -------------------------------------------------------------

def validation_doc(report: ValidationReport, source: str) -> dict:
    return {
        "report": "validation",
        "source": source,
        "findings": [{"subject": f.subject, "kind": f.kind.value, "message": f.message} for f in report],
    }


def validation_text(report: ValidationReport, source: str) -> str:
    n = len(report)
    lines = [f"{source}: {n} finding{'s' if n != 1 else ''}"]
    lines += [f"  {f}" for f in report]
    return "\n".join(lines) + "\n"


# --- single verdict -----------------------------------------------------------

_LABELS = {
    VerdictKind.ACCEPT: "ACCEPT",
    VerdictKind.OVER: "ALERT exceeds max daily dose",
    VerdictKind.UNDER: "ALERT under-dose",
    VerdictKind.INDETERMINATE: "INDETERMINATE",
}


def verdict_doc(v: Verdict) -> dict:
    return {
        "report": "verdict",
        "kind": v.kind.value,
        "rule_id": v.rule_id,
        "recommendation": v.recommendation,
        "indeterminate_reason": v.indeterminate_reason,
        "egfr": v.egfr,
        "daily_dose": v.daily_dose,
    }


def verdict_text(v: Verdict) -> str:
    parts = [_LABELS[v.kind]]
    if v.indeterminate_reason:
        parts.append(f"reason {v.indeterminate_reason}")
    if v.rule_id:
        parts.append(f"rule {v.rule_id}")
    if v.daily_dose is not None:
        parts.append(f"daily dose {v.daily_dose:g}")
    if v.egfr is not None:
        parts.append(f"eGFR {v.egfr:.1f}")
    out = " | ".join(parts)
    if v.recommendation:
        out += f"\n  {v.recommendation}"
    return out + "\n"


# --- replay summary -------------------------------------------------------------

def exclusion_doc(s: ExclusionSummary, row_errors: list[RowError], kinds: Mapping[VerdictKind, int]) -> dict:
    return {
        "report": "exclusions",
        "total": s.total,
        "conditional_excluded": s.conditional_excluded,
        "conditional_pct": _rate(s.conditional_pct),
        "unanalyzed_excluded": s.unanalyzed_excluded,
        "unanalyzed_pct": _rate(s.unanalyzed_pct),
        "analyzed": s.analyzed,
        "analyzed_pct": _rate(s.analyzed_pct),
        "row_errors": [{"row_number": e.row_number, "message": e.message} for e in row_errors],
        "engine_verdicts": {k.value: kinds[k] for k in VerdictKind},
    }


def exclusion_text(s: ExclusionSummary, row_errors: list[RowError], kinds: Mapping[VerdictKind, int]) -> str:
    rows = [
        ["prescription lines", str(s.total), _pct_txt(s.pct(s.total))],
        ["conditional (no dose)", str(s.conditional_excluded), _pct_txt(s.conditional_pct)],
        ["not analyzed by a pharmacist", str(s.unanalyzed_excluded), _pct_txt(s.unanalyzed_pct)],
        ["analyzed by both", str(s.analyzed), _pct_txt(s.analyzed_pct)],
    ]
    out = [_table(["stratum", "lines", "% of total"], rows), ""]
    out.append("engine verdicts: " + ", ".join(f"{k.value} {kinds[k]}" for k in VerdictKind))
    if row_errors:
        out.append(f"{len(row_errors)} malformed row(s) skipped:")
        out += [f"  row {e.row_number}: {e.message}" for e in row_errors]
    return "\n".join(out) + "\n"


# --- agreement ------------------------------------------------------------------

def kappa_doc(t: ContingencyTable, k: KappaResult | None) -> dict:
    doc: dict[str, Any] = {
        "report": "agreement",
        "table": {"both_fired": t.both_fired, "engine_only": t.engine_only,
                  "reference_only": t.reference_only, "neither": t.neither, "n": t.n},
        "excluded_indeterminate": t.excluded_indeterminate,
        "excluded_unpaired": t.excluded_unpaired,
    }
    if k is None:
        doc.update(kappa=NA, observed_agreement=NA, expected_agreement=NA,
                   standard_error=NA, ci95_low=NA, ci95_high=NA)
    else:
        doc.update(kappa=k.kappa, observed_agreement=k.observed_agreement,
                   expected_agreement=k.expected_agreement, standard_error=k.standard_error,
                   ci95_low=k.ci95_low, ci95_high=k.ci95_high)
    return doc


def kappa_text(t: ContingencyTable, k: KappaResult | None) -> str:
    rows = [
        ["engine fired", str(t.both_fired), str(t.engine_only), str(t.both_fired + t.engine_only)],
        ["engine not fired", str(t.reference_only), str(t.neither), str(t.reference_only + t.neither)],
        ["total", str(t.both_fired + t.reference_only), str(t.engine_only + t.neither), str(t.n)],
    ]
    out = [_table(["", "pharmacist fired", "pharmacist not fired", "total"], rows), ""]
    concordant = t.both_fired + t.neither
    if k is None:
        out.append("kappa n/a (degenerate table)")
    else:
        out.append(f"observed agreement {concordant}/{t.n} = {_prop_txt(k.observed_agreement)}")
        out.append(f"expected agreement {_prop_txt(k.expected_agreement)}")
        out.append(f"kappa {k.kappa:.3f} (95% CI [{k.ci95_low:.3f}, {k.ci95_high:.3f}], SE {k.standard_error:.4f})")
    out.append(f"excluded: {t.excluded_indeterminate} indeterminate, {t.excluded_unpaired} without pharmacist verdict")
    return "\n".join(out) + "\n"


# --- diagnostic accuracy ------------------------------------------------------------

def _metrics_doc(m: DiagnosticMetrics) -> dict:
    return {"tp": m.tp, "fp": m.fp, "fn": m.fn, "tn": m.tn, "n": m.n,
            "sensitivity": _rate(m.sensitivity), "specificity": _rate(m.specificity),
            "ppv": _rate(m.ppv), "npv": _rate(m.npv), "accuracy": _rate(m.accuracy)}


def diagnostic_doc(engine: DiagnosticMetrics, reference: DiagnosticMetrics) -> dict:
    return {"report": "diagnostic", "engine": _metrics_doc(engine), "reference": _metrics_doc(reference)}


def diagnostic_text(engine: DiagnosticMetrics, reference: DiagnosticMetrics) -> str:
    header = ["rater", "TP", "FP", "FN", "TN", "sensitivity", "specificity", "PPV", "NPV", "correct"]
    rows = []
    for name, m in (("engine", engine), ("pharmacist", reference)):
        rows.append([name, str(m.tp), str(m.fp), str(m.fn), str(m.tn), _prop_txt(m.sensitivity),
                     _prop_txt(m.specificity), _prop_txt(m.ppv), _prop_txt(m.npv),
                     f"{m.tp + m.tn}/{m.n} ({_prop_txt(m.accuracy)})"])
    return _table(header, rows) + "\n"


def correct_doc(c: CorrectAnalysis) -> dict:
    return {"report": "correct_analysis", "n": c.n,
            "engine_correct": c.engine_correct, "engine_pct": _rate(c.engine_pct),
            "reference_correct": c.reference_correct, "reference_pct": _rate(c.reference_pct)}


def correct_text(c: CorrectAnalysis) -> str:
    return (f"engine correctly analyzed {c.engine_correct}/{c.n} ({_pct_txt(c.engine_pct)})\n"
            f"pharmacists correctly analyzed {c.reference_correct}/{c.n} ({_pct_txt(c.reference_pct)})\n")


# --- discordance ----------------------------------------------------------------

_TYPE_LABELS = {
    DiscordanceType.A: "A  engine silent, pharmacist reported an error",
    DiscordanceType.B: "B  engine over-dose alert, pharmacist accepted",
    DiscordanceType.C: "C  engine under-dose alert, pharmacist accepted",
    DiscordanceType.OTHER: "Other  both alerted, different kinds",
}


def discordance_doc(counts: Mapping[DiscordanceType, int], cases: list[AdjudicatedCase] | None) -> dict:
    doc: dict[str, Any] = {"report": "discordance",
                           "counts": {t.value: counts[t] for t in DiscordanceType},
                           "total": sum(counts.values())}
    if cases is not None:
        breakdown = adjudication_breakdown(cases)
        doc["adjudication"] = {
            t.value: {side: {r.value: n for r, n in sorted(hist.items(), key=lambda kv: kv[0].value)}
                      for side, hist in breakdown[t].items()}
            for t in DiscordanceType if t in breakdown
        }
    return doc


def discordance_text(counts: Mapping[DiscordanceType, int], cases: list[AdjudicatedCase] | None) -> str:
    breakdown = adjudication_breakdown(cases) if cases is not None else {}
    header = ["type", "N"] + (["agrees w/ engine (L)", "agrees w/ pharmacist (P)"] if cases is not None else [])
    rows = []
    for t in DiscordanceType:
        row = [_TYPE_LABELS[t], str(counts[t])]
        if cases is not None:
            sides = breakdown.get(t, {"Engine": {}, "Reference": {}})
            row += [str(sum(sides["Engine"].values())), str(sum(sides["Reference"].values()))]
        rows.append(row)
    total = ["total", str(sum(counts.values()))]
    if cases is not None:
        total += [str(sum(c.agrees_with.value == "Engine" for c in cases)),
                  str(sum(c.agrees_with.value == "Reference" for c in cases))]
    rows.append(total)
    out = [_table(header, rows)]
    for t in DiscordanceType:
        if t not in breakdown:
            continue
        for side, label in (("Engine", "L"), ("Reference", "P")):
            hist = breakdown[t][side]
            if hist:
                items = ", ".join(f"{r.value} {n}" for r, n in sorted(hist.items(), key=lambda kv: kv[0].value))
                out.append(f"  {t.value}-{label}: {items}")
    return "\n".join(out) + "\n"


# --- frequency ----------------------------------------------------------------

def frequency_doc(ft: FrequencyTable) -> dict:
    def row(r):
        return {"medication_code": r.medication_code, "n_lines": r.n_lines,
                "engine_over": r.engine_over, "engine_over_pct": _rate(r.pct(r.engine_over)),
                "engine_under": r.engine_under, "engine_under_pct": _rate(r.pct(r.engine_under)),
                "engine_alerts": r.engine_alerts, "engine_alerts_pct": _rate(r.pct(r.engine_alerts)),
                "reference_over": r.reference_over, "reference_over_pct": _rate(r.pct(r.reference_over)),
                "reference_under": r.reference_under, "reference_under_pct": _rate(r.pct(r.reference_under)),
                "reference_alerts": r.reference_alerts,
                "reference_alerts_pct": _rate(r.pct(r.reference_alerts))}
    return {"report": "frequency", "rows": [row(r) for r in ft.rows], "totals": row(ft.totals)}


def frequency_text(ft: FrequencyTable) -> str:
    def cell(r, n):
        return f"{n} ({_pct_txt(r.pct(n))})"
    header = ["medication", "lines", "engine over", "engine under", "pharm. over", "pharm. under"]
    rows = [[r.medication_code, str(r.n_lines), cell(r, r.engine_over), cell(r, r.engine_under),
             cell(r, r.reference_over), cell(r, r.reference_under)] for r in ft.rows + [ft.totals]]
    t = ft.totals
    tail = (f"engine alerts {cell(t, t.engine_alerts)}; "
            f"pharmacist alerts {cell(t, t.reference_alerts)}")
    return _table(header, rows) + "\n" + tail + "\n"


# --- rule impact ----------------------------------------------------------------

def rules_doc(r: RuleImpactReport) -> dict:
    return {
        "report": "rule_impact",
        "rows": [{"rule_id": row.rule_id, "alerts_fired": row.alerts_fired, "adjudicated": row.adjudicated,
                  "adjudicated_wrong": row.adjudicated_wrong,
                  "reasons": {k.value: v for k, v in sorted(row.reasons.items(), key=lambda kv: kv[0].value)}}
                 for row in r.rows],
        "total_rules": r.total_rules if r.total_rules is not None else NA,
        "egfr_misconfigured_rules": r.egfr_misconfigured_rules,
        "egfr_misconfigured_pct": _rate(r.egfr_misconfigured_pct),
    }


def rules_text(r: RuleImpactReport) -> str:
    rows = [[row.rule_id, str(row.alerts_fired), str(row.adjudicated), str(row.adjudicated_wrong),
             ", ".join(f"{k.value} {v}" for k, v in sorted(row.reasons.items(), key=lambda kv: kv[0].value))]
            for row in r.rows]
    out = [_table(["rule", "alerts", "adjudicated", "judged wrong", "reasons"], rows)] if rows else []
    n = len(r.egfr_misconfigured_rules)
    denom = r.total_rules if r.total_rules is not None else NA
    out.append(f"rules with misconfigured eGFR thresholds: {n}/{denom} ({_pct_txt(r.egfr_misconfigured_pct)})")
    if r.egfr_misconfigured_rules:
        out.append("  " + ", ".join(r.egfr_misconfigured_rules))
    return "\n".join(out) + "\n"


# --- severity -------------------------------------------------------------------

def severity_doc(counts: Mapping[Severity, int]) -> dict:
    return {"report": "severity", "counts": {s.value: counts[s] for s in Severity},
            "total": sum(counts.values())}


def severity_text(counts: Mapping[Severity, int]) -> str:
    rows = [[s.value, str(counts[s])] for s in Severity] + [["total", str(sum(counts.values()))]]
    return _table(["severity", "cases"], rows) + "\n"
