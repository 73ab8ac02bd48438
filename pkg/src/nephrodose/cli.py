"""``nephrodose`` command line.

Exit codes: 0 success or Accept, 1 usage error, 2 file or parse error,
3 rule-pack validation findings, 4 alert verdict, 5 indeterminate verdict.
"""

from __future__ import annotations

import argparse
import contextlib
import io
import sys
from dataclasses import dataclass
from pathlib import Path

from . import analytics as an
from . import reports
from .dsl import ParseError, parse_rule_pack
from .engine import DoseRegimen, VerdictKind, count_kinds, evaluate_line, evaluate_log
from .ingest import (
    FileUnreadable,
    FileUnwritable,
    MissingHeader,
    PrescriptionLine,
    apply_exclusions,
    parse_prescription_log,
    read_verdict_log,
    write_verdict_log,
)
from .renal import InvalidInput, PatientRenalInput, Sex, mdrd_egfr
from .rulepack import DoseUnit, RulePack, validate_pack

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_INPUT = 2
EXIT_FINDINGS = 3
EXIT_ALERT = 4
EXIT_INDETERMINATE = 5


@dataclass(frozen=True)
class CommandOutcome:
    exit_code: int
    rendered_output: str = ""
    error_output: str = ""


class _UsageError(Exception):
    def __init__(self, message: str, usage: str):
        super().__init__(message)
        self.usage = usage


class _InputError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message, self.format_usage())


def _unit(text: str) -> DoseUnit:
    aliases = {"mg/kg": DoseUnit.MG_PER_KG}
    if text in aliases:
        return aliases[text]
    try:
        return DoseUnit(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"unknown unit {text!r} (mg, g, MIU, mg_per_kg)") from None


def _sex(text: str) -> Sex:
    try:
        return Sex.parse(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def build_parser() -> argparse.ArgumentParser:
    fmt = _Parser(add_help=False)
    fmt.add_argument("--format", choices=("text", "structured"), default="text",
                     help="output rendering (default: text)")

    parser = _Parser(prog="nephrodose", description="Renal dose-adjustment rule engine and evaluation harness.")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    rules = sub.add_parser("rules", help="rule-pack tools")
    rules_sub = rules.add_subparsers(dest="rules_command", metavar="ACTION", parser_class=_Parser)
    rules_sub.required = True
    rc = rules_sub.add_parser("check", parents=[fmt], help="parse and validate a rule pack")
    rc.add_argument("pack")

    eg = sub.add_parser("egfr", parents=[fmt], help="MDRD eGFR (race term omitted)")
    eg.add_argument("--scr", type=float, required=True, help="serum creatinine, mg/dL")
    eg.add_argument("--age", type=int, required=True, help="age in years (>= 18)")
    eg.add_argument("--sex", type=_sex, required=True, help="m or f")

    ck = sub.add_parser("check", parents=[fmt], help="check a single prescription line")
    ck.add_argument("--pack", required=True)
    ck.add_argument("--med", required=True, help="medication code")
    ck.add_argument("--egfr", type=float, help="eGFR, mL/min/1.73 m2")
    ck.add_argument("--scr", type=float, help="serum creatinine (mg/dL), when --egfr is not given")
    ck.add_argument("--age", type=int, help="age in years, with --scr")
    ck.add_argument("--sex", type=_sex, help="m or f, with --scr")
    ck.add_argument("--dose", type=float, required=True, help="amount per administration")
    ck.add_argument("--unit", type=_unit, required=True, help="mg, g, MIU or mg_per_kg")
    ck.add_argument("--freq", type=int, required=True, help="administrations per day")
    ck.add_argument("--weight", type=float, help="kg")
    ck.add_argument("--sbp", type=float, help="systolic blood pressure, mmHg")
    ck.add_argument("--plasma", type=float, help="plasma concentration, mg/L")
    ck.add_argument("--duration", type=int, help="treatment duration, days")

    rp = sub.add_parser("replay", parents=[fmt], help="evaluate a prescription log and write a verdict log")
    rp.add_argument("--pack", required=True)
    rp.add_argument("--log", required=True)
    rp.add_argument("--out", required=True)
    rp.add_argument("--summary", action="store_true", help="print the exclusion summary")

    ag = sub.add_parser("agree", parents=[fmt], help="contingency table and Cohen's kappa")
    ag.add_argument("--verdicts", required=True)

    dg = sub.add_parser("diagnose", parents=[fmt], help="accuracy of both raters against gold labels")
    dg.add_argument("--verdicts", required=True)
    dg.add_argument("--gold", required=True)

    dc = sub.add_parser("discord", parents=[fmt], help="discordance types A/B/C")
    dc.add_argument("--verdicts", required=True)
    dc.add_argument("--adjudications", help="adjudication CSV for the L/P breakdown")

    rep = sub.add_parser("report", help="frequency, rule-impact, severity and correct-analysis reports")
    rep_sub = rep.add_subparsers(dest="report_command", metavar="REPORT", parser_class=_Parser)
    rep_sub.required = True
    rf = rep_sub.add_parser("freq", parents=[fmt], help="alert frequency per medication")
    rf.add_argument("--verdicts", required=True)
    rr = rep_sub.add_parser("rules", parents=[fmt], help="alerts and adjudicated errors per rule")
    rr.add_argument("--verdicts", required=True)
    rr.add_argument("--adjudications")
    denom = rr.add_mutually_exclusive_group()
    denom.add_argument("--pack", help="rule pack whose rule count is the denominator")
    denom.add_argument("--total-rules", type=int, help="explicit rule count denominator")
    rs = rep_sub.add_parser("severity", parents=[fmt], help="severity histogram of adjudicated cases")
    rs.add_argument("--adjudications", required=True)
    rco = rep_sub.add_parser("correct", parents=[fmt], help="lines correctly analyzed by each rater")
    rco.add_argument("--verdicts", required=True)
    rco.add_argument("--adjudications", required=True)
    return parser


def _load_pack(path: str) -> RulePack:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise _InputError(f"cannot read {path}: {exc.strerror or exc}") from None
    except UnicodeDecodeError as exc:
        raise _InputError(f"{path}: not UTF-8 text ({exc.reason})") from None
    try:
        return parse_rule_pack(text)
    except ParseError as exc:
        raise _InputError(f"{path}:{exc.line}:{exc.column}: expected {exc.expected}, found {exc.found}") from None


def _render(args, doc: dict, text: str) -> str:
    return reports.to_json(doc) if args.format == "structured" else text


def _findings_outcome(args, pack_path: str, report) -> CommandOutcome:
    return CommandOutcome(EXIT_FINDINGS, _render(args, reports.validation_doc(report, pack_path),
                                                 reports.validation_text(report, pack_path)))


def _cmd_rules_check(args) -> CommandOutcome:
    report = validate_pack(_load_pack(args.pack))
    if not report.ok:
        return _findings_outcome(args, args.pack, report)
    return CommandOutcome(EXIT_OK, _render(args, reports.validation_doc(report, args.pack),
                                           reports.validation_text(report, args.pack)))


def _cmd_egfr(args) -> CommandOutcome:
    try:
        value = mdrd_egfr(PatientRenalInput(args.scr, args.age, args.sex))
    except InvalidInput as exc:
        raise _UsageError(str(exc), "") from None
    doc = {"report": "egfr", "serum_creatinine": args.scr, "age": args.age,
           "sex": args.sex.value, "egfr": value}
    return CommandOutcome(EXIT_OK, _render(args, doc, f"{value:.1f}\n"))


def _cmd_check(args) -> CommandOutcome:
    pack = _load_pack(args.pack)
    report = validate_pack(pack)
    if not report.ok:
        return _findings_outcome(args, args.pack, report)
    egfr = args.egfr
    if egfr is None and None not in (args.scr, args.age, args.sex):
        try:
            egfr = mdrd_egfr(PatientRenalInput(args.scr, args.age, args.sex))
        except InvalidInput as exc:
            raise _UsageError(str(exc), "") from None
    if egfr is not None and not egfr >= 0:
        raise _UsageError("--egfr must be >= 0", "")
    try:
        regimen = DoseRegimen(args.dose, args.unit, args.freq)
    except ValueError as exc:
        raise _UsageError(str(exc), "") from None
    line = PrescriptionLine(
        patient_id="-", encounter_id="-", medication_code=args.med, regimen=regimen, egfr=egfr,
        weight=args.weight, systolic_bp=args.sbp, plasma_concentration=args.plasma,
        treatment_duration_override=args.duration,
    )
    verdict = evaluate_line(pack, line)
    code = {VerdictKind.ACCEPT: EXIT_OK, VerdictKind.OVER: EXIT_ALERT, VerdictKind.UNDER: EXIT_ALERT,
            VerdictKind.INDETERMINATE: EXIT_INDETERMINATE}[verdict.kind]
    return CommandOutcome(code, _render(args, reports.verdict_doc(verdict), reports.verdict_text(verdict)))


def _cmd_replay(args) -> CommandOutcome:
    pack = _load_pack(args.pack)
    report = validate_pack(pack)
    if not report.ok:
        return _findings_outcome(args, args.pack, report)
    lines, row_errors = parse_prescription_log(args.log)
    records = evaluate_log(pack, lines)
    try:
        write_verdict_log(records, args.out)
    except FileUnwritable as exc:
        raise _InputError(str(exc)) from None
    errors = "".join(f"{args.log}: row {e.row_number}: {e.message}\n" for e in row_errors)
    if not args.summary:
        return CommandOutcome(EXIT_OK, f"wrote {len(records)} verdicts to {args.out}\n"
                              if args.format == "text" else "", errors)
    _, summary = apply_exclusions(lines)
    kinds = count_kinds(records)
    return CommandOutcome(EXIT_OK, _render(args, reports.exclusion_doc(summary, row_errors, kinds),
                                           reports.exclusion_text(summary, row_errors, kinds)), errors)


def _cmd_agree(args) -> CommandOutcome:
    table = an.contingency(read_verdict_log(args.verdicts))
    try:
        kappa = an.cohen_kappa(table)
    except an.DegenerateTable:
        kappa = None
    return CommandOutcome(EXIT_OK, _render(args, reports.kappa_doc(table, kappa), reports.kappa_text(table, kappa)))


def _cmd_diagnose(args) -> CommandOutcome:
    records = read_verdict_log(args.verdicts)
    gold = an.read_gold(args.gold)
    scored, labels = [], []
    for ref, label in sorted(gold.items()):
        if not 1 <= ref <= len(records):
            raise _InputError(f"{args.gold}: record_ref {ref} outside the verdict log")
        rec = records[ref - 1]
        if not rec.scorable:
            raise _InputError(f"{args.gold}: record_ref {ref} has no scorable verdict pair")
        scored.append(rec)
        labels.append(label)
    engine = an.diagnostic_metrics(scored, labels, an.Rater.ENGINE)
    reference = an.diagnostic_metrics(scored, labels, an.Rater.REFERENCE)
    return CommandOutcome(EXIT_OK, _render(args, reports.diagnostic_doc(engine, reference),
                                           reports.diagnostic_text(engine, reference)))


def _cmd_discord(args) -> CommandOutcome:
    records = read_verdict_log(args.verdicts)
    counts = an.discordance_counts(records)
    cases = None
    if args.adjudications:
        cases = an.adjudicate(records, an.read_adjudications(args.adjudications))
    return CommandOutcome(EXIT_OK, _render(args, reports.discordance_doc(counts, cases),
                                           reports.discordance_text(counts, cases)))


def _cmd_report(args) -> CommandOutcome:
    which = args.report_command
    if which == "severity":
        counts = an.severity_summary(an.read_adjudications(args.adjudications))
        return CommandOutcome(EXIT_OK, _render(args, reports.severity_doc(counts), reports.severity_text(counts)))
    records = read_verdict_log(args.verdicts)
    if which == "freq":
        ft = an.alert_frequency_table(records)
        return CommandOutcome(EXIT_OK, _render(args, reports.frequency_doc(ft), reports.frequency_text(ft)))
    adjudications = an.read_adjudications(args.adjudications) if args.adjudications else []
    if which == "correct":
        c = an.correct_analysis(records, adjudications)
        return CommandOutcome(EXIT_OK, _render(args, reports.correct_doc(c), reports.correct_text(c)))
    total = args.total_rules
    if args.pack:
        total = _load_pack(args.pack).rule_count
    r = an.rule_impact(records, adjudications, total)
    return CommandOutcome(EXIT_OK, _render(args, reports.rules_doc(r), reports.rules_text(r)))


_COMMANDS = {
    "egfr": _cmd_egfr,
    "check": _cmd_check,
    "replay": _cmd_replay,
    "agree": _cmd_agree,
    "diagnose": _cmd_diagnose,
    "discord": _cmd_discord,
    "report": _cmd_report,
}


def run(argv: list[str]) -> CommandOutcome:
    parser = build_parser()
    out = io.StringIO()
    try:
        with contextlib.redirect_stdout(out):
            args = parser.parse_args(argv)
    except _UsageError as exc:
        return CommandOutcome(EXIT_USAGE, "", f"{exc.usage}nephrodose: error: {exc}\n")
    except SystemExit as exc:  # --help
        return CommandOutcome(EXIT_OK if not exc.code else EXIT_USAGE, out.getvalue())

    handler = _cmd_rules_check if args.command == "rules" else _COMMANDS[args.command]
    try:
        return handler(args)
    except _UsageError as exc:
        return CommandOutcome(EXIT_USAGE, "", f"nephrodose: error: {exc}\n")
    except (_InputError, FileUnreadable, FileUnwritable, MissingHeader, ValueError) as exc:
        return CommandOutcome(EXIT_INPUT, "", f"nephrodose: {exc}\n")


def main(argv: list[str] | None = None) -> int:
    outcome = run(sys.argv[1:] if argv is None else argv)
    if outcome.rendered_output:
        sys.stdout.write(outcome.rendered_output)
    if outcome.error_output:
        sys.stderr.write(outcome.error_output)
    return outcome.exit_code


if __name__ == "__main__":
    sys.exit(main())
