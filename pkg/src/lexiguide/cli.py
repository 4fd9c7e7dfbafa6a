"""Batch pipeline front-end.

Each stage reads and writes one artifact on disk so stages can be swapped
with external tools: train-ngram produces a model file, label and extract
produce per-example constraint files, decode produces output records, the
eval commands produce a report JSON, and report renders it as a text
table. Commands are idempotent given identical inputs and configuration.

All flags are also readable from a JSON config file via --config; explicit
command-line flags win over config values. The LEXIGUIDE_BRIDGE
environment variable overrides the remote scorer endpoint.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Callable, Sequence

from . import (
    constraints as constraints_mod,
    corpus as corpus_mod,
    decoding,
    extraction,
    metrics,
    scorers,
)

BRIDGE_ENV_VAR = "LEXIGUIDE_BRIDGE"
REPORT_SCHEMA = "lexiguide-report/v1"

_REPORT_FIELDS = (
    "schema",
    "averaging",
    "num_examples",
    "concepts",
    "preservation",
    "extraction",
    "missing_categories",
    "estimated_actual_missing",
    "rouge",
)


class CliError(RuntimeError):
    """Fatal command error; rendered as one machine-parseable line."""


def _policy_from_args(args: argparse.Namespace) -> corpus_mod.NormalizationPolicy:
    return corpus_mod.NormalizationPolicy(
        casefold=not args.no_casefold,
        collapse_whitespace=not args.no_collapse_whitespace,
        strip_punctuation_edges=not args.no_strip_punctuation,
    )


def _add_policy_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--no-casefold", action="store_true", default=None)
    parser.add_argument("--no-collapse-whitespace", action="store_true", default=None)
    parser.add_argument("--no-strip-punctuation", action="store_true", default=None)


def _add_common_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON file of flag defaults")
    parser.add_argument("--seed", type=int, default=None,
                        help="seed for randomized fixture generation (reserved)")


def _apply_config(args: argparse.Namespace) -> argparse.Namespace:
    """Fill flags the user left unset from the --config JSON file."""
    if not args.config:
        return args
    path = Path(args.config)
    if not path.exists():
        raise CliError(f"missing artifact: config file {path}")
    try:
        values = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise CliError(f"config file {path}: invalid JSON ({exc.msg})") from exc
    if not isinstance(values, dict):
        raise CliError(f"config file {path}: expected an object")
    for key, value in values.items():
        dest = key.replace("-", "_")
        if hasattr(args, dest) and getattr(args, dest) is None:
            setattr(args, dest, value)
    return args


def _require_input(path_str: str | None, what: str) -> Path:
    if not path_str:
        raise CliError(f"missing artifact: no {what} given")
    path = Path(path_str)
    if not path.exists():
        raise CliError(f"missing artifact: {what} {path}")
    return path


def _load_corpus_arg(args: argparse.Namespace) -> list[corpus_mod.CorpusExample]:
    path = _require_input(args.input, "input corpus")
    try:
        return corpus_mod.load_corpus(path)
    except corpus_mod.CorpusError as exc:
        raise CliError(f"{path}: {exc}") from exc


def _write_jsonl(path: str, records: Sequence[dict]) -> None:
    with Path(path).open("w", encoding="utf-8") as handle:
        for record in records:
            handle.write(json.dumps(record, ensure_ascii=False) + "\n")


def _read_jsonl(path: Path) -> list[dict]:
    records = []
    with path.open(encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            if not line.strip():
                raise CliError(f"{path}: line {lineno}: blank line")
            try:
                records.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise CliError(f"{path}: line {lineno}: invalid JSON ({exc.msg})") from exc
    return records


def _note(message: str) -> None:
    print(message, file=sys.stderr)


# --- train-ngram ------------------------------------------------------------


def _cmd_train_ngram(args: argparse.Namespace) -> int:
    args.n = 2 if args.n is None else args.n
    args.k = 0.1 if args.k is None else args.k
    args.field = args.field or "target"
    if not args.output:
        raise CliError("missing artifact: no output path given")
    policy = _policy_from_args(args)
    examples = _load_corpus_arg(args)
    missing = [e.id for e in examples if getattr(e, args.field, None) is None]
    if missing:
        raise CliError(f"examples missing field {args.field}: {', '.join(missing)}")

    words: set[str] = set()
    for example in examples:
        words.update(corpus_mod.tokenize(example.source, policy))
        if example.target is not None:
            words.update(corpus_mod.tokenize(example.target, policy))
        words.update(corpus_mod.tokenize(getattr(example, args.field), policy))
    vocab = scorers.Vocabulary.from_tokens(words)

    sequences = [
        [vocab.id_of(t) for t in corpus_mod.tokenize(getattr(e, args.field), policy)]
        for e in examples
    ]
    try:
        model = scorers.train_ngram(sequences, n=args.n, k=args.k, vocab=vocab)
    except ValueError as exc:
        raise CliError(str(exc)) from exc
    model.save(args.output)
    _note(f"trained {args.n}-gram over {len(vocab)} tokens -> {args.output}")
    return 0


# --- label ------------------------------------------------------------------


def _cmd_label(args: argparse.Namespace) -> int:
    args.occurrences = args.occurrences or "first"
    if not args.output:
        raise CliError("missing artifact: no output path given")
    policy = _policy_from_args(args)
    examples = _load_corpus_arg(args)
    records = []
    for example in examples:
        labels, unmapped = extraction.label_gold_constraints(
            example, policy, occurrences=args.occurrences
        )
        records.append(
            {
                "id": example.id,
                "labels": [
                    {"surface": l.surface, "span": list(l.source_span), "origin": l.origin}
                    for l in labels
                ],
                "unmapped": unmapped,
                "constraints": sorted({l.surface for l in labels}),
            }
        )
    _write_jsonl(args.output, records)
    _note(f"labeled {len(records)} examples -> {args.output}")
    return 0


# --- extract / sweep --------------------------------------------------------


def _candidates_for(
    examples: Sequence[corpus_mod.CorpusExample],
    args: argparse.Namespace,
    policy: corpus_mod.NormalizationPolicy,
) -> dict[str, list[extraction.ScoredCandidate]]:
    if args.candidates:
        path = _require_input(args.candidates, "candidate score file")
        try:
            by_id = extraction.load_candidate_file(path)
        except corpus_mod.CorpusError as exc:
            raise CliError(f"{path}: {exc}") from exc
        return {e.id: by_id.get(e.id, []) for e in examples}
    return {e.id: extraction.heuristic_candidates(e.source, policy) for e in examples}


def _cmd_extract(args: argparse.Namespace) -> int:
    args.threshold = 0.5 if args.threshold is None else args.threshold
    if not args.output:
        raise CliError("missing artifact: no output path given")
    policy = _policy_from_args(args)
    examples = _load_corpus_arg(args)
    candidates = _candidates_for(examples, args, policy)
    records = []
    for example in examples:
        kept = extraction.extract_constraints(
            example.source, candidates[example.id], args.threshold, policy
        )
        records.append({"id": example.id, "constraints": kept})
    _write_jsonl(args.output, records)
    _note(f"extracted constraints for {len(records)} examples -> {args.output}")
    return 0


def _cmd_sweep(args: argparse.Namespace) -> int:
    thresholds = [
        float(t) for t in (args.thresholds or "0,0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9").split(",")
    ]
    policy = _policy_from_args(args)
    examples = _load_corpus_arg(args)
    candidates = _candidates_for(examples, args, policy)
    gold: dict[str, list[str]] = {}
    for example in examples:
        labels, _ = extraction.label_gold_constraints(example, policy)
        gold[example.id] = sorted({l.surface for l in labels})
    have_gold = any(gold.values())

    rows = []
    for threshold in thresholds:
        kept_total = 0
        tp = pred_n = gold_n = 0
        for example in examples:
            kept = extraction.extract_constraints(
                example.source, candidates[example.id], threshold, policy
            )
            kept_total += len(kept)
            if have_gold:
                pred_set = set(kept)
                gold_set = set(gold[example.id])
                tp += len(pred_set & gold_set)
                pred_n += len(pred_set)
                gold_n += len(gold_set)
        row: dict = {"threshold": threshold, "constraints_kept": kept_total}
        if have_gold:
            prf = metrics.prf_from_counts(tp, pred_n, gold_n)
            row.update(precision=prf.precision, recall=prf.recall, f1=prf.f1)
        rows.append(row)
    if args.output:
        _write_jsonl(args.output, rows)
        _note(f"sweep over {len(thresholds)} thresholds -> {args.output}")
    else:
        for row in rows:
            print(json.dumps(row))
    return 0


# --- decode -----------------------------------------------------------------


def _make_scorer(args: argparse.Namespace):
    chosen = [
        name
        for name, value in (
            ("scorer_table", args.scorer_table),
            ("scorer_ngram", args.scorer_ngram),
            ("scorer_remote", args.scorer_remote),
        )
        if value
    ]
    if len(chosen) != 1:
        raise CliError("exactly one scorer source required "
                       "(--scorer-table, --scorer-ngram, or --scorer-remote)")
    if args.scorer_table:
        path = _require_input(args.scorer_table, "table scorer file")
        return scorers.TableScorer.from_file(path)
    if args.scorer_ngram:
        path = _require_input(args.scorer_ngram, "ngram model file")
        return scorers.NGramModel.load(path)
    endpoint = os.environ.get(BRIDGE_ENV_VAR) or args.scorer_remote
    try:
        return scorers.RemoteScorer.connect(endpoint)
    except (OSError, ValueError, scorers.RemoteScorerError) as exc:
        raise CliError(f"cannot reach bridge at {endpoint}: {exc}") from exc


def _constraint_surfaces(
    examples: Sequence[corpus_mod.CorpusExample], args: argparse.Namespace
) -> dict[str, list[str]]:
    if args.constraints:
        path = _require_input(args.constraints, "constraints file")
        by_id: dict[str, list[str]] = {}
        for record in _read_jsonl(path):
            if "id" not in record or "constraints" not in record:
                raise CliError(f"{path}: records need id and constraints")
            by_id[record["id"]] = list(record["constraints"])
        return {e.id: by_id.get(e.id, []) for e in examples}
    return {e.id: list(e.extracted_constraints or []) for e in examples}


def _cmd_decode(args: argparse.Namespace) -> int:
    args.mode = args.mode or "plain"
    args.beam = 10 if args.beam is None else args.beam
    args.max_len = 32 if args.max_len is None else args.max_len
    args.tau = 0.05 if args.tau is None else args.tau
    args.eos_policy = args.eos_policy or "relaxed"
    args.length_norm = args.length_norm or "off"
    args.prompt_field = args.prompt_field or "none"
    args.workers = 1 if args.workers is None else args.workers

    if not args.output:
        raise CliError("missing artifact: no output path given")
    policy = _policy_from_args(args)
    examples = _load_corpus_arg(args)
    surfaces = _constraint_surfaces(examples, args)
    scorer = _make_scorer(args)
    try:
        config = decoding.DecodeConfig(
            beam_size=args.beam,
            max_len=args.max_len,
            length_normalization=args.length_norm,
            mode=args.mode,
            trace=bool(args.trace),
        )
        denoise = decoding.DenoiseConfig(tau=args.tau, eos_policy=args.eos_policy)
    except ValueError as exc:
        raise CliError(str(exc)) from exc

    remote = isinstance(scorer, scorers.RemoteScorer)

    def tokenize_to_ids(text: str, example_id: str) -> list[int]:
        if remote:
            try:
                return scorer.tokenize(text)
            except scorers.RemoteScorerError as exc:
                raise CliError(f"example {example_id}: bridge cannot tokenize prompt: {exc}")
        ids = []
        for word in corpus_mod.tokenize(text, policy):
            try:
                ids.append(scorer.vocab.id_of(word))
            except KeyError:
                pass  # prompt words outside the vocabulary carry no signal
        return ids

    def run_one(example: corpus_mod.CorpusExample) -> dict:
        prompt: list[int] = []
        if args.prompt_field == "source":
            prompt = tokenize_to_ids(example.source, example.id)
        kept: list[constraints_mod.Constraint] = []
        dropped: list[str] = []
        for surface in surfaces[example.id]:
            if remote:
                try:
                    ids = scorer.tokenize(surface)
                except scorers.RemoteScorerError:
                    ids = []
                if ids:
                    kept.append(constraints_mod.Constraint(surface, tuple(ids)))
                else:
                    dropped.append(surface)
                continue
            try:
                kept.extend(constraints_mod.compile_constraints([surface], scorer.vocab, policy))
            except constraints_mod.ConstraintError:
                dropped.append(surface)
        if args.mode == "plain":
            result = decoding.beam_search(scorer, prompt, config)
        elif args.mode == "dba":
            result = decoding.decode_dba(scorer, prompt, kept, config)
        else:
            result = decoding.decode_ddba(scorer, prompt, kept, config, denoise)
        record = {
            "id": example.id,
            "tokens": list(result.tokens),
            "text": " ".join(scorer.vocab.tokens[t] for t in result.tokens),
            "logprob": result.logprob,
            "finished": result.finished,
            "satisfied_constraints": [c.surface for c in result.satisfied_constraints],
            "satisfied_token_count": result.satisfied_token_count,
        }
        if dropped:
            record["oov_constraints"] = dropped
        trace_records = []
        if result.trace is not None:
            trace_records = [{"id": example.id, **step} for step in result.trace]
        return {"record": record, "trace": trace_records}

    try:
        if args.workers > 1:
            with ThreadPoolExecutor(max_workers=args.workers) as pool:
                outcomes = list(pool.map(run_one, examples))
        else:
            outcomes = [run_one(e) for e in examples]
    finally:
        if remote:
            scorer.close()

    _write_jsonl(args.output, [o["record"] for o in outcomes])
    if args.trace:
        _write_jsonl(args.trace, [t for o in outcomes for t in o["trace"]])
    finished = sum(1 for o in outcomes if o["record"]["finished"])
    _note(f"decoded {len(outcomes)} examples ({finished} finished) -> {args.output}")
    return 0


# --- eval commands ----------------------------------------------------------


def _merge_decodes(
    examples: list[corpus_mod.CorpusExample], args: argparse.Namespace
) -> tuple[list[corpus_mod.CorpusExample], dict[str, bool]]:
    finished: dict[str, bool] = {}

    def index_by_id(path: Path) -> dict[str, dict]:
        by_id = {}
        for record in _read_jsonl(path):
            if "id" not in record:
                raise CliError(f"{path}: record without an id")
            by_id[record["id"]] = record
        return by_id

    if getattr(args, "decodes", None):
        by_id = index_by_id(_require_input(args.decodes, "decode output file"))
        for example in examples:
            record = by_id.get(example.id)
            if record is not None:
                example.system_output = record.get("text", "")
                finished[example.id] = bool(record.get("finished"))
    if getattr(args, "constraints", None):
        by_id = index_by_id(_require_input(args.constraints, "constraints file"))
        for example in examples:
            record = by_id.get(example.id)
            if record is not None:
                example.extracted_constraints = list(record.get("constraints", []))
    return examples, finished


def _cmd_eval_concepts(args: argparse.Namespace) -> int:
    args.averaging = args.averaging or "micro"
    policy = _policy_from_args(args)
    examples = _load_corpus_arg(args)
    examples, finished = _merge_decodes(examples, args)
    if args.finished_only:
        if not finished:
            raise CliError("--finished-only needs --decodes with finished flags")
        examples = [e for e in examples if finished.get(e.id)]
        if not examples:
            raise CliError("no finished decodes to evaluate")

    report: dict = {
        "schema": REPORT_SCHEMA,
        "averaging": args.averaging,
        "num_examples": len(examples),
    }
    have_outputs = all(e.system_output is not None for e in examples)
    try:
        stats = (
            metrics.fulfillment_stats(examples, policy, args.averaging)
            if have_outputs
            else metrics.availability_stats(examples, policy, args.averaging)
        )
    except ValueError as exc:
        raise CliError(str(exc)) from exc
    report["concepts"] = {
        "mean_num_concepts": stats.mean_num_concepts,
        "availability": stats.availability,
        "fulfillment_all": stats.fulfillment_all,
        "fulfillment_available": stats.fulfillment_available,
        "num_with_concepts": stats.num_with_concepts,
    }

    if have_outputs and all(e.extracted_constraints is not None for e in examples):
        mode = args.preservation_mode or "enforced-constraints"
        try:
            pres = metrics.preservation_prf(examples, mode, policy, args.averaging)
        except ValueError as exc:
            raise CliError(str(exc)) from exc
        report["preservation"] = {
            "precision": pres.precision,
            "recall": pres.recall,
            "f1": pres.f1,
            "mode": pres.mode,
            "num_excluded": pres.num_excluded,
        }

    try:
        categories = metrics.missing_category_stats(examples, policy)
    except ValueError as exc:
        raise CliError(str(exc)) from exc
    if categories["total_annotated"]:
        report["missing_categories"] = categories
        if stats.availability is not None:
            report["estimated_actual_missing"] = metrics.estimate_actual_missing(
                stats.availability, categories["fractions"]["Miss"]
            )

    _emit_report(report, args)
    return 0


def _cmd_eval_extraction(args: argparse.Namespace) -> int:
    policy = _policy_from_args(args)
    examples = _load_corpus_arg(args)
    examples, _ = _merge_decodes(examples, args)
    tp = pred_n = gold_n = 0
    for example in examples:
        if example.extracted_constraints is None:
            raise CliError(f"example {example.id} has no constraints to evaluate")
        labels, _ = extraction.label_gold_constraints(example, policy)
        gold = {l.surface for l in labels}
        pred = {corpus_mod.normalize(s, policy) for s in example.extracted_constraints} - {""}
        tp += len(pred & gold)
        pred_n += len(pred)
        gold_n += len(gold)
    prf = metrics.prf_from_counts(tp, pred_n, gold_n)
    report = {
        "schema": REPORT_SCHEMA,
        "averaging": "micro",
        "num_examples": len(examples),
        "extraction": {"precision": prf.precision, "recall": prf.recall, "f1": prf.f1},
    }
    _emit_report(report, args)
    return 0


def _cmd_eval_rouge(args: argparse.Namespace) -> int:
    args.variant = args.variant or "all"
    policy = _policy_from_args(args)
    examples = _load_corpus_arg(args)
    examples, _ = _merge_decodes(examples, args)
    missing = [e.id for e in examples if e.system_output is None or e.target is None]
    if missing:
        raise CliError(f"examples missing target or system_output: {', '.join(missing)}")
    pairs = [(e.system_output, e.target) for e in examples]
    variants = ("1", "2", "L") if args.variant == "all" else (args.variant,)
    scores = {}
    for variant in variants:
        prf = metrics.rouge_corpus(pairs, variant if variant == "L" else int(variant), policy)
        scores[f"rouge-{variant}"] = {
            "precision": prf.precision,
            "recall": prf.recall,
            "f1": prf.f1,
        }
    report = {
        "schema": REPORT_SCHEMA,
        "averaging": "macro",
        "num_examples": len(examples),
        "rouge": scores,
    }
    _emit_report(report, args)
    return 0


def _emit_report(report: dict, args: argparse.Namespace) -> None:
    payload = json.dumps(report, indent=2, ensure_ascii=False) + "\n"
    if args.output:
        Path(args.output).write_text(payload, encoding="utf-8")
        _note(f"report -> {args.output}")
    else:
        sys.stdout.write(payload)


# --- report rendering -------------------------------------------------------


def _pct(value: float | None) -> str:
    return "n/a" if value is None else f"{100.0 * value:.1f}%"


def _rouge_num(value: float) -> str:
    return f"{100.0 * value:.2f}"


def render_report(report: dict) -> str:
    """Aligned text table with stable column order; percentages render to
    one decimal and ROUGE to two (both on the x100 scale)."""
    if not isinstance(report, dict):
        raise ValueError("report must be a JSON object")
    if report.get("schema") != REPORT_SCHEMA:
        raise ValueError("schema mismatch: field schema")
    for key in report:
        if key not in _REPORT_FIELDS:
            raise ValueError(f"schema mismatch: field {key}")

    rows: list[tuple[str, str]] = [
        ("examples", str(report.get("num_examples", 0))),
        ("averaging", str(report.get("averaging", "micro"))),
    ]
    concepts = report.get("concepts")
    if concepts:
        rows.append(("mean gold concepts", f"{concepts['mean_num_concepts']:.2f}"))
        rows.append(("availability", _pct(concepts.get("availability"))))
        if concepts.get("fulfillment_all") is not None:
            rows.append(("fulfillment (all)", _pct(concepts["fulfillment_all"])))
            rows.append(("fulfillment (available)", _pct(concepts.get("fulfillment_available"))))
    preservation = report.get("preservation")
    if preservation:
        rows.append((f"preservation P ({preservation['mode']})", _pct(preservation["precision"])))
        rows.append(("preservation R", _pct(preservation["recall"])))
        rows.append(("preservation F1", _pct(preservation["f1"])))
    ext = report.get("extraction")
    if ext:
        rows.append(("extraction P", _pct(ext["precision"])))
        rows.append(("extraction R", _pct(ext["recall"])))
        rows.append(("extraction F1", _pct(ext["f1"])))
    categories = report.get("missing_categories")
    if categories:
        for cat in corpus_mod.MISSING_CATEGORIES:
            rows.append((f"missing: {cat}", _pct(categories["fractions"].get(cat, 0.0))))
    if "estimated_actual_missing" in report:
        rows.append(("estimated actual missing", _pct(report["estimated_actual_missing"])))
    rouge_scores = report.get("rouge")
    if rouge_scores:
        for name in sorted(rouge_scores):
            prf = rouge_scores[name]
            rows.append((f"{name} P", _rouge_num(prf["precision"])))
            rows.append((f"{name} R", _rouge_num(prf["recall"])))
            rows.append((f"{name} F1", _rouge_num(prf["f1"])))

    width = max(len(name) for name, _ in rows)
    value_width = max(len(value) for _, value in rows)
    lines = [f"{name.ljust(width)}  {value.rjust(value_width)}" for name, value in rows]
    return "\n".join(lines) + "\n"


def _cmd_report(args: argparse.Namespace) -> int:
    path = _require_input(args.input, "report JSON")
    try:
        report = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise CliError(f"{path}: invalid JSON ({exc.msg})") from exc
    try:
        text = render_report(report)
    except ValueError as exc:
        raise CliError(str(exc)) from exc
    if args.output:
        Path(args.output).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


# --- argument wiring --------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lexiguide",
        description="constraint extraction, constrained decoding, and concept evaluation",
    )
    sub = parser.add_subparsers(dest="command", metavar="command")

    def command(name: str, func: Callable, help_text: str) -> argparse.ArgumentParser:
        p = sub.add_parser(name, help=help_text)
        p.set_defaults(func=func)
        _add_common_args(p)
        _add_policy_args(p)
        return p

    p = command("train-ngram", _cmd_train_ngram, "train an add-k n-gram scorer")
    p.add_argument("--input", help="corpus jsonl")
    p.add_argument("--output", help="model json")
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--k", type=float, default=None)
    p.add_argument("--field", choices=("target", "source", "system_output"), default=None)

    p = command("label", _cmd_label, "map gold concepts into the source")
    p.add_argument("--input")
    p.add_argument("--output")
    p.add_argument("--occurrences", choices=("first", "all"), default=None)

    p = command("extract", _cmd_extract, "threshold-filter constraint candidates")
    p.add_argument("--input")
    p.add_argument("--output")
    p.add_argument("--candidates", help="scored candidate jsonl (heuristic if omitted)")
    p.add_argument("--threshold", type=float, default=None)

    p = command("sweep", _cmd_sweep, "constraint F1 across extraction thresholds")
    p.add_argument("--input")
    p.add_argument("--output")
    p.add_argument("--candidates")
    p.add_argument("--thresholds", help="comma-separated threshold list")

    p = command("decode", _cmd_decode, "run plain, dba, or ddba decoding")
    p.add_argument("--input")
    p.add_argument("--output")
    p.add_argument("--constraints", help="constraints jsonl from label/extract")
    p.add_argument("--mode", choices=decoding.MODES, default=None)
    p.add_argument("--beam", type=int, default=None)
    p.add_argument("--max-len", type=int, default=None)
    p.add_argument("--tau", type=float, default=None)
    p.add_argument("--eos-policy", choices=decoding.EOS_POLICIES, default=None)
    p.add_argument("--length-norm", choices=decoding.LENGTH_NORMS, default=None)
    p.add_argument("--scorer-table", help="table scorer json")
    p.add_argument("--scorer-ngram", help="ngram model json")
    p.add_argument("--scorer-remote", help="bridge endpoint (tcp://host:port or exec:cmd)")
    p.add_argument("--prompt-field", choices=("none", "source"), default=None)
    p.add_argument("--trace", help="per-step trace jsonl")
    p.add_argument("--workers", type=int, default=None)

    p = command("eval-concepts", _cmd_eval_concepts, "availability/fulfillment/preservation")
    p.add_argument("--input")
    p.add_argument("--output")
    p.add_argument("--decodes", help="decode output jsonl to merge as system_output")
    p.add_argument("--constraints", help="constraints jsonl to merge")
    p.add_argument("--averaging", choices=metrics.AVERAGING_MODES, default=None)
    p.add_argument("--preservation-mode", choices=metrics.PRESERVATION_MODES, default=None)
    p.add_argument("--finished-only", action="store_true", default=None)

    p = command("eval-extraction", _cmd_eval_extraction, "extraction quality vs gold labels")
    p.add_argument("--input")
    p.add_argument("--output")
    p.add_argument("--decodes")
    p.add_argument("--constraints")

    p = command("eval-rouge", _cmd_eval_rouge, "sequence-level rouge against targets")
    p.add_argument("--input")
    p.add_argument("--output")
    p.add_argument("--decodes")
    p.add_argument("--variant", choices=("1", "2", "L", "all"), default=None)

    p = command("report", _cmd_report, "render a report JSON as an aligned table")
    p.add_argument("--input")
    p.add_argument("--output")

    return parser


def dispatch(argv: Sequence[str]) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if not getattr(args, "command", None):
        parser.print_usage(sys.stderr)
        return 2
    try:
        args = _apply_config(args)
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except BrokenPipeError:
        return 1


def main() -> None:
    sys.exit(dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
