"""``deprofile-forge``: staged batch pipeline over one run directory.

Stages read the previous stage's files from ``<output_root>/run-<hash12>/``
and write their own; ``pipeline`` runs them all in order.

Exit codes: 0 ok, 1 usage or configuration error, 2 data error, 3 backend error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import tempfile
from concurrent.futures import ThreadPoolExecutor
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Callable, Iterable, Sequence

from . import __version__, align, coc, corpus, evalkit, gateway, plotting, promptkit
from .config import ConfigError, RunConfig

log = logging.getLogger("deprofile_forge")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_BACKEND = 0, 1, 2, 3

STAGES = ("ingest", "match", "expand", "coc", "prompt", "interview", "eval", "report")


class MissingInput(Exception):
    """A prior stage's output file is absent."""


DATA_ERRORS = (
    MissingInput,
    corpus.CorpusError,
    align.AlignError,
    coc.CocError,
    promptkit.PromptError,
    evalkit.MetricError,
    json.JSONDecodeError,
    OSError,
)
BACKEND_ERRORS = (gateway.GatewayError, evalkit.JudgeError)


# ---------------------------------------------------------------------------
# file helpers
# ---------------------------------------------------------------------------


def write_atomic(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def write_json(path: Path, obj: Any) -> None:
    write_atomic(path, json.dumps(obj, ensure_ascii=False, indent=2, sort_keys=True) + "\n")


def require(path: Path, stage: str) -> Path:
    if not path.is_file():
        raise MissingInput(f"missing input {path} (run the '{stage}' stage first)")
    return path


def read_json(path: Path, stage: str) -> Any:
    return json.loads(require(path, stage).read_text(encoding="utf-8"))


def read_jsonl(path: Path, stage: str) -> list[dict]:
    return [rec for _, rec in corpus.iter_jsonl(require(path, stage))]


# ---------------------------------------------------------------------------
# run context
# ---------------------------------------------------------------------------


class Run:
    def __init__(self, config: RunConfig, variants: Sequence[str], dry_run: bool = False, out=sys.stdout) -> None:
        self.config = config
        self.dir = config.run_dir
        self.variants = list(variants)
        self.dry_run = dry_run
        self.out = out
        self._clients: dict[str, Any] = {}

    def path(self, *parts: str) -> Path:
        return self.dir.joinpath(*parts)

    def write(self, path: Path, text: str) -> None:
        if not self.dry_run:
            write_atomic(path, text)

    def write_json(self, path: Path, obj: Any) -> None:
        if not self.dry_run:
            write_json(path, obj)

    def say(self, msg: str) -> None:
        prefix = "[dry-run] " if self.dry_run else ""
        print(prefix + msg, file=self.out)

    def client(self, kind: str) -> Any:
        if kind not in self._clients:
            self._clients[kind] = gateway.build_client(self.config.backend(kind), resolve=self.config.resolve)
        return self._clients[kind]

    def pmap(self, fn: Callable[[Any], Any], items: Iterable[Any]) -> list[Any]:
        items = list(items)
        if self.config.workers == 1 or len(items) < 2:
            return [fn(x) for x in items]
        with ThreadPoolExecutor(max_workers=self.config.workers) as pool:
            return list(pool.map(fn, items))

    def timestamp(self) -> str | None:
        return None if self.config.random_free else datetime.now(timezone.utc).isoformat(timespec="seconds")

    @property
    def taxonomy(self) -> align.SymptomTaxonomyMap:
        path = self.config.input_path("taxonomy")
        return align.SymptomTaxonomyMap.from_file(path) if path else align.SymptomTaxonomyMap.default()

    # stage artifacts ---------------------------------------------------------

    def skeletons(self) -> list[corpus.PatientSkeleton]:
        return [corpus.skeleton_from_record(r) for r in read_jsonl(self.path("match", "skeletons.jsonl"), "match")]

    def profiles(self) -> list[align.UnifiedProfile]:
        by_id = {s.id: s for s in self.skeletons()}
        recs = read_jsonl(self.path("expand", "profiles.jsonl"), "expand")
        return [align.unified_from_record(r, by_id) for r in recs]

    def memories(self) -> dict[str, coc.Memory]:
        index = read_json(self.path("coc", "index.json"), "coc")
        out = {}
        for pid, rel in sorted(index["memories"].items()):
            out[pid] = coc.memory_from_record(read_json(self.path("coc", rel), "coc"))
        return out


# ---------------------------------------------------------------------------
# stages
# ---------------------------------------------------------------------------


def stage_ingest(run: Run) -> None:
    cfg = run.config.ingest
    reports = {}
    for key, loader, dump in (
        ("counseling", corpus.load_skeletons_with_report, corpus.serialize_skeletons),
        ("assessment", corpus.load_skeletons_with_report, corpus.serialize_skeletons),
        ("candidates", corpus.load_candidates_with_report, corpus.serialize_candidates),
    ):
        path = run.config.input_path(key)
        if path is None or not path.is_file():
            raise MissingInput(f"missing input {path} (inputs.{key})")
        records, report = loader(path, cfg)
        reports[key] = report.to_record()
        run.write(run.path("ingest", f"{key}.jsonl"), dump(records))
        run.say(f"ingest {key}: {report.loaded} loaded, {report.skipped} skipped")
    # report paths are relative so the file does not depend on where the package lives
    for key, rec in reports.items():
        rec["path"] = run.config.data["inputs"][key]
    run.write_json(run.path("ingest", "report.json"), reports)


def stage_match(run: Run) -> None:
    cfg = run.config.ingest
    counseling = corpus.load_skeletons(require(run.path("ingest", "counseling.jsonl"), "ingest"), cfg)
    assessment = corpus.load_skeletons(require(run.path("ingest", "assessment.jsonl"), "ingest"), cfg)
    skeletons = align.match_stage1(counseling, assessment, run.config.policy)
    run.write(run.path("match", "skeletons.jsonl"), corpus.serialize_skeletons(skeletons))
    run.say(f"match: {len(skeletons)} skeletons from {len(counseling)} x {len(assessment)} records")


def stage_expand(run: Run) -> None:
    skeletons = run.skeletons()
    candidates = corpus.load_candidates(require(run.path("ingest", "candidates.jsonl"), "ingest"), run.config.ingest)
    taxonomy = run.taxonomy

    def one(sk):
        trace = align.ExpansionTrace()
        prof = align.expand_stage2(sk, candidates, taxonomy, run.config.thresholds, run.config.policy, trace)
        return prof, trace

    results = run.pmap(one, skeletons)
    run.write(run.path("expand", "profiles.jsonl"), corpus.dumps_jsonl(p.to_record() for p, _ in results))
    run.write_json(run.path("expand", "trace.json"), {p.skeleton.id: vars(t) for p, t in results})
    matched = sum(1 for p, _ in results if p.ranked_candidates)
    total = sum(len(p.ranked_candidates) for p, _ in results)
    run.say(f"expand: {total} qualified candidates, {matched}/{len(results)} profiles matched")


def stage_coc(run: Run) -> None:
    profiles = run.profiles()
    candidates = {
        c.id: c
        for c in corpus.load_candidates(require(run.path("ingest", "candidates.jsonl"), "ingest"), run.config.ingest)
    }
    cfg = run.config.coc
    extractor = run.client("extract") if cfg.extractor_enabled else None

    def one(prof):
        uid = prof.top_candidate_id
        return coc.build_memory(candidates[uid], cfg, extractor, profile_id=prof.skeleton.id)

    memories = run.pmap(one, [p for p in profiles if p.top_candidate_id is not None])
    index = {}
    for mem in memories:
        rel = f"memory/{mem.profile_id}__{mem.user_id}.json"
        run.write(run.path("coc", rel), mem.dumps())
        index[mem.profile_id] = rel
    skipped = sorted(p.skeleton.id for p in profiles if p.top_candidate_id is None)
    run.write_json(run.path("coc", "index.json"), {"memories": index, "unmatched_profiles": skipped})
    run.say(f"coc: {len(memories)} memories, {sum(len(m.cards) for m in memories)} cards")


def stage_prompt(run: Run) -> None:
    profiles = [p for p in run.profiles() if p.top_candidate_id is not None]
    memories = run.memories()
    options, taxonomy = run.config.prompt_options, run.taxonomy
    for variant in run.variants:
        tags = promptkit.parse_tags(variant)
        slug = promptkit.variant_slug(tags)
        for prof in profiles:
            mem = memories[prof.skeleton.id]
            text = promptkit.assemble_prompt(prof, mem.cards, tags, mem.graph, options, taxonomy)
            run.write(run.path("prompts", slug, f"{prof.skeleton.id}.txt"), text)
        run.say(f"prompt {promptkit.variant_name(tags)}: {len(profiles)} prompts -> prompts/{slug}/")


def _prompt_files(run: Run, slug: str) -> dict[str, str]:
    folder = run.path("prompts", slug)
    if not folder.is_dir():
        raise MissingInput(f"missing input {folder} (run the 'prompt' stage first)")
    return {p.stem: p.read_text(encoding="utf-8") for p in sorted(folder.glob("*.txt"))}


def stage_interview(run: Run) -> int:
    script_path = run.config.input_path("script")
    script = promptkit.InterviewScript.from_file(require(script_path, "inputs.script"))
    chat = run.client("chat")
    on_failure = run.config.data["interview"]["on_failure"]
    failed = 0
    for variant in run.variants:
        slug = promptkit.variant_slug(promptkit.parse_tags(variant))
        prompts = _prompt_files(run, slug)

        def one(item):
            pid, text = item
            tr = promptkit.run_interview(text, script, chat, pid, on_failure, run.config.config_hash)
            tr.timestamp = run.timestamp()
            return tr

        transcripts = [] if run.dry_run else run.pmap(one, sorted(prompts.items()))
        for tr in transcripts:
            run.write_json(run.path("transcripts", slug, f"{tr.profile_id}.json"), tr.to_record())
            if tr.status != "ok":
                failed += 1
                log.error("transcript %s/%s: %s", slug, tr.profile_id, "; ".join(tr.errors))
        run.say(f"interview {slug}: {len(prompts)} profiles x {len(script)} questions")
    return EXIT_BACKEND if failed else EXIT_OK


def real_utterances(skeleton: corpus.PatientSkeleton) -> list[str]:
    """Patient-side lines of the skeleton's reference dialogues."""
    out = []
    for snippet in (*skeleton.assessment_snippets, *skeleton.counseling_snippets):
        for line in snippet.splitlines():
            speaker, sep, text = line.partition(":")
            if sep and speaker.strip().lower() in ("patient", "client") and text.strip():
                out.append(text.strip())
    return out


def _embed(embedder: Any, texts: Sequence[str]) -> list[Any]:
    return [e.vector for e in embedder.embed(list(texts))]


def stage_eval(run: Run) -> None:
    skeletons = {s.id: s for s in run.skeletons()}
    memories = run.memories()
    embedder, judge_client = run.client("embed"), run.client("judge")
    max_reasks = int(run.config.data["judge"]["max_reasks"])
    run_id = run.dir.name
    for variant in run.variants:
        tags = promptkit.parse_tags(variant)
        slug = promptkit.variant_slug(tags)
        folder = run.path("transcripts", slug)
        if not folder.is_dir():
            raise MissingInput(f"missing input {folder} (run the 'interview' stage first)")
        prompts = _prompt_files(run, slug)
        transcripts = [
            promptkit.DialogueTranscript.from_record(json.loads(p.read_text(encoding="utf-8")))
            for p in sorted(folder.glob("*.json"))
        ]
        if not transcripts:
            raise MissingInput(f"no transcripts under {folder}")

        generated, real, by_question = {}, {}, {}
        for tr in transcripts:
            answers = [t.answer for t in tr.turns]
            real_lines = real_utterances(skeletons[tr.profile_id])
            if answers and real_lines:
                generated[tr.profile_id] = _embed(embedder, answers)
                real[tr.profile_id] = _embed(embedder, real_lines)
            for t in tr.turns:
                by_question.setdefault(t.question_id, []).append(t.answer)
        report = evalkit.EvalReport(run_id, run.config.config_hash, promptkit.variant_name(tags))
        if generated:
            report.realism = evalkit.realism(generated, real)
        if by_question:
            report.diversity = evalkit.diversity_qcentroid(
                {q: _embed(embedder, ans) for q, ans in sorted(by_question.items())}
            )

        def grade(tr):
            try:
                return tr.profile_id, evalkit.judge(tr, prompts[tr.profile_id], judge_client, max_reasks), None
            except evalkit.JudgeError as exc:
                return tr.profile_id, None, str(exc)

        for pid, verdict, err in run.pmap(grade, transcripts):
            if verdict is not None:
                report.verdicts[pid] = verdict
            else:
                report.judge_failures[pid] = err
        for tr in transcripts:
            if tr.profile_id in memories:
                report.audits[tr.profile_id] = evalkit.audit_citations(tr, memories[tr.profile_id].cards)

        body, table = evalkit.emit_report([report])
        run.write(run.path("eval", slug, "report.json"), body)
        run.write(run.path("eval", slug, "summary.tsv"), table)
        audit = report.to_record()["citation_audit"] or {}
        run.say(
            f"eval {slug}: {len(report.verdicts)} verdicts, {len(report.judge_failures)} judge failures, "
            f"{audit.get('matched', 0)}/{audit.get('total', 0)} time mentions matched"
        )


def _row_from_record(rec: dict) -> dict:
    means = (rec.get("geval") or {}).get("means") or {}
    return {
        "variant": rec["variant"] or rec["run_id"],
        "realism": (rec.get("realism") or {}).get("mean"),
        "diversity_qcentroid": (rec.get("diversity") or {}).get("overall"),
        "event_richness": means.get("event_richness"),
        "persona_faithfulness": means.get("persona_faithfulness"),
        "symptom_consistency": means.get("symptom_consistency"),
    }


def stage_report(run: Run) -> None:
    records = []
    for variant in run.variants:
        slug = promptkit.variant_slug(promptkit.parse_tags(variant))
        records.append((slug, read_json(run.path("eval", slug, "report.json"), "eval")))
    rows = [_row_from_record(rec) for _, rec in records]
    body = json.dumps(
        {"run_id": run.dir.name, "config_hash": run.config.config_hash, "reports": [rec for _, rec in records]},
        ensure_ascii=False,
        indent=2,
        sort_keys=True,
    )
    run.write(run.path("report", "report.json"), body + "\n")
    run.write(run.path("report", "summary.tsv"), evalkit.render_table(rows))
    run.write(run.path("report", "summary.md"), evalkit.render_markdown(rows))
    if not run.dry_run:
        figures = run.path("report", "figures")
        for slug, rec in records:
            if rec.get("realism"):
                plotting.plot_realism(rec["realism"]["per_patient"], rec["variant"], figures / f"realism_{slug}.png")
            if rec.get("diversity") and rec["diversity"]["per_question"]:
                plotting.plot_diversity(
                    rec["diversity"]["per_question"], rec["variant"], figures / f"diversity_{slug}.png"
                )
        plotting.plot_summary(rows, figures / "summary.png")
    run.say(f"report: {len(rows)} variants -> {run.path('report')}")
    print(evalkit.render_table(rows), end="", file=run.out)


STAGE_FUNCS: dict[str, Callable[[Run], int | None]] = {
    "ingest": stage_ingest,
    "match": stage_match,
    "expand": stage_expand,
    "coc": stage_coc,
    "prompt": stage_prompt,
    "interview": stage_interview,
    "eval": stage_eval,
    "report": stage_report,
}


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # argparse exits 2 by default; 2 is reserved for data errors here
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


HELP = {
    "ingest": "validate and normalize the source corpora",
    "match": "stage-1 matching of counseling and assessment records into skeletons",
    "expand": "stage-2 expansion of each skeleton with ranked social-media candidates",
    "coc": "build Chain-of-Change memories for each profile's top candidate",
    "prompt": "assemble system prompts for the selected variants",
    "interview": "run the scripted interview against the chat backend",
    "eval": "compute realism, diversity, judge verdicts and citation audits",
    "report": "aggregate eval reports into tables and figures",
    "pipeline": "run every stage in order",
}


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", "-c", metavar="FILE", help="YAML or JSON run config (defaults are built in)")
    common.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="override any config field by dotted path, e.g. --set align.thresholds=[0.7,0.8]",
    )
    common.add_argument(
        "--backend",
        action="append",
        default=[],
        metavar="NAME",
        help="select a configured backend by name for its kind (chat, extract, embed, judge)",
    )
    common.add_argument("--dry-run", action="store_true", help="validate inputs and report, write nothing")
    common.add_argument("--verbose", "-v", action="count", default=0, help="more logging (repeatable)")

    tagged = _Parser(add_help=False)
    tagged.add_argument(
        "--tags",
        action="append",
        default=[],
        metavar="TAGS",
        help="prompt variant as tags (B,R,P,S,A,C,T) or a variant name; repeatable; default: prompt.variants",
    )

    parser = _Parser(prog="deprofile-forge", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True
    for name in (*STAGES, "pipeline"):
        parents = [common, tagged] if name in ("prompt", "interview", "eval", "report", "pipeline") else [common]
        sub.add_parser(name, parents=parents, help=HELP[name], description=HELP[name])
    return parser


def _apply_backend_flags(config_path: str | None, overrides: list[str], names: list[str]) -> list[str]:
    if not names:
        return overrides
    base = RunConfig.load(config_path, overrides)
    extra = []
    for name in names:
        if name not in base.data["backends"]:
            raise ConfigError(f"--backend {name!r} is not a configured backend")
        extra.append(f"select.{base.data['backends'][name]['kind']}={name}")
    return [*overrides, *extra]


def main(argv: Sequence[str] | None = None, out=None) -> int:
    out = out or sys.stdout
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s"
    )
    try:
        overrides = _apply_backend_flags(args.config, args.overrides, args.backend)
        config = RunConfig.load(args.config, overrides)
        tags = getattr(args, "tags", None) or []
        variants = [promptkit.variant_name(promptkit.parse_tags(t)) for t in tags] or config.variants
    except (ConfigError, promptkit.PromptError) as exc:
        print(f"deprofile-forge: {exc}", file=sys.stderr)
        return EXIT_USAGE

    run = Run(config, variants, args.dry_run, out)
    stages = STAGES if args.command == "pipeline" else (args.command,)
    status = EXIT_OK
    try:
        if not args.dry_run:
            run.dir.mkdir(parents=True, exist_ok=True)
            write_atomic(run.dir / "config.json", json.dumps(config.data, indent=2, sort_keys=True) + "\n")
        for stage in stages:
            if args.dry_run and args.command == "pipeline" and stage != "ingest":
                break  # later stages depend on files a dry run does not write
            status = max(status, STAGE_FUNCS[stage](run) or EXIT_OK)
    except BACKEND_ERRORS as exc:
        print(f"deprofile-forge: backend error: {exc}", file=sys.stderr)
        return EXIT_BACKEND
    except DATA_ERRORS as exc:
        print(f"deprofile-forge: {exc}", file=sys.stderr)
        return EXIT_DATA
    return status


def main_entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    main_entry()
