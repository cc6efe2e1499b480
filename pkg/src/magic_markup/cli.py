"""magic-markup command line.

Exit codes: 0 success, 1 some annotation or case failed, 2 usage or input
error (bad flags, missing or stale sidecar, schema violations). Base
documents are only ever read; annotations live in sidecar files.
"""

from __future__ import annotations

import json
import logging
import os
import sys
import uuid
from pathlib import Path
from typing import Optional

import click

from . import __version__
from .baseline import BaselineConfig
from .bench import GeneratorConfig, Suite, generate_suite, load_specs, validate_case
from .client import DEFAULT_MODEL, ENV_MODEL, ScriptedClient, client_from_options
from .errors import ClientError, MarkupError
from .evaluate import report_render, run_suite, self_test
from .model import (
    Annotation,
    DocumentView,
    TextSegment,
    load_view,
    read_text,
    save_view,
    sidecar_path_for,
)
from .retag import RetagConfig, mapped_view, retag, retag_baseline
from .textloc import MatchMode, find_matches

logger = logging.getLogger(__name__)

EXIT_OK, EXIT_FAILURES, EXIT_USAGE = 0, 1, 2


def _fail(message: str, code: int = EXIT_USAGE):
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def _delimiter(ctx, param, value):
    if value is not None and len(value) != 1:
        raise click.BadParameter("must be a single character")
    return value


def _preview(text: str, width: int = 40) -> str:
    flat = text.replace("\n", "\\n")
    return flat if len(flat) <= width else flat[: width - 3] + "..."


@click.group()
@click.version_option(version=__version__)
@click.option("-v", "--verbose", is_flag=True, help="Log progress to stderr.")
def cli(verbose: bool) -> None:
    """Keep annotations outside your files and re-anchor them after edits.

    Exit status: 0 on success, 1 when some annotation or benchmark case
    failed, 2 on usage or input errors.
    """
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")


# -- annotations -----------------------------------------------------------------

@cli.group()
def annot() -> None:
    """Add, list, and remove annotations on a document."""


def _load_or_empty(doc: Path, sidecar: Path) -> DocumentView:
    if sidecar.exists():
        return load_view(doc, sidecar)
    return DocumentView(read_text(doc))


@annot.command("add")
@click.argument("doc", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--start", type=click.IntRange(min=0), help="Start offset (characters).")
@click.option("--end", type=click.IntRange(min=0), help="End offset (characters, exclusive).")
@click.option("--anchor", help="Literal anchor text; must occur exactly once.")
@click.option("--content", default="", help="Annotation content.")
@click.option("--intent", default=None, help="Free-form intent, e.g. 'TRACK NAMES'.")
@click.option("--id", "annotation_id", default=None, help="Annotation id (default: random).")
@click.option("--sidecar", type=click.Path(dir_okay=False, path_type=Path), default=None)
def annot_add(doc, start, end, anchor, content, intent, annotation_id, sidecar):
    """Attach a new annotation to DOC by offsets or by a unique anchor string."""
    sidecar = sidecar or sidecar_path_for(doc)
    if (start is None) != (end is None):
        _fail("--start and --end go together")
    if (start is None) == (anchor is None):
        _fail("give either --start/--end or --anchor")
    try:
        view = _load_or_empty(doc, sidecar)
        if anchor is not None:
            if not anchor:
                _fail("--anchor must not be empty")
            matches = find_matches(view.document, anchor, MatchMode.EXACT)
            if len(matches) != 1:
                _fail(f"anchor text occurs {len(matches)} times; use --start/--end offsets instead")
            seg = matches[0].segment
        else:
            seg = TextSegment.of(view.document, start, end)
        annotation_id = annotation_id or uuid.uuid4().hex[:12]
        if any(a.id == annotation_id for a in view.annotations):
            _fail(f"annotation id {annotation_id!r} already exists")
        new = Annotation(annotation_id, seg, content, intent)
        save_view(view.with_annotations(view.annotations + (new,)), sidecar, doc)
    except MarkupError as e:
        _fail(f"{type(e).__name__}: {e}")
    click.echo(annotation_id)


@annot.command("list")
@click.argument("doc", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--sidecar", type=click.Path(dir_okay=False, path_type=Path), default=None)
@click.option("--json", "as_json", is_flag=True, help="Print the annotations as JSON.")
def annot_list(doc, sidecar, as_json):
    """Show the annotations stored for DOC."""
    sidecar = sidecar or sidecar_path_for(doc)
    if not sidecar.exists():
        _fail(f"no sidecar at {sidecar}")
    try:
        view = load_view(doc, sidecar)
    except MarkupError as e:
        _fail(f"{type(e).__name__}: {e}")
    if as_json:
        click.echo(json.dumps([a.to_dict() for a in view.annotations], indent=2, ensure_ascii=False))
        return
    for a in view.annotations:
        intent = a.intent if a.intent is not None else "-"
        click.echo(
            f"{a.id}\t[{a.segment.start},{a.segment.end})\t{_preview(a.segment.anchor_text)!r}\t{a.content}\t{intent}"
        )


@annot.command("rm")
@click.argument("doc", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.argument("annotation_id")
@click.option("--sidecar", type=click.Path(dir_okay=False, path_type=Path), default=None)
def annot_rm(doc, annotation_id, sidecar):
    """Remove annotation ANNOTATION_ID from DOC's sidecar."""
    sidecar = sidecar or sidecar_path_for(doc)
    if not sidecar.exists():
        _fail(f"no sidecar at {sidecar}")
    try:
        view = load_view(doc, sidecar)
        kept = [a for a in view.annotations if a.id != annotation_id]
        if len(kept) == len(view.annotations):
            _fail(f"no annotation with id {annotation_id!r}")
        save_view(view.with_annotations(kept), sidecar, doc)
    except MarkupError as e:
        _fail(f"{type(e).__name__}: {e}")


# -- retagging -------------------------------------------------------------------

def _model_client(fixtures: Optional[str], record: Optional[str]):
    try:
        return client_from_options(fixtures, record)
    except (ClientError, OSError, ValueError) as e:
        _fail(f"cannot set up the model client: {e}")


def _model_name(model: Optional[str]) -> str:
    return model or os.environ.get(ENV_MODEL) or DEFAULT_MODEL


resolver_option = click.option(
    "--resolver", type=click.Choice(["llm", "baseline"]), default="llm", show_default=True,
    help="Re-tag with the language model or the model-free baseline.",
)
expand_option = click.option("--expand-retry", is_flag=True, help="Widen the searched lines once after a failed match.")
parallel_option = click.option("--max-parallel", type=click.IntRange(min=1), default=4, show_default=True)
fixtures_option = click.option(
    "--fixtures", type=click.Path(exists=True, dir_okay=False), default=None,
    help="Replay model responses from a transcript instead of calling the API.",
)
record_option = click.option(
    "--record", type=click.Path(dir_okay=False), default=None,
    help="Record live model responses into a transcript at this path.",
)
model_option = click.option("--model", default=None, help=f"Model name (default: ${ENV_MODEL} or {DEFAULT_MODEL}).")
delimiter_option = click.option(
    "--delimiter", callback=_delimiter, default=None,
    help="Delimiter character for prompts (default: U+2605 BLACK STAR).",
)


@cli.command("retag")
@click.argument("old_doc", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.argument("new_doc", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@resolver_option
@expand_option
@parallel_option
@fixtures_option
@record_option
@model_option
@delimiter_option
@click.option("--sidecar", type=click.Path(dir_okay=False, path_type=Path), default=None,
              help="Sidecar of OLD_DOC (default: OLD_DOC.annotations.json).")
@click.option("--out", type=click.Path(dir_okay=False, path_type=Path), default=None,
              help="Sidecar to write for NEW_DOC (default: NEW_DOC.annotations.json).")
@click.option("--report", type=click.Path(dir_okay=False, path_type=Path), default=None,
              help="Also write the per-annotation report as JSON.")
@click.option("--allow-failures", is_flag=True, help="Exit 0 even if some annotations could not be placed.")
def retag_cmd(old_doc, new_doc, resolver, expand_retry, max_parallel, fixtures, record, model, delimiter,
              sidecar, out, report, allow_failures):
    """Re-anchor OLD_DOC's annotations onto NEW_DOC and write NEW_DOC's sidecar.

    Annotations that cannot be placed are reported and left out of the new
    sidecar; the old sidecar is never modified.
    """
    sidecar = sidecar or sidecar_path_for(old_doc)
    out = out or sidecar_path_for(new_doc)
    if not sidecar.exists():
        _fail(f"no sidecar at {sidecar}")
    try:
        view = load_view(old_doc, sidecar)
        updated = read_text(new_doc)
    except MarkupError as e:
        _fail(f"{type(e).__name__}: {e}")

    client = None
    if resolver == "llm":
        client = _model_client(fixtures, record)
        kwargs = {"delimiter": delimiter} if delimiter else {}
        cfg = RetagConfig(expand_retry=expand_retry, max_parallel=max_parallel, model_name=_model_name(model), **kwargs)
        mapped, rep = retag(view, updated, client, cfg)
    else:
        mapped, rep = retag_baseline(view, updated, BaselineConfig())

    for m in mapped:
        where = f"[{m.segment.start},{m.segment.end})" if m.segment else "-"
        click.echo(f"{m.source.id}\t{m.outcome.value}\t{where}\t{m.diagnostics}")

    try:
        save_view(mapped_view(updated, mapped, view.digest_algo), out, new_doc)
        if report:
            Path(report).write_text(json.dumps(rep.to_dict(), indent=2, ensure_ascii=False) + "\n", encoding="utf-8")
        if record and hasattr(client, "save"):
            client.save(record)
    except MarkupError as e:
        _fail(f"{type(e).__name__}: {e}")

    failed = sum(1 for m in mapped if not m.outcome.placed)
    if failed:
        click.echo(f"{failed} of {len(mapped)} annotation(s) could not be placed", err=True)
        if not allow_failures:
            sys.exit(EXIT_FAILURES)


# -- benchmarks ------------------------------------------------------------------

@cli.group()
def bench() -> None:
    """Generate, validate, and run benchmark suites."""


@bench.command("gen")
@click.option("--specs", "specs_path", type=click.Path(exists=True, dir_okay=False), required=True,
              help="JSON list of {language, snippet_type, partial_update} objects.")
@click.option("--out", type=click.Path(dir_okay=False), required=True, help="Suite file to write.")
@click.option("--rejections", type=click.Path(dir_okay=False), default=None, help="Rejection log (JSON lines).")
@fixtures_option
@record_option
@click.option("--scripted", type=click.Path(exists=True, dir_okay=False), default=None,
              help="JSON list of canned model responses, served in order (for dry runs).")
@model_option
@parallel_option
def bench_gen(specs_path, out, rejections, fixtures, record, scripted, model, max_parallel):
    """Generate a suite with one case per spec."""
    try:
        specs = load_specs(specs_path)
    except (MarkupError, ValueError) as e:
        _fail(str(e))
    if scripted:
        client = ScriptedClient(json.loads(Path(scripted).read_text(encoding="utf-8")))
        max_parallel = 1  # canned responses are consumed in order
    else:
        client = _model_client(fixtures, record)
        if fixtures:
            max_parallel = 1
    cfg = GeneratorConfig(default_model=model, max_parallel=max_parallel)
    try:
        result = generate_suite(specs, client, out, rejections, cfg)
        if record and hasattr(client, "save"):
            client.save(record)
    except (MarkupError, OSError) as e:
        _fail(str(e))
    click.echo(f"{len(result.suite.cases)} accepted, {len(result.rejections)} rejected")
    for r in result.rejections:
        click.echo(f"  {r.case_id}: {r.reason.kind.value} {r.reason.note}")


@bench.command("validate")
@click.option("--suite", "suite_path", type=click.Path(exists=True, dir_okay=False), required=True)
def bench_validate(suite_path):
    """Re-check every case of a suite."""
    try:
        suite = Suite.load(suite_path)
    except MarkupError as e:
        _fail(str(e))
    problems = 0
    for case in suite.cases:
        reason = validate_case(case)
        if reason is not None:
            problems += 1
            click.echo(f"{case.id}: {reason.kind.value} {reason.note}")
    for case_id in self_test(suite):
        problems += 1
        click.echo(f"{case_id}: gold answer does not resolve to the gold segment")
    if problems:
        _fail(f"{problems} problem(s) in {len(suite.cases)} case(s)")
    click.echo(f"{len(suite.cases)} case(s) OK")


@bench.command("run")
@click.option("--suite", "suite_path", type=click.Path(exists=True, dir_okay=False), required=True)
@resolver_option
@expand_option
@parallel_option
@fixtures_option
@record_option
@model_option
@click.option("--out", type=click.Path(dir_okay=False), default=None, help="Write the report JSON here.")
def bench_run(suite_path, resolver, expand_retry, max_parallel, fixtures, record, model, out):
    """Run a resolver over a suite and print the scored report."""
    try:
        suite = Suite.load(suite_path)
    except MarkupError as e:
        _fail(str(e))
    client = _model_client(fixtures, record) if resolver == "llm" else None
    cfg = RetagConfig(expand_retry=expand_retry, max_parallel=max_parallel, model_name=_model_name(model))
    report = run_suite(suite, resolver, client, cfg, max_parallel=max_parallel)
    table, js = report_render(report)
    click.echo(table)
    if out:
        Path(out).write_text(js, encoding="utf-8")
    if record and hasattr(client, "save"):
        client.save(record)


def main(argv=None) -> None:
    cli.main(args=argv, prog_name="magic-markup")


if __name__ == "__main__":
    main()
