"""``smt`` command-line entry point.

Exit codes: 0 success, 1 partial failure (items skipped under
``--keep-going``), 2 hard failure. ``SMT_LOG`` sets the log level.
"""
from __future__ import annotations

import argparse
import hashlib
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, is_dataclass
from pathlib import Path
from typing import Callable, Iterable, Sequence

from . import __version__
from .grids import (
    SystemGrid,
    TokenGrid,
    assemble_systems,
    flatten_system,
    grid_shape,
    read_pgm,
    read_tgr,
    read_tgr_header,
    symbolic_grid,
    symbolic_tokens,
    threshold_image,
    write_pgm,
    write_tgr,
)
from .io import read_jsonl, validate_file, validate_record, write_json, write_jsonl
from .lmx import NOTATION_VOCAB, delinearize, linearize, parse_musicxml_subset, to_musicxml
from .midi import MIDI_VOCAB, decode_midi_like, encode_midi_like, notes_from_rows, notes_to_rows
from .vocab import CODEC_CODEBOOK_SIZE, CODEC_CODEBOOKS, ModalityTag, build_vocab, default_spec

log = logging.getLogger("smtok")

EXIT_OK, EXIT_PARTIAL, EXIT_FAIL = 0, 1, 2


class CommandError(Exception):
    pass


def _configure_logging() -> None:
    level = os.environ.get("SMT_LOG", "WARNING").upper()
    logging.basicConfig(
        level=getattr(logging, level, logging.WARNING),
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )


def _parse_pairs(items: Sequence[str] | None, what: str) -> dict[str, str]:
    out = {}
    for item in items or ():
        if "=" not in item:
            raise CommandError(f"{what} must look like KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def _run_items(fn: Callable, items: Sequence, jobs: int, keep_going: bool, label: Callable = str):
    """Apply ``fn`` to every item (in parallel when ``jobs`` > 1), keeping input order.

    Returns (results of the successful items, failure count).
    """

    def guarded(item):
        try:
            return True, fn(item)
        except Exception as exc:  # each failure is reported with its item
            return False, f"{label(item)}: {exc}"

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(guarded, items))
    else:
        outcomes = [guarded(item) for item in items]
    results, failures = [], 0
    for ok, value in outcomes:
        if ok:
            results.append(value)
        else:
            failures += 1
            log.error("%s", value)
    if failures and not keep_going:
        raise CommandError(f"{failures} item(s) failed; rerun with --keep-going to skip them")
    return results, failures


def _finish(failures: int) -> int:
    return EXIT_PARTIAL if failures else EXIT_OK


def _schema_check(paths: Iterable[Path], enabled: bool) -> None:
    if enabled:
        for p in paths:
            n = validate_file(p)
            log.info("%s: %d records valid", p, n)


# -- tokenize / detokenize --------------------------------------------------------


def _list_inputs(path: Path, suffixes: tuple[str, ...]) -> list[Path]:
    if path.is_dir():
        return sorted(p for p in path.iterdir() if p.suffix.lower() in suffixes)
    if path.exists():
        return [path]
    raise CommandError(f"input {path} does not exist")


def _tokenize_notation(inp: Path, out: Path, args) -> tuple[list[Path], int]:
    files = _list_inputs(inp, (".xml", ".musicxml"))

    def work(path: Path):
        doc = parse_musicxml_subset(path.read_bytes())
        tokens = linearize(doc)
        tgr = out / "tokens" / f"{path.stem}.tgr"
        tgr.parent.mkdir(parents=True, exist_ok=True)
        write_tgr(tgr, symbolic_grid(ModalityTag.NOTATION, tokens, NOTATION_VOCAB))
        return (
            {"id": path.stem, "lmx": " ".join(tokens), "skipped": doc.skipped},
            {"id": path.stem, "modality": "NOTATION", "length": len(tokens), "path": str(tgr.relative_to(out))},
        )

    results, failures = _run_items(work, files, args.jobs, args.keep_going)
    echo = _echo(args)
    written = [out / "lmx.jsonl", out / "index.jsonl"]
    write_jsonl(written[0], (r[0] for r in results), "lmx/1", echo)
    write_jsonl(written[1], (r[1] for r in results), "token-index/1", echo)
    return written, failures


def _tokenize_midi(inp: Path, out: Path, args) -> tuple[list[Path], int]:
    records = read_jsonl(inp) if inp.exists() else []
    if not inp.exists():
        raise CommandError(f"input {inp} does not exist")

    def work(rec: dict):
        seq = encode_midi_like(notes_from_rows(rec["notes"]))
        tgr = out / "tokens" / f"{rec['id']}.tgr"
        tgr.parent.mkdir(parents=True, exist_ok=True)
        write_tgr(tgr, symbolic_grid(ModalityTag.MIDI, seq.tokens, MIDI_VOCAB))
        return (
            {"id": str(rec["id"]), "events": seq.tokens, "dropped": seq.dropped},
            {"id": str(rec["id"]), "modality": "MIDI", "length": len(seq.tokens), "path": str(tgr.relative_to(out))},
        )

    results, failures = _run_items(work, records, args.jobs, args.keep_going, lambda r: r.get("id", "?"))
    echo = _echo(args)
    written = [out / "events.jsonl", out / "index.jsonl"]
    write_jsonl(written[0], (r[0] for r in results), "events/1", echo)
    write_jsonl(written[1], (r[1] for r in results), "token-index/1", echo)
    return written, failures


def _tokenize_codec(inp: Path, out: Path, args, modality: ModalityTag) -> tuple[list[Path], int]:
    if inp.is_dir():
        # raw score images: threshold and stage them for the external image codec
        files = _list_inputs(inp, (".pgm",))

        def work_pgm(path: Path):
            img = threshold_image(read_pgm(path))
            rows, cols = grid_shape(img.width, img.height)
            dest = out / "images" / path.name
            dest.parent.mkdir(parents=True, exist_ok=True)
            write_pgm(dest, img)
            return {"id": path.stem, "modality": "IMAGE", "length": rows * cols, "path": str(dest.relative_to(out))}

        if modality != ModalityTag.IMAGE:
            raise CommandError("directory input is only supported for --modality image (PGM files)")
        results, failures = _run_items(work_pgm, files, args.jobs, args.keep_going)
    else:
        if not inp.exists():
            raise CommandError(f"input {inp} does not exist")
        records = read_jsonl(inp)

        def work(rec: dict):
            if modality == ModalityTag.IMAGE:
                systems = [
                    flatten_system(SystemGrid.from_row_major(s["tokens"], s["rows"], s["columns"]))
                    for s in rec["systems"]
                ]
                grid = assemble_systems(systems)
            else:
                grid = TokenGrid(ModalityTag.AUDIO, rec["codes"])
            if grid.d != CODEC_CODEBOOKS:
                raise ValueError(f"expected {CODEC_CODEBOOKS} codebooks, got {grid.d}")
            grid.validate(CODEC_CODEBOOK_SIZE)
            tgr = out / "tokens" / f"{rec['id']}.tgr"
            tgr.parent.mkdir(parents=True, exist_ok=True)
            write_tgr(tgr, grid)
            return {"id": str(rec["id"]), "modality": modality.name, "length": len(grid), "path": str(tgr.relative_to(out))}

        results, failures = _run_items(work, records, args.jobs, args.keep_going, lambda r: r.get("id", "?"))
    written = [out / "index.jsonl"]
    write_jsonl(written[0], results, "token-index/1", _echo(args))
    return written, failures


def cmd_tokenize(args) -> int:
    inp, out = Path(args.input), Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    modality = ModalityTag.parse(args.modality)
    if modality == ModalityTag.NOTATION:
        written, failures = _tokenize_notation(inp, out, args)
    elif modality == ModalityTag.MIDI:
        written, failures = _tokenize_midi(inp, out, args)
    else:
        written, failures = _tokenize_codec(inp, out, args, modality)
    _schema_check(written, args.schema_check)
    return _finish(failures)


def cmd_detokenize(args) -> int:
    inp, out = Path(args.input), Path(args.output)
    modality = ModalityTag.parse(args.modality)
    if not modality.is_symbolic:
        raise CommandError("detokenize supports the notation and midi modalities")
    if inp.is_dir():
        items = []
        for path in _list_inputs(inp, (".tgr",)):
            grid = read_tgr(path)
            vocab = NOTATION_VOCAB if modality == ModalityTag.NOTATION else MIDI_VOCAB
            if grid.modality != modality:
                raise CommandError(f"{path}: holds {grid.modality.name} tokens")
            tokens = symbolic_tokens(grid, vocab)
            items.append({"id": path.stem, "lmx": " ".join(tokens)} if modality == ModalityTag.NOTATION
                         else {"id": path.stem, "events": tokens})
    else:
        if not inp.exists():
            raise CommandError(f"input {inp} does not exist")
        items = read_jsonl(inp)

    if modality == ModalityTag.NOTATION:
        out.mkdir(parents=True, exist_ok=True)

        def work(rec):
            text = to_musicxml(delinearize(rec["lmx"].split()))
            (out / f"{rec['id']}.musicxml").write_text(text, encoding="utf-8")
            return rec["id"]

        _, failures = _run_items(work, items, args.jobs, args.keep_going, lambda r: r.get("id", "?"))
        return _finish(failures)

    def work(rec):
        notes, repairs = decode_midi_like(rec["events"])
        return {"id": str(rec["id"]), "notes": notes_to_rows(notes), "repairs": repairs}

    results, failures = _run_items(work, items, args.jobs, args.keep_going, lambda r: r.get("id", "?"))
    target = out if out.suffix == ".jsonl" else out / "notes.jsonl"
    write_jsonl(target, results, "notes/1", _echo(args))
    _schema_check([target], args.schema_check)
    return _finish(failures)


# -- segment / filter ---------------------------------------------------------------


def _thresholds(args):
    from .ytsv import DEFAULT_THRESHOLDS

    overrides = _parse_pairs(args.threshold, "--threshold")
    try:
        return DEFAULT_THRESHOLDS.with_overrides({k: float(v) for k, v in overrides.items()})
    except ValueError as exc:
        raise CommandError(str(exc)) from None


def _render_segment_figures(records: list[dict], fig_dir: str | None) -> None:
    if not fig_dir:
        return
    from .plots import plot_segments

    for rec in records:
        plot_segments(rec, Path(fig_dir) / f"{rec['video_id']}_segments.png")


def cmd_segment(args) -> int:
    from .ytsv import MANIFEST_SCHEMA, MalformedRecord, segment_video

    thresholds = _thresholds(args)
    inp = Path(args.input)
    if not inp.exists():
        raise CommandError(f"input {inp} does not exist")
    raw = read_jsonl(inp)

    def work(rec):
        return segment_video(rec, thresholds)

    def label(rec):
        return f"video {rec.get('video_id', '?')}"

    # malformed records are skipped and counted rather than aborting the run
    results, skipped = _run_items(work, raw, args.jobs, True, label)
    if skipped:
        log.warning("skipped %d malformed video record(s)", skipped)
    write_jsonl(args.output, results, MANIFEST_SCHEMA, _echo(args, thresholds=thresholds))
    _schema_check([Path(args.output)], args.schema_check)
    _render_segment_figures(results, args.figures)
    return _finish(skipped)


def _kept_only(rec: dict) -> dict | None:
    if not rec["kept"]:
        return None
    segments = []
    for seg in rec["segments"]:
        if seg["kept"]:
            segments.append({**seg, "systems": [s for s in seg["systems"] if s["kept"]]})
    return {**rec, "segments": segments}


def cmd_filter(args) -> int:
    from .ytsv import MANIFEST_SCHEMA, filter_video

    thresholds = _thresholds(args)
    inp = Path(args.input)
    if not inp.exists():
        raise CommandError(f"input {inp} does not exist")
    records = read_jsonl(inp)
    results, failures = _run_items(
        lambda r: filter_video(r, thresholds), records, args.jobs, args.keep_going, lambda r: r.get("video_id", "?")
    )
    if args.kept_only:
        results = [r for r in map(_kept_only, results) if r is not None]
    write_jsonl(args.output, results, MANIFEST_SCHEMA, _echo(args, thresholds=thresholds))
    _schema_check([Path(args.output)], args.schema_check)
    _render_segment_figures(results, args.figures)
    return _finish(failures)


# -- evaluate -------------------------------------------------------------------------


def cmd_evaluate(args) -> int:
    from .evaluation import EvalOptions, aggregate, evaluate_pair, fad_from_embeddings, pair_records
    from .metrics import read_embeddings

    refs = read_jsonl(args.reference)
    hyps = read_jsonl(args.hypothesis)
    try:
        pairs = pair_records(refs, hyps)
    except ValueError as exc:
        raise CommandError(str(exc)) from None
    options = EvalOptions(use_dtw=not args.no_dtw, frame_ms=args.dtw_frame)

    def work(pair):
        return evaluate_pair(pair[0], pair[1], options)

    results, failures = _run_items(work, pairs, args.jobs, args.keep_going, lambda p: p[0]["id"])
    per_pair = [r for r, _ in results]
    agg = aggregate(per_pair, options.tolerances)
    agg["fad"] = None
    if bool(args.ref_emb) != bool(args.hyp_emb):
        raise CommandError("--ref-emb and --hyp-emb must be given together")
    if args.ref_emb:
        agg["fad"] = fad_from_embeddings(read_embeddings(args.ref_emb), read_embeddings(args.hyp_emb))
    report = {
        "schema": "eval-report/1",
        "tool_version": __version__,
        "config_echo": _echo(args),
        "n_pairs": len(per_pair),
        "aggregate": agg,
        "pairs": per_pair,
    }
    if args.schema_check:
        validate_record(report, "eval-report/1")
    write_json(args.output, report)
    if args.figures:
        from .plots import render_pair_figures

        for (res, detail) in results:
            render_pair_figures(str(res["id"]), detail, options.frame_ms, args.figures)
    return _finish(failures)


# -- build-batches ----------------------------------------------------------------------


def _record_len(rec: dict, key: str, base: Path) -> int | None:
    if rec.get(f"{key}_len") is not None:
        return int(rec[f"{key}_len"])
    path = rec.get(f"{key}_path")
    if path:
        p = Path(path) if Path(path).is_absolute() else base / path
        if p.exists():
            return read_tgr_header(p)[2]
    return None


def cmd_build_batches(args) -> int:
    from .sequences import (
        CurriculumSchedule,
        Direction,
        TaskKind,
        SplitMix64,
        default_schedule,
        derive_seed,
        sample_batch,
        truncation_slices,
    )

    direction = Direction.parse(args.direction)
    base = default_schedule(direction)
    intro = dict(base.introduction)
    for name, step in _parse_pairs(args.intro, "--intro").items():
        intro[TaskKind[name]] = int(step)
    weights = {TaskKind[k]: float(v) for k, v in _parse_pairs(args.weight, "--weight").items()}
    indexes = {}
    for name, path in _parse_pairs(args.index, "--index").items():
        try:
            task = TaskKind[name]
        except KeyError:
            raise CommandError(f"unknown task {name!r}") from None
        if task.direction != direction:
            raise CommandError(f"task {task.name} belongs to the {task.direction.name} direction, not {direction.name}")
        records = read_jsonl(path)
        indexes[task] = (records, Path(path).parent)
    for task in list(intro) + list(weights):
        if task.direction != direction:
            raise CommandError(f"task {task.name} belongs to the {task.direction.name} direction, not {direction.name}")
    schedule = CurriculumSchedule(intro, weights)
    sizes = {t: len(recs) for t, (recs, _) in indexes.items()}

    try:
        start, stop = (int(x) for x in args.steps.split(":"))
    except ValueError:
        raise CommandError(f"--steps must look like START:STOP, got {args.steps!r}") from None

    rows = []
    for step in range(start, stop):
        try:
            slots = sample_batch(step, schedule, sizes, args.batch, args.seed)
        except ValueError as exc:
            raise CommandError(str(exc)) from None
        for slot, (task, index) in enumerate(slots):
            recs, base_dir = indexes[task]
            rec = recs[index]
            src_len, tgt_len = _record_len(rec, "src", base_dir), _record_len(rec, "tgt", base_dir)
            src_slice = tgt_slice = None
            if src_len is not None and tgt_len is not None:
                rng = SplitMix64(derive_seed(args.seed, step, slot))
                s, t = truncation_slices(task, src_len, tgt_len, rng)
                src_slice, tgt_slice = list(s), list(t)
            rows.append(
                {
                    "step": step,
                    "slot": slot,
                    "task": task.name,
                    "sample_id": str(rec.get("sample_id", rec.get("id", index))),
                    "src_path": rec.get("src_path"),
                    "tgt_path": rec.get("tgt_path"),
                    "src_slice": src_slice,
                    "tgt_slice": tgt_slice,
                }
            )
    write_jsonl(args.output, rows, "batch-manifest/1", _echo(args, direction=direction.name))
    _schema_check([Path(args.output)], args.schema_check)
    return EXIT_OK


# -- vocab -----------------------------------------------------------------------------


def cmd_vocab(args) -> int:
    import json

    layout = build_vocab(default_spec())
    doc = layout.to_dict()
    doc["tool_version"] = __version__
    doc["config_echo"] = {"command": "vocab"}
    text = json.dumps(doc, indent=2, sort_keys=True) + "\n"
    if args.output:
        from .io import atomic_write_bytes

        atomic_write_bytes(args.output, text.encode("utf-8"))
    else:
        sys.stdout.write(text)
    return EXIT_OK


# -- parser ------------------------------------------------------------------------------


_INPUT_ARGS = ("input", "reference", "hypothesis", "ref_emb", "hyp_emb")


def _input_echo(path: str) -> dict:
    """Name and content digest of an input, so the echo does not depend on where it lives."""
    p = Path(path)
    digest = hashlib.sha256()
    files = sorted(f for f in p.rglob("*") if f.is_file()) if p.is_dir() else [p] if p.exists() else []
    for f in files:
        digest.update(str(f.relative_to(p) if p.is_dir() else f.name).encode())
        digest.update(f.read_bytes())
    return {"name": p.name, "sha256": digest.hexdigest()}


def _echo(args, **extra) -> dict:
    """Arguments that influence outputs; output paths and --jobs are left out so reruns compare equal."""
    skip = {"func", "output", "jobs", "figures", "schema_check", "keep_going", "threshold"}
    echo = {}
    for key, value in sorted(vars(args).items()):
        if key in skip:
            continue
        if key in _INPUT_ARGS and value is not None:
            value = _input_echo(value)
        elif key == "index" and value:
            value = {k: _input_echo(v) for k, v in _parse_pairs(value, "--index").items()}
        echo[key] = value
    for key, value in extra.items():
        if is_dataclass(value):
            value = asdict(value)
        echo[key] = value
    return echo


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--jobs", type=int, default=1, help="parallel workers for per-file work")
    common.add_argument("--keep-going", action="store_true", help="skip failing items (exit code 1)")
    common.add_argument("--schema-check", action="store_true", help="re-validate outputs against their schema")

    parser = argparse.ArgumentParser(prog="smt", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("tokenize", parents=[common], help="MusicXML / note lists / codec codes to token files")
    p.add_argument("--modality", required=True, choices=["notation", "midi", "image", "audio"])
    p.add_argument("input")
    p.add_argument("output")
    p.set_defaults(func=cmd_tokenize)

    p = sub.add_parser("detokenize", parents=[common], help="LMX or MIDI-like tokens back to MusicXML / note lists")
    p.add_argument("--modality", required=True, choices=["notation", "midi"])
    p.add_argument("input")
    p.add_argument("output")
    p.set_defaults(func=cmd_detokenize)

    for name, func, helptext in (
        ("segment", cmd_segment, "slide segmentation, pairing and filtering of video records"),
        ("filter", cmd_filter, "re-apply the statistical filters to a segment manifest"),
    ):
        p = sub.add_parser(name, parents=[common], help=helptext)
        p.add_argument("input")
        p.add_argument("output")
        p.add_argument("--threshold", action="append", metavar="NAME=VALUE", help="override a filter threshold")
        p.add_argument("--figures", metavar="DIR", help="write per-video timeline figures here")
        if name == "filter":
            p.add_argument("--kept-only", action="store_true", help="drop rejected videos, segments and systems")
        p.set_defaults(func=func)

    p = sub.add_parser("evaluate", parents=[common], help="onset F1, SER, EMD and FAD report")
    p.add_argument("--reference", required=True)
    p.add_argument("--hypothesis", required=True)
    p.add_argument("--ref-emb", help="EMB1 embeddings of the reference set")
    p.add_argument("--hyp-emb", help="EMB1 embeddings of the generated set")
    p.add_argument("--no-dtw", action="store_true", help="score onsets without time alignment")
    p.add_argument("--dtw-frame", type=float, default=10.0, help="piano-roll frame length in ms")
    p.add_argument("--figures", metavar="DIR", help="write alignment and histogram figures here")
    p.add_argument("output")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("build-batches", parents=[common], help="curriculum batch manifests")
    p.add_argument("--direction", required=True, choices=["I2A", "A2I"])
    p.add_argument("--index", action="append", required=True, metavar="TASK=PATH")
    p.add_argument("--steps", required=True, metavar="START:STOP")
    p.add_argument("--batch", type=int, default=24)
    p.add_argument("--intro", action="append", metavar="TASK=STEP", help="override a task introduction step")
    p.add_argument("--weight", action="append", metavar="TASK=WEIGHT", help="task sampling weight (default 1)")
    p.add_argument("output")
    p.set_defaults(func=cmd_build_batches)

    p = sub.add_parser("vocab", parents=[common], help="dump the unified vocabulary layout as JSON")
    p.add_argument("output", nargs="?")
    p.set_defaults(func=cmd_vocab)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    _configure_logging()
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (CommandError, ValueError, KeyError, OSError) as exc:
        log.error("%s", exc)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
