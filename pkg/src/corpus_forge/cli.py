"""``corpus-forge`` command line entry point."""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
import tempfile
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import __version__
from .agreement import aggregate, kappa_report, problem_rates
from .config import ProjectConfig, load_config
from .csd import CsdInputs, clean_speech, stage_report_multi
from .diarizer import ClusteringConfig, ahc_cluster, to_annotation
from .formats import (
    FormatError,
    RttmRecord,
    annotations_to_rttm,
    parse_rttm,
    parse_uem,
    read_embeddings,
    read_perceptual_csv,
    read_trials_csv,
    read_wav,
    rttm_to_annotations,
    timeline_to_rttm,
    timelines_from_rttm,
    write_eaf,
    write_embeddings,
    write_lab,
    write_rttm,
    write_trials_csv,
    write_uem,
    write_wav,
    _dict_rows,
)
from .metrics import der_many, eer, operating_point, pr_sweep, segment_recall, segment_recall_by_class
from .nse import NseConfig, detect_nse
from .planner import CategoryKey, QuotaLedger, quota_report, read_ledger, read_roster, write_ledger
from .speaker_id import IdentificationConfig, identify, speech_budget
from .timeline import Timeline

log = logging.getLogger("corpus_forge")

PROG = "corpus-forge"


class CliError(Exception):
    """Reported as a single ``error`` line with exit status 1."""

    def __init__(self, kind: str, message: str):
        self.kind = kind
        super().__init__(message)


# ------------------------------------------------------------------ helpers


def _read_bytes(path: str) -> bytes:
    try:
        with open(path, "rb") as fh:
            return fh.read()
    except FileNotFoundError:
        raise CliError("missing-input", f"no such file: {path}") from None
    except IsADirectoryError:
        raise CliError("bad-input", f"is a directory: {path}") from None


class Run:
    """Collects input digests and writes outputs atomically plus a manifest."""

    def __init__(self, command: str, params: dict):
        self.command = command
        self.params = params
        self.inputs: dict[str, str] = {}
        self.outputs: dict[str, str] = {}

    def read(self, path: str) -> bytes:
        data = _read_bytes(path)
        self.inputs[path] = hashlib.sha256(data).hexdigest()
        return data

    def read_text(self, path: str) -> str:
        data = self.read(path)
        try:
            return data.decode("utf-8")
        except UnicodeDecodeError:
            raise CliError("bad-input", f"{path} is not UTF-8 text") from None

    def write(self, path: str, data: str | bytes) -> None:
        if isinstance(data, str):
            data = data.encode("utf-8")
        target = Path(path)
        target.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(prefix=f".{target.name}.", dir=target.parent)
        try:
            with os.fdopen(fd, "wb") as fh:
                fh.write(data)
            os.replace(tmp, target)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise
        self.outputs[path] = hashlib.sha256(data).hexdigest()

    def manifest(self, path: str) -> None:
        blob = json.dumps(self.params, sort_keys=True, separators=(",", ":"), default=str)
        doc = {
            "tool": PROG,
            "version": __version__,
            "command": self.command,
            "params": self.params,
            "config_hash": hashlib.sha256(blob.encode()).hexdigest(),
            "inputs": dict(sorted(self.inputs.items())),
            "outputs": dict(sorted(self.outputs.items())),
        }
        self.write(path, json.dumps(doc, indent=2, sort_keys=True, default=str) + "\n")


def _pick(flag, default):
    return default if flag is None else flag


def _map_jobs(fn, items, jobs: int):
    items = list(items)
    if jobs > 1 and len(items) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


def _emit(run: Run, args, text: str, suffix: str = "") -> None:
    sys.stdout.write(text)
    if getattr(args, "out", None):
        run.write(args.out + suffix if suffix else args.out, text)


def _finish(run: Run, args, manifest_base: str | None = None) -> None:
    base = manifest_base or getattr(args, "out", None)
    if base and not getattr(args, "no_manifest", False):
        run.manifest(base + ".manifest.json")


# --------------------------------------------------------------- commands


def _nse_one(item):
    name, data, cfg = item
    audio = read_wav(data)
    return name, detect_nse(audio, cfg)


def cmd_nse(args, cfg: ProjectConfig) -> None:
    nse_cfg = NseConfig(
        window=_pick(args.window, cfg.nse.window),
        hop=_pick(args.hop, cfg.nse.hop),
        median_size=_pick(args.median, cfg.nse.median_size),
        threshold_fraction=_pick(args.threshold, cfg.nse.threshold_fraction),
        relative=not args.absolute if args.absolute else cfg.nse.relative,
    )
    run = Run("nse", {"nse": nse_cfg.__dict__})
    items = [(Path(p).stem, run.read(p), nse_cfg) for p in args.accompaniment]
    try:
        results = _map_jobs(_nse_one, items, args.jobs)
    except FormatError as exc:
        raise CliError("bad-input", str(exc)) from None
    if args.out.endswith(".lab"):
        if len(results) != 1:
            raise CliError("usage", ".lab output takes exactly one accompaniment file")
        run.write(args.out, write_lab(results[0][1]))
    else:
        records = []
        for name, tl in sorted(results, key=lambda r: r[0]):
            records += timeline_to_rttm(name, tl, "nse")
        run.write(args.out, write_rttm(records))
    for name, tl in results:
        log.info("%s: %d events, %.3f s", name, len(tl), tl.duration() / 1000)
    _finish(run, args)


def _load_timelines(run: Run, path: str | None) -> dict[str, Timeline]:
    if path is None:
        return {}
    return timelines_from_rttm(parse_rttm(run.read_text(path)))


def _csd_one(item):
    fid, vad, ovl, nse, min_dur = item
    return fid, clean_speech(CsdInputs(vad, ovl, nse, min_dur))


def cmd_csd(args, cfg: ProjectConfig) -> None:
    min_dur = _pick(args.min_dur, cfg.min_duration)
    run = Run("csd", {"min_duration": min_dur, "coverage": args.coverage})
    vad = _load_timelines(run, args.vad)
    ovl = _load_timelines(run, args.ovl)
    nse = _load_timelines(run, args.nse)
    ref = _load_timelines(run, args.ref) if args.ref else None
    fids = sorted(vad) if ref is None else sorted(set(vad) | set(ref))
    items = [(f, vad.get(f, Timeline()), ovl.get(f, Timeline()), nse.get(f, Timeline()), min_dur) for f in fids]
    results = _map_jobs(_csd_one, items, args.jobs)
    records = []
    for fid, tl in results:
        records += timeline_to_rttm(fid, tl, "speech")
    run.write(args.out, write_rttm(records))
    if args.report:
        docs = [((ref.get(f, Timeline()) if ref is not None else None), v, o, n) for f, v, o, n, _ in items]
        report = stage_report_multi(docs, min_dur, args.coverage)
        sys.stdout.write(report.to_text())
        run.write(args.out + ".report.txt", report.to_text())
        run.write(args.out + ".report.csv", report.to_csv())
    _finish(run, args)


def _diarize_one(item):
    fid, es, segs, ccfg = item
    clusters = ahc_cluster(es, ccfg)
    return fid, to_annotation(clusters, segs)


def cmd_diarize(args, cfg: ProjectConfig) -> None:
    ccfg = ClusteringConfig(_pick(args.linkage, cfg.clustering.linkage), _pick(args.stop, cfg.clustering.stop_distance))
    run = Run("diarize", {"clustering": ccfg.__dict__})
    try:
        emb = read_embeddings(run.read(args.embeddings))
    except FormatError as exc:
        raise CliError("bad-input", f"{args.embeddings}: {exc}") from None
    segments: dict[str, set] = {}
    for rec in parse_rttm(run.read_text(args.segments)):
        segments.setdefault(rec.file_id, set()).add(rec.segment)
    items = []
    for fid in sorted(segments):
        es = emb.for_file(fid)
        index = {s: i for i, s in enumerate(es.segments)}
        segs = sorted(segments[fid])
        missing = [s for s in segs if s not in index]
        if missing:
            raise CliError("bad-input", f"no embedding for {fid} segment {missing[0].start_s:.3f}-{missing[0].end_s:.3f}")
        items.append((fid, es.subset([index[s] for s in segs]), segs, ccfg))
    results = _map_jobs(_diarize_one, items, args.jobs)
    run.write(args.out, write_rttm(annotations_to_rttm(dict(results))))
    _finish(run, args)


def cmd_export_eaf(args, cfg: ProjectConfig) -> None:
    run = Run("export-eaf", {"media": args.media, "file_id": args.file_id})
    anns = rttm_to_annotations(parse_rttm(run.read_text(args.rttm)))
    if args.file_id is None:
        if len(anns) != 1:
            raise CliError("usage", f"RTTM holds {len(anns)} files; choose one with --file-id")
        fid = next(iter(anns))
    else:
        fid = args.file_id
        if fid not in anns:
            raise CliError("bad-input", f"file id {fid} not in {args.rttm}")
    targets = []
    if args.targets:
        targets += [t.strip() for t in args.targets.split(",") if t.strip()]
    if args.targets_file:
        targets += [t.strip() for t in run.read_text(args.targets_file).splitlines() if t.strip()]
    run.params["targets"] = targets
    run.write(args.out, write_eaf(anns[fid], args.media or fid, targets))
    _finish(run, args)


def cmd_identify(args, cfg: ProjectConfig) -> None:
    icfg = IdentificationConfig(_pick(args.threshold, cfg.identification.threshold),
                                cfg.identification.min_total_speech)
    run = Run("identify", {"identification": icfg.__dict__, "target": args.target})
    try:
        known = read_embeddings(run.read(args.known))
        cand = read_embeddings(run.read(args.candidates))
    except FormatError as exc:
        raise CliError("bad-input", str(exc)) from None
    result = identify(known, cand, icfg)
    fid = cand.file_ids[0] if cand.file_ids else "unknown"
    records = [RttmRecord(fid, 1, s.start, s.duration, args.target) for s, _ in sorted(result.accepted)]
    run.write(args.out, write_rttm(records))
    lines = ["start,end,score,accepted"]
    decided = [(s, sc, True) for s, sc in result.accepted] + [(s, sc, False) for s, sc in result.rejected]
    for s, sc, ok in sorted(decided, key=lambda x: x[0]):
        lines.append(f"{s.start_s:.3f},{s.end_s:.3f},{sc:.6f},{int(ok)}")
    run.write(args.report or args.out + ".decisions.csv", "\n".join(lines) + "\n")
    total, ok = speech_budget(args.prior_seconds, result, icfg)
    sys.stdout.write(
        f"target_present={int(result.target_present)} accepted={len(result.accepted)} "
        f"accepted_seconds={result.accepted_duration:.3f} total_seconds={total:.3f} satisfied={int(ok)}\n"
    )
    _finish(run, args)


def cmd_plan(args, cfg: ProjectConfig) -> None:
    ledger_path = args.ledger or cfg.paths.ledger
    if ledger_path is None:
        raise CliError("usage", "--ledger is required (or [paths] ledger in the config)")
    run = Run("plan", {"required_per_category": cfg.required_per_category})
    if os.path.exists(ledger_path):
        ledger = read_ledger(run.read_text(ledger_path), cfg.required_per_category)
    else:
        ledger = QuotaLedger(cfg.required_per_category)
    if args.roster:
        for sp in read_roster(run.read_text(args.roster)):
            if sp.id in ledger.entries:
                continue
            try:
                ledger.register(sp)
            except ValueError as exc:
                log.warning("%s", exc)
    if args.speech:
        for lineno, row in _dict_rows(run.read_text(args.speech), ("speaker_id", "seconds")):
            if row["speaker_id"] not in ledger.entries:
                raise CliError("bad-input", f"{args.speech} line {lineno}: unknown speaker {row['speaker_id']}")
            ledger.add_speech(row["speaker_id"], float(row["seconds"]))
    run.write(ledger_path, write_ledger(ledger))
    if args.report:
        text = quota_report(ledger)
        sys.stdout.write(text)
        run.write(ledger_path + ".report.txt", text)
    _finish(run, args, ledger_path)


def _read_extract_categories(text) -> dict[str, CategoryKey]:
    out = {}
    for lineno, row in _dict_rows(text, ("extract_id", "gender", "age_band", "period")):
        try:
            out[row["extract_id"]] = CategoryKey(row["gender"], row["age_band"], row["period"])
        except ValueError as exc:
            raise FormatError(str(exc), lineno) from None
    return out


def cmd_perceptual(args, cfg: ProjectConfig) -> None:
    run = Run("perceptual", {"exact": args.exact})
    records = read_perceptual_csv(run.read_text(args.annotations))
    cats = _read_extract_categories(run.read_text(args.speakers)) if args.speakers else None
    ktext, _ = kappa_report(records, exact=args.exact)
    table = problem_rates(aggregate(records), cats)
    merge = "# problem flags: majority of annotators (>= 2 of 2-3); a lone annotator's flags stand as given\n"
    text = ktext + "\n" + merge + table.to_text()
    if args.report:
        sys.stdout.write(text)
    if args.out:
        run.write(args.out, table.to_csv())
        run.write(args.out + ".report.txt", text)
    _finish(run, args)


def cmd_eval(args, cfg: ProjectConfig) -> None:
    kind = args.metric
    if kind == "der":
        collar = _pick(args.collar, cfg.collar)
        run = Run("eval der", {"collar": collar})
        ref = rttm_to_annotations(parse_rttm(run.read_text(args.ref)))
        hyp = rttm_to_annotations(parse_rttm(run.read_text(args.hyp)))
        uems = parse_uem(run.read_text(args.uem)) if args.uem else None
        total, per_file = der_many(ref, hyp, collar, uems)
        lines = [f"{fid} {b.summary()}" for fid, b in per_file.items()]
        lines.append(f"TOTAL {total.summary()}")
        _emit(run, args, "\n".join(lines) + "\n")
    elif kind == "recall":
        grid = _pick(args.grid, cfg.grid)
        run = Run("eval recall", {"grid": grid})
        ref = rttm_to_annotations(parse_rttm(run.read_text(args.ref)))
        hyp = timelines_from_rttm(parse_rttm(run.read_text(args.hyp)))
        lines = []
        for fid, ann in ref.items():
            h = hyp.get(fid, Timeline())
            lines.append(f"{fid} recall={segment_recall(ann.timeline(), h, grid):.4f}")
            if len(ann.labels()) > 1:
                for label, value in segment_recall_by_class(ann, h, grid).items():
                    lines.append(f"{fid} class={label} recall={value:.4f}")
        _emit(run, args, "\n".join(lines) + "\n")
    elif kind == "eer":
        run = Run("eval eer", {})
        scores, labels = read_trials_csv(run.read_text(args.trials))
        rate, thr = eer((scores, labels))
        _emit(run, args, f"EER={100 * rate:.2f}% threshold={thr:.6f} trials={len(scores)}\n")
    elif kind == "pr":
        threshold = _pick(args.threshold, cfg.identification.threshold)
        run = Run("eval pr", {"threshold": threshold})
        scores, labels = read_trials_csv(run.read_text(args.trials))
        op = operating_point((scores, labels), threshold)
        lines = [f"threshold={op.threshold:.4f} precision={op.precision:.4f} recall={op.recall:.4f} "
                 f"far={op.far:.4f} frr={op.frr:.4f}"]
        sys.stdout.write(lines[0] + "\n")
        if args.out:
            sweep = ["threshold,precision,recall,far,frr"]
            for p in pr_sweep((scores, labels)):
                sweep.append(f"{p.threshold:.9g},{p.precision:.6f},{p.recall:.6f},{p.far:.6f},{p.frr:.6f}")
            run.write(args.out, "\n".join(sweep) + "\n")
    else:  # pragma: no cover - argparse restricts choices
        raise CliError("usage", f"unknown metric {kind}")
    _finish(run, args)


def cmd_simulate(args, cfg: ProjectConfig) -> None:
    import numpy as np

    from .synth import SynthSpec, gen_diarization, gen_embeddings, gen_tone_bursts, gen_trials

    seed = _pick(args.seed, cfg.seed)
    run = Run("simulate", {"seed": seed, "n_speakers": args.speakers, "doc_length": args.length})
    out = Path(args.out)
    spec = SynthSpec(n_speakers=args.speakers, doc_length=args.length, seed=seed)
    ref, hyp = gen_diarization(spec)
    run.write(str(out / "reference.rttm"), write_rttm(annotations_to_rttm({"sim": ref})))
    run.write(str(out / "hypothesis.rttm"), write_rttm(annotations_to_rttm({"sim": hyp})))
    ext = ref.timeline().extent()
    uem = {"sim": Timeline([ext])} if ext else {}
    run.write(str(out / "reference.uem"), write_uem(uem))

    rng = np.random.default_rng(seed)
    vad = ref.timeline()
    ovl_segs = []
    for label, tl in ref.by_label().items():
        for other, tl2 in ref.by_label().items():
            if other > label:
                ovl_segs += list(tl & tl2)
    ovl = Timeline(ovl_segs).normalize()
    burst_start = float(rng.uniform(0, max(0.0, args.length - 5)))
    bursts = [(burst_start, burst_start + 3.0)]
    audio = gen_tone_bursts(args.length, bursts, sample_rate=8000)
    run.write(str(out / "sim.wav"), write_wav(audio))
    nse = Timeline.from_seconds(bursts)
    run.write(str(out / "vad.rttm"), write_rttm(timeline_to_rttm("sim", vad, "speech")))
    run.write(str(out / "ovl.rttm"), write_rttm(timeline_to_rttm("sim", ovl, "overlap")))
    run.write(str(out / "nse.rttm"), write_rttm(timeline_to_rttm("sim", nse, "nse")))

    es, _ = gen_embeddings(max(1, args.speakers), 4, 10.0, seed=seed, dim=16, file_id="sim")
    run.write(str(out / "embeddings.tsv"), write_embeddings(es))
    run.write(str(out / "segments.rttm"), write_rttm(
        RttmRecord("sim", 1, seg.start, seg.duration, "speech") for seg in es.segments))
    scores, labels = gen_trials(200, 200, 0.7, 0.2, 0.1, seed=seed)
    run.write(str(out / "trials.csv"), write_trials_csv(scores, labels))
    run.manifest(str(out / "manifest.json"))


# ------------------------------------------------------------------ parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help=f"project config file (TOML); falls back to ${'CORPUS_FORGE_CONFIG'}")
    common.add_argument("--jobs", type=int, default=1, help="worker processes for per-document stages")
    common.add_argument("--log-level", default="WARNING")
    common.add_argument("--no-manifest", action="store_true", help="do not write the run manifest")

    p = argparse.ArgumentParser(prog=PROG, description="Semi-automatic speaker corpus construction toolkit.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("nse", parents=[common], help="detect non-speech events in accompaniment tracks")
    s.add_argument("--accompaniment", required=True, nargs="+", help="WAV file(s)")
    s.add_argument("--out", required=True, help="RTTM output, or .lab for a single file")
    s.add_argument("--window", type=float)
    s.add_argument("--hop", type=float)
    s.add_argument("--median", type=int)
    s.add_argument("--threshold", type=float)
    s.add_argument("--absolute", action="store_true", help="threshold against full scale instead of document maximum")
    s.set_defaults(func=cmd_nse)

    s = sub.add_parser("csd", parents=[common], help="clean speech detection")
    s.add_argument("--vad", required=True)
    s.add_argument("--ovl")
    s.add_argument("--nse")
    s.add_argument("--ref", help="reference speech RTTM for the coverage report")
    s.add_argument("--min-dur", type=float)
    s.add_argument("--out", required=True)
    s.add_argument("--report", action="store_true")
    s.add_argument("--coverage", choices=("ratio", "intersection"), default="ratio")
    s.set_defaults(func=cmd_csd)

    s = sub.add_parser("diarize", parents=[common], help="cluster segments by embedding")
    s.add_argument("--embeddings", required=True)
    s.add_argument("--segments", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--stop", type=float)
    s.add_argument("--linkage", choices=("average", "complete", "single"))
    s.set_defaults(func=cmd_diarize)

    s = sub.add_parser("export-eaf", parents=[common], help="export a diarization to ELAN")
    s.add_argument("--rttm", required=True)
    s.add_argument("--file-id")
    s.add_argument("--media")
    s.add_argument("--targets", help="comma-separated target speaker names")
    s.add_argument("--targets-file", help="one target speaker name per line")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_export_eaf)

    s = sub.add_parser("identify", parents=[common], help="find a known speaker in another document")
    s.add_argument("--known", required=True)
    s.add_argument("--candidates", required=True)
    s.add_argument("--threshold", type=float)
    s.add_argument("--target", default="target")
    s.add_argument("--prior-seconds", type=float, default=0.0)
    s.add_argument("--out", required=True)
    s.add_argument("--report", help="decision CSV (default: <out>.decisions.csv)")
    s.set_defaults(func=cmd_identify)

    s = sub.add_parser("plan", parents=[common], help="update the quota ledger")
    s.add_argument("--roster")
    s.add_argument("--ledger")
    s.add_argument("--speech", help="CSV speaker_id,seconds of newly accepted speech")
    s.add_argument("--report", action="store_true")
    s.set_defaults(func=cmd_plan)

    s = sub.add_parser("perceptual", parents=[common], help="agreement and problem rates")
    s.add_argument("--annotations", required=True)
    s.add_argument("--speakers", help="CSV extract_id,gender,age_band,period")
    g = s.add_mutually_exclusive_group()
    g.add_argument("--exact", dest="exact", action="store_true", default=True)
    g.add_argument("--classic", dest="exact", action="store_false")
    s.add_argument("--report", action="store_true")
    s.add_argument("--out")
    s.set_defaults(func=cmd_perceptual)

    e = sub.add_parser("eval", help="scoring")
    esub = e.add_subparsers(dest="metric", required=True)
    m = esub.add_parser("der", parents=[common])
    m.add_argument("--ref", required=True)
    m.add_argument("--hyp", required=True)
    m.add_argument("--collar", type=float)
    m.add_argument("--uem")
    m.add_argument("--out")
    m = esub.add_parser("recall", parents=[common])
    m.add_argument("--ref", required=True)
    m.add_argument("--hyp", required=True)
    m.add_argument("--grid", type=float)
    m.add_argument("--out")
    m = esub.add_parser("eer", parents=[common])
    m.add_argument("--trials", required=True)
    m.add_argument("--out")
    m = esub.add_parser("pr", parents=[common])
    m.add_argument("--trials", required=True)
    m.add_argument("--threshold", type=float)
    m.add_argument("--out", help="write the full sweep as CSV")
    e.set_defaults(func=cmd_eval)

    s = sub.add_parser("simulate", parents=[common], help="write synthetic fixtures")
    s.add_argument("--out", required=True, help="output directory")
    s.add_argument("--seed", type=int)
    s.add_argument("--speakers", type=int, default=3)
    s.add_argument("--length", type=float, default=60.0)
    s.set_defaults(func=cmd_simulate)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "jobs", 1) < 1:
        parser.error("--jobs must be >= 1")
    try:
        cfg = load_config(args.config)
        args.func(args, cfg)
    except CliError as exc:
        if exc.kind == "usage":
            parser.print_usage(sys.stderr)
            print(f"{PROG}: error[usage]: {exc}", file=sys.stderr)
            return 2
        print(f"{PROG}: error[{exc.kind}]: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"{PROG}: error[missing-input]: no such file or directory: {exc.filename or exc}", file=sys.stderr)
        return 1
    except (FormatError, ValueError, KeyError) as exc:
        msg = str(exc).replace("\n", " ")
        print(f"{PROG}: error[bad-input]: {msg}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
