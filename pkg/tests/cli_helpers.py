"""Shared fixtures for CLI tests: a simulated project directory and per-command argv."""
import hashlib
import os
from pathlib import Path

from corpus_forge.cli import main
from corpus_forge.formats import read_embeddings, write_embeddings

ROSTER = """id,name,gender,birth_year,doc_id,broadcast_year
s1,Ann,female,1930,d1,1956
s2,Bob,male,1900,d2,1975
s2,Bob,male,1900,d3,1996
"""

SPEECH = "speaker_id,seconds\ns1,200\ns2,90\n"

ANNOTATIONS = """extract_id,annotator_id,backchannel,several_speakers,music,noise
e1,a1,1,0,0,0
e1,a2,1,0,0,1
e1,a3,0,0,0,0
e2,a1,0,1,0,0
e2,a2,0,0,0,0
e2,a3,0,1,1,0
e3,a1,0,0,1,0
e3,a2,0,0,1,0
e3,a3,1,0,1,0
e4,a2,1,0,0,1
"""

EXTRACTS = """extract_id,gender,age_band,period
e1,female,20-35,1955-56
e2,male,36-50,1975-76
e3,male,over-65,1995-96
e4,female,51-65,2015-16
"""

COMMANDS = {
    "nse": ["nse", "--accompaniment", "sim.wav", "--out", "out/nse.rttm"],
    "csd": ["csd", "--vad", "vad.rttm", "--ovl", "ovl.rttm", "--nse", "nse.rttm", "--ref", "reference.rttm",
            "--out", "out/csd.rttm", "--report"],
    "diarize": ["diarize", "--embeddings", "embeddings.tsv", "--segments", "segments.rttm", "--out", "out/dia.rttm"],
    "export-eaf": ["export-eaf", "--rttm", "reference.rttm", "--targets", "Ann,Bob", "--out", "out/doc.eaf"],
    "identify": ["identify", "--known", "known.tsv", "--candidates", "embeddings.tsv", "--target", "Ann",
                 "--out", "out/id.rttm"],
    "plan": ["plan", "--roster", "roster.csv", "--ledger", "out/ledger.csv", "--speech", "speech.csv", "--report"],
    "perceptual": ["perceptual", "--annotations", "annotations.csv", "--speakers", "extracts.csv", "--report",
                   "--out", "out/perceptual.csv"],
    "eval der": ["eval", "der", "--ref", "reference.rttm", "--hyp", "hypothesis.rttm", "--uem", "reference.uem",
                 "--out", "out/der.txt"],
    "eval recall": ["eval", "recall", "--ref", "nse.rttm", "--hyp", "nse.rttm", "--out", "out/recall.txt"],
    "eval eer": ["eval", "eer", "--trials", "trials.csv", "--out", "out/eer.txt"],
    "eval pr": ["eval", "pr", "--trials", "trials.csv", "--out", "out/pr.csv"],
    "simulate": ["simulate", "--out", "out/sim", "--seed", "11"],
}


def make_project(root: Path) -> Path:
    """Populate ``root`` with simulated fixtures and hand-written CSVs."""
    root.mkdir(parents=True, exist_ok=True)
    cwd = os.getcwd()
    os.chdir(root)
    try:
        assert main(["simulate", "--out", ".", "--seed", "5"]) == 0
        es = read_embeddings(Path("embeddings.tsv").read_text())
        Path("known.tsv").write_text(write_embeddings(es.subset([0, 1])))
        Path("roster.csv").write_text(ROSTER)
        Path("speech.csv").write_text(SPEECH)
        Path("annotations.csv").write_text(ANNOTATIONS)
        Path("extracts.csv").write_text(EXTRACTS)
    finally:
        os.chdir(cwd)
    return root


def snapshot(directory: Path) -> dict[str, str]:
    return {
        str(p.relative_to(directory)): hashlib.sha256(p.read_bytes()).hexdigest()
        for p in sorted(directory.rglob("*"))
        if p.is_file()
    }
