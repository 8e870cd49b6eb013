"""Shared fixtures for the test suite: corpus paths and cached verdicts."""
import functools
from pathlib import Path

from chm.check import Options, infer_program
from chm.surface import parse

ROOT = Path(__file__).resolve().parent.parent
CORPUS = ROOT / "corpus"


@functools.lru_cache(maxsize=None)
def corpus_verdicts():
    out = []
    for path in sorted(CORPUS.glob("*.ch")):
        pv = infer_program(
            parse(path.read_text(), str(path)), Options(collect_traces=True)
        )
        out.append((path.name, pv))
    return out
