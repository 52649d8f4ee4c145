"""CSV and JSON exchange formats.

chronogram.csv   sequence_id,channel,timestamp_ns   (0.1 ns precision, sorted)
truth.csv        sequence_id,clock_index,symbol     (symbol in a/b/c/d)
samples.csv      sequence_id,n_plus,n_minus
report.json      one RunReport document
curves.csv       q,i_ab,i_ae,dc
"""
from __future__ import annotations

import json
import math
from collections.abc import Iterable
from pathlib import Path

import numpy as np

from ..photonics import Channel, Chronogram
from ..protocol import SYMBOL_CODES, TruthRecord


class FormatError(ValueError):
    pass


CHRONOGRAM_HEADER = "sequence_id,channel,timestamp_ns"
TRUTH_HEADER = "sequence_id,clock_index,symbol"
CURVE_HEADER = "q,i_ab,i_ae,dc"

_CHANNEL_NAMES = {c.name: int(c) for c in Channel}


def _fmt_ticks(t: int) -> str:
    return f"{t // 10}.{t % 10}"


def write_chronogram(path: str | Path, chrono: Chronogram) -> None:
    names = [c.name for c in Channel]
    with open(path, "w", newline="\n") as fh:
        fh.write(CHRONOGRAM_HEADER + "\n")
        fh.writelines(
            f"{s},{names[c]},{_fmt_ticks(int(t))}\n"
            for s, c, t in zip(chrono.sequence_id.tolist(), chrono.channel.tolist(), chrono.ticks.tolist())
        )


def _parse_ticks(text: str) -> int:
    whole, _, frac = text.strip().partition(".")
    if not whole.isdigit() or (frac and not frac.isdigit()):
        raise ValueError(text)
    frac = frac.rstrip("0")
    if len(frac) > 1:
        raise ValueError(f"{text} is not on the 0.1 ns grid")
    return int(whole) * 10 + (int(frac) if frac else 0)


def read_chronogram(path: str | Path) -> Chronogram:
    seq, chan, ticks = [], [], []
    with open(path) as fh:
        header = fh.readline().strip()
        if header != CHRONOGRAM_HEADER:
            raise FormatError(f"{path}: expected header {CHRONOGRAM_HEADER!r}, got {header!r}")
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            try:
                s, c, t = line.rstrip("\n").split(",")
                seq.append(int(s))
                chan.append(_CHANNEL_NAMES[c.strip()])
                ticks.append(_parse_ticks(t))
            except (ValueError, KeyError) as exc:
                raise FormatError(f"{path}:{lineno}: malformed chronogram row {line.strip()!r} ({exc})") from None
    return Chronogram(np.array(seq, dtype=np.int64), np.array(chan, dtype=np.int8), np.array(ticks, dtype=np.int64))


def write_truth(path: str | Path, truth: TruthRecord) -> None:
    letters = np.array(list("abcd"))
    n = truth.n_clocks
    clock_cols = [f",{k}," for k in range(n)]
    with open(path, "w", newline="\n") as fh:
        fh.write(TRUTH_HEADER + "\n")
        for sid, row in zip(truth.sequence_ids.tolist(), truth.symbols):
            prefix = str(sid)
            fh.write("".join(f"{prefix}{c}{sym}\n" for c, sym in zip(clock_cols, letters[row].tolist())))


def read_truth(path: str | Path) -> TruthRecord:
    rows: dict[int, dict[int, int]] = {}
    with open(path) as fh:
        header = fh.readline().strip()
        if header != TRUTH_HEADER:
            raise FormatError(f"{path}: expected header {TRUTH_HEADER!r}, got {header!r}")
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            try:
                s, k, sym = line.rstrip("\n").split(",")
                rows.setdefault(int(s), {})[int(k)] = SYMBOL_CODES[sym.strip()]
            except (ValueError, KeyError):
                raise FormatError(f"{path}:{lineno}: malformed truth row {line.strip()!r}") from None
    if not rows:
        raise FormatError(f"{path}: no truth rows")
    ids = sorted(rows)
    n = len(rows[ids[0]])
    table = np.zeros((len(ids), n), dtype=np.int8)
    for i, sid in enumerate(ids):
        clocks = rows[sid]
        if sorted(clocks) != list(range(n)):
            raise FormatError(f"{path}: sequence {sid} does not list clocks 0..{n - 1} exactly once")
        table[i] = [clocks[k] for k in range(n)]
    return TruthRecord(np.array(ids), table)


def format_curves(rows: Iterable[tuple[float, float, float, float]]) -> str:
    lines = [CURVE_HEADER] + [f"{q:.4f},{i_ab:.6f},{i_ae:.6f},{dc:g}" for q, i_ab, i_ae, dc in rows]
    return "\n".join(lines) + "\n"


def write_curves(path: str | Path, rows: Iterable[tuple[float, float, float, float]]) -> None:
    Path(path).write_text(format_curves(rows))


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return None if math.isnan(x) or math.isinf(x) else x
    return obj


def dump_json(path: str | Path, payload: dict) -> None:
    Path(path).write_text(json.dumps(_clean(payload), indent=2, sort_keys=True) + "\n")
