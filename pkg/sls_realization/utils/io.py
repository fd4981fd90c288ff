"""
Readers and writers for the on-disk artifacts.

Markov file: one JSON header line {"N", "p", "m", "n", "band", "noise_bound", "noise_std"}, then one
CSV row `k,l,h_11,...,h_pm` per stored block in row-major order. Floats carry 17 significant digits,
so a write-read cycle is exact.
"""

import json
import logging
import os
from typing import Any, Dict

import numpy as np
import pandas as pd
import yaml

from sls_realization.system.sls_model import MarkovSequence, SlsModel
from sls_realization.utils.errors import FormatError

logger = logging.getLogger(__name__)

HEADER_FIELDS = ("N", "p", "m", "n", "band", "noise_bound", "noise_std")


def _ensure_parent(filename: str):
    parent = os.path.dirname(os.path.abspath(filename))
    os.makedirs(parent, exist_ok=True)


## ~ Markov parameters


def write_markov(markov: MarkovSequence, filename: str):
    _ensure_parent(filename)
    header = {
        "N": markov.n_steps,
        "p": markov.p,
        "m": markov.m,
        "n": markov.order,
        "band": "full" if markov.is_full else markov.band,
        "noise_bound": markov.noise_bound,
        "noise_std": markov.noise_std,
    }
    valid = markov.valid_mask()
    with open(filename, "w") as f:
        f.write(json.dumps(header) + "\n")
        for k in range(1, markov.n_steps + 1):
            for lag in range(markov.band + 1):
                if not valid[k - 1, lag]:
                    continue
                entries = ",".join(f"{value:.17g}" for value in markov.blocks[k - 1, lag].ravel())
                f.write(f"{k},{k - lag},{entries}\n")
    logger.debug("Wrote Markov parameters to %s", filename)


def _parse_header(line: str, filename: str) -> Dict[str, Any]:
    try:
        header = json.loads(line)
    except json.JSONDecodeError as e:
        raise FormatError(f"Header is not valid JSON ({e.msg})", filename, 1) from e
    if not isinstance(header, dict):
        raise FormatError("Header must be a JSON object", filename, 1)
    for name in HEADER_FIELDS:
        if name not in header:
            raise FormatError("Missing header field", filename, 1, name)
    for name in ("N", "p", "m", "n"):
        if not isinstance(header[name], int) or header[name] < 1:
            raise FormatError(f"Expected a positive integer, got {header[name]!r}", filename, 1, name)
    if header["band"] != "full" and (not isinstance(header["band"], int) or header["band"] < 0):
        raise FormatError(f"Expected 'full' or a nonnegative integer, got {header['band']!r}", filename, 1, "band")
    return header


def read_markov(filename: str) -> MarkovSequence:
    """
    Raises:
        FormatError: With the offending line and field for any malformed content.
    """

    with open(filename, "r") as f:
        lines = f.read().splitlines()
    if not lines:
        raise FormatError("Empty file", filename)

    header = _parse_header(lines[0], filename)
    n_steps, p, m = header["N"], header["p"], header["m"]
    band = n_steps - 1 if header["band"] == "full" else min(header["band"], n_steps - 1)
    blocks = np.zeros((n_steps, band + 1, p, m))
    seen = np.zeros((n_steps, band + 1), dtype=bool)

    for line_no, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        fields = line.split(",")
        if len(fields) != 2 + p * m:
            raise FormatError(f"Expected {2 + p * m} fields, got {len(fields)}", filename, line_no)
        try:
            k, l = int(fields[0]), int(fields[1])
        except ValueError as e:
            raise FormatError("Time indices must be integers", filename, line_no, "k,l") from e
        if not (1 <= l <= k <= n_steps and k - l <= band):
            raise FormatError(f"Index (k={k}, l={l}) outside the stored band", filename, line_no, "k,l")
        try:
            values = np.array([float(value) for value in fields[2:]])
        except ValueError as e:
            raise FormatError(f"Non-numeric entry ({e})", filename, line_no, "entries") from e
        blocks[k - 1, k - l] = values.reshape(p, m)
        seen[k - 1, k - l] = True

    k = np.arange(1, n_steps + 1)[:, None]
    expected = k - np.arange(band + 1)[None, :] >= 1
    missing = np.argwhere(expected & ~seen)
    if missing.size:
        first_k, first_lag = (int(x) for x in missing[0])
        raise FormatError(
            f"{len(missing)} blocks missing, first h({first_k + 1}, {first_k + 1 - first_lag})",
            filename,
        )

    return MarkovSequence(
        blocks=blocks,
        order=header["n"],
        noise_bound=float(header["noise_bound"]),
        noise_std=float(header["noise_std"]),
    )


## ~ JSON documents


def write_json(data: Dict[str, Any], filename: str):
    _ensure_parent(filename)
    with open(filename, "w") as f:
        json.dump(data, f, indent=2, allow_nan=True)


def read_json(filename: str) -> Dict[str, Any]:
    with open(filename, "r") as f:
        try:
            return json.load(f)
        except json.JSONDecodeError as e:
            raise FormatError(f"Invalid JSON ({e.msg})", filename, e.lineno) from e


def write_model(model: SlsModel, filename: str):
    write_json(model.to_dict(), filename)


def read_model(filename: str) -> SlsModel:
    data = read_json(filename)
    try:
        return SlsModel.from_dict(data)
    except KeyError as e:
        raise FormatError("Missing model field", filename, field=str(e.args[0])) from e
    except (TypeError, ValueError) as e:
        raise FormatError(f"Malformed model ({e})", filename) from e


def write_frame(frame: pd.DataFrame, filename: str):
    _ensure_parent(filename)
    frame.to_csv(filename, index=False)


def read_yaml(filename: str) -> Dict[str, Any]:
    with open(filename, "r") as f:
        try:
            data = yaml.safe_load(f) or {}
        except yaml.YAMLError as e:
            mark = getattr(e, "problem_mark", None)
            raise FormatError(f"Invalid YAML ({e})", filename, None if mark is None else mark.line + 1) from e
    if not isinstance(data, dict):
        raise FormatError("Expected a mapping of configuration fields", filename)
    return data
