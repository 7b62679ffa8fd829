"""CSV schemas, loaders and writers, INI config with environment overrides,
and the run manifest embedded in every report."""

from __future__ import annotations

import configparser
import csv
import hashlib
import io
import json
import os
import time
from collections import defaultdict
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .cashflow import LoanContract
from .dashboards import ExposureRecord, PortfolioSnapshot
from .errors import InputError, SchemaError
from .npl import PoolObservation
from .valuation import RiskProfile

SCHEMAS: dict[str, tuple[str, ...]] = {
    "contracts": ("id", "period_unit", "principal", "t", "cf"),
    "profiles": ("id", "t", "R"),
    "snapshots": ("as_of", "id", "performing", "ead", "lgd", "pd", "el", "wo_in_period", "ead_def", "lgd_def"),
    "pools": ("id", "default_date"),
    "recoveries": ("id", "t", "rec"),
    "observations": ("pool", "as_of", "id", "gca", "coll", "lgd_u", "guarantor_pd", "cured", "wo"),
}

ENV_PREFIX = "IACVLAB_"
MANIFEST_PREFIX = "# manifest: "

_TRUE = {"1", "true", "yes", "y", "t"}
_FALSE = {"0", "false", "no", "n", "f"}


# --- reading -------------------------------------------------------------------


@dataclass(frozen=True)
class Row:
    line: int
    values: dict[str, str]


def read_table(path: str | Path, schema: str) -> list[Row]:
    """Rows of a CSV file checked against a schema.

    Lines starting with ``#`` (such as an embedded manifest) are skipped.
    The header must contain exactly the schema's columns, in any order.
    """
    columns = SCHEMAS[schema]
    path = str(path)
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise InputError(f"{path}: cannot read ({exc.strerror})") from exc
    numbered = [(k + 1, text) for k, text in enumerate(lines) if text.strip() and not text.lstrip().startswith("#")]
    if not numbered:
        raise SchemaError(f"missing header, expected {','.join(columns)}", path)
    header_line, header_text = numbered[0]
    header = [h.strip() for h in next(csv.reader([header_text]))]
    missing = [c for c in columns if c not in header]
    extra = [h for h in header if h not in columns]
    if missing or extra or len(set(header)) != len(header):
        raise SchemaError(
            f"header {','.join(header)} does not match schema {','.join(columns)}", path, header_line
        )
    rows = []
    for line, text in numbered[1:]:
        cells = next(csv.reader([text]))
        if len(cells) != len(header):
            raise SchemaError(f"expected {len(header)} fields, got {len(cells)}", path, line)
        rows.append(Row(line, {h: c.strip() for h, c in zip(header, cells)}))
    return rows


def _float(row: Row, col: str, path, blank_ok: bool = False) -> float | None:
    text = row.values[col]
    if text == "" and blank_ok:
        return None
    try:
        value = float(text)
    except ValueError:
        raise SchemaError(f"column {col}: {text!r} is not a number", path, row.line) from None
    if value != value or value in (float("inf"), float("-inf")):
        raise SchemaError(f"column {col}: non-finite value", path, row.line)
    return value


def _int(row: Row, col: str, path) -> int:
    text = row.values[col]
    try:
        return int(text)
    except ValueError:
        raise SchemaError(f"column {col}: {text!r} is not an integer", path, row.line) from None


def _bool(row: Row, col: str, path) -> bool:
    text = row.values[col].lower()
    if text in _TRUE:
        return True
    if text in _FALSE:
        return False
    raise SchemaError(f"column {col}: {row.values[col]!r} is not a boolean", path, row.line)


def _wrap(path, line: int, exc: InputError) -> SchemaError:
    if isinstance(exc, SchemaError):
        return exc
    return SchemaError(str(exc), path, line)


def load_contracts(path: str | Path) -> list[LoanContract]:
    """Contracts in long form, one row per (id, t); ordered by first appearance."""
    rows = read_table(path, "contracts")
    meta: dict[str, tuple[str, float, int]] = {}
    flows: dict[str, dict[int, float]] = defaultdict(dict)
    for row in rows:
        id_ = row.values["id"]
        if not id_:
            raise SchemaError("empty id", path, row.line)
        unit = row.values["period_unit"]
        principal = _float(row, "principal", path)
        t = _int(row, "t", path)
        if id_ in meta:
            if meta[id_][:2] != (unit, principal):
                raise SchemaError(f"contract {id_}: period_unit/principal differ from line {meta[id_][2]}", path, row.line)
        else:
            meta[id_] = (unit, principal, row.line)
        if t in flows[id_]:
            raise SchemaError(f"contract {id_}: duplicate period {t}", path, row.line)
        flows[id_][t] = _float(row, "cf", path)
    out = []
    for id_, (unit, principal, line) in meta.items():
        try:
            out.append(LoanContract.from_schedule(id_, principal, flows[id_], unit))
        except InputError as exc:
            raise _wrap(path, line, exc) from None
    return out


def load_profiles(path: str | Path) -> dict[str, RiskProfile]:
    """Expected losses R per id; ``t`` is 1-based, missing periods are zero."""
    rows = read_table(path, "profiles")
    losses: dict[str, dict[int, float]] = defaultdict(dict)
    first: dict[str, int] = {}
    for row in rows:
        id_ = row.values["id"]
        t = _int(row, "t", path)
        if t < 1:
            raise SchemaError(f"profile {id_}: period {t} must be >= 1", path, row.line)
        if t in losses[id_]:
            raise SchemaError(f"profile {id_}: duplicate period {t}", path, row.line)
        losses[id_][t] = _float(row, "R", path)
        first.setdefault(id_, row.line)
    out = {}
    for id_, by_t in losses.items():
        series = [by_t.get(t, 0.0) for t in range(1, max(by_t) + 1)]
        try:
            out[id_] = RiskProfile(tuple(series))
        except InputError as exc:
            raise _wrap(path, first[id_], exc) from None
    return out


def load_snapshots(path: str | Path) -> dict[int, PortfolioSnapshot]:
    rows = read_table(path, "snapshots")
    groups: dict[int, list[ExposureRecord]] = defaultdict(list)
    for row in rows:
        try:
            rec = ExposureRecord(
                id=row.values["id"],
                performing=_bool(row, "performing", path),
                ead=_float(row, "ead", path),
                lgd=_float(row, "lgd", path),
                pd=_float(row, "pd", path),
                el=_float(row, "el", path),
                wo_in_period=_float(row, "wo_in_period", path, blank_ok=True) or 0.0,
                ead_def=_float(row, "ead_def", path, blank_ok=True),
                lgd_def=_float(row, "lgd_def", path, blank_ok=True),
            )
        except InputError as exc:
            raise _wrap(path, row.line, exc) from None
        groups[_int(row, "as_of", path)].append(rec)
    out = {}
    for as_of in sorted(groups):
        try:
            out[as_of] = PortfolioSnapshot(as_of, tuple(groups[as_of]))
        except InputError as exc:
            raise SchemaError(str(exc), path) from None
    return out


def load_pools(path: str | Path) -> dict[str, int]:
    out = {}
    for row in read_table(path, "pools"):
        id_ = row.values["id"]
        if id_ in out:
            raise SchemaError(f"duplicate pool member {id_}", path, row.line)
        out[id_] = _int(row, "default_date", path)
    return out


def load_recoveries(path: str | Path) -> dict[str, dict[int, float]]:
    out: dict[str, dict[int, float]] = defaultdict(dict)
    for row in read_table(path, "recoveries"):
        id_, t = row.values["id"], _int(row, "t", path)
        if t in out[id_]:
            raise SchemaError(f"recovery {id_}: duplicate period {t}", path, row.line)
        out[id_][t] = _float(row, "rec", path)
    return dict(out)


def load_observations(path: str | Path) -> list[PoolObservation]:
    out = []
    for row in read_table(path, "observations"):
        try:
            out.append(
                PoolObservation(
                    pool=row.values["pool"],
                    as_of=_int(row, "as_of", path),
                    id=row.values["id"],
                    gca=_float(row, "gca", path),
                    coll=_float(row, "coll", path),
                    lgd_u=_float(row, "lgd_u", path),
                    guarantor_pd=_float(row, "guarantor_pd", path),
                    cured=_bool(row, "cured", path),
                    wo=_float(row, "wo", path, blank_ok=True) or 0.0,
                )
            )
        except InputError as exc:
            raise _wrap(path, row.line, exc) from None
    return out


# --- writing -------------------------------------------------------------------


def fmt(value) -> str:
    """Shortest round-trip text for floats, plain text otherwise."""
    if hasattr(value, "item"):  # numpy scalars
        value = value.item()
    if isinstance(value, bool):
        return "1" if value else "0"
    if value is None:
        return ""
    if isinstance(value, float):
        if value == 0.0:
            return "0.0"  # avoid "-0.0" noise
        return repr(value)
    return str(value)


def render_csv(header: Sequence[str], rows: Iterable[Sequence], manifest: "RunManifest | None" = None) -> str:
    buf = io.StringIO()
    if manifest is not None:
        buf.write(manifest.comment() + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([fmt(v) for v in row])
    return buf.getvalue()


def write_csv(path: str | Path, header: Sequence[str], rows: Iterable[Sequence], manifest: "RunManifest | None" = None) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(render_csv(header, rows, manifest))


def pretty_table(header: Sequence[str], rows: Sequence[Sequence], precision: int = 4) -> str:
    """Fixed-width table for terminal output."""

    def cell(v):
        if isinstance(v, float):
            return f"{v:,.{precision}f}"
        return fmt(v)

    body = [[cell(v) for v in row] for row in rows]
    widths = [max(len(h), *(len(r[k]) for r in body)) if body else len(h) for k, h in enumerate(header)]
    lines = ["  ".join(h.rjust(w) for h, w in zip(header, widths))]
    lines.append("  ".join("-" * w for w in widths))
    lines.extend("  ".join(c.rjust(w) for c, w in zip(r, widths)) for r in body)
    return "\n".join(lines)


# --- config and manifest ----------------------------------------------------------


def load_config(path: str | Path | None = None, environ: Mapping[str, str] | None = None) -> dict[str, dict[str, str]]:
    """Sections of an INI file overlaid with ``IACVLAB_<SECTION>__<KEY>`` variables."""
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    if path is not None:
        try:
            with open(path, encoding="utf-8") as fh:
                parser.read_file(fh)
        except OSError as exc:
            raise InputError(f"{path}: cannot read config ({exc.strerror})") from exc
        except configparser.Error as exc:
            raise InputError(f"{path}: malformed config: {exc}") from exc
    config = {s: dict(parser.items(s)) for s in parser.sections()}
    env = os.environ if environ is None else environ
    for name, value in env.items():
        if not name.startswith(ENV_PREFIX):
            continue
        section, sep, key = name[len(ENV_PREFIX):].partition("__")
        if not sep or not section or not key:
            continue
        config.setdefault(section.lower(), {})[key.lower()] = value
    return config


def config_value(config: Mapping[str, Mapping[str, str]], section: str, key: str, default, kind=None):
    """Typed lookup; ``kind`` defaults to the type of ``default``."""
    raw = config.get(section, {}).get(key)
    if raw is None:
        return default
    kind = kind or type(default)
    try:
        if kind is bool:
            low = raw.strip().lower()
            if low in _TRUE:
                return True
            if low in _FALSE:
                return False
            raise ValueError(raw)
        return kind(raw)
    except ValueError:
        raise InputError(f"config [{section}] {key}: cannot read {raw!r} as {kind.__name__}") from None


def digest_file(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def digest_config(config: Mapping) -> str:
    text = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def resolve_timestamp(explicit: str | None = None, environ: Mapping[str, str] | None = None) -> str:
    """``--timestamp`` wins, then SOURCE_DATE_EPOCH, then the current UTC time."""
    if explicit:
        return explicit
    env = os.environ if environ is None else environ
    epoch = env.get("SOURCE_DATE_EPOCH")
    if epoch:
        try:
            seconds = int(epoch)
        except ValueError:
            raise InputError(f"SOURCE_DATE_EPOCH must be an integer, got {epoch!r}") from None
    else:
        seconds = int(time.time())
    return time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime(seconds))


@dataclass(frozen=True)
class RunManifest:
    command: str
    inputs: dict[str, str] = field(default_factory=dict)
    config_digest: str = ""
    seed: int | None = None
    version: str = ""
    timestamp: str = ""

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, separators=(",", ":"))

    def comment(self) -> str:
        return MANIFEST_PREFIX + self.to_json()

    @classmethod
    def from_comment(cls, line: str) -> "RunManifest":
        if not line.startswith(MANIFEST_PREFIX):
            raise InputError("not a manifest line")
        return cls(**json.loads(line[len(MANIFEST_PREFIX):]))


def read_manifest(path: str | Path) -> RunManifest | None:
    with open(path, encoding="utf-8") as fh:
        first = fh.readline().rstrip("\n")
    return RunManifest.from_comment(first) if first.startswith(MANIFEST_PREFIX) else None
