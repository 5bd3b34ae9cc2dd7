"""Acquire hourly weather-history documents and persist canonical observations.

A history document holds one city-day of readings in local time. Parsing
converts them to UTC hour-truncated :class:`RawObservation` values; the
canonical CSV is the flat interchange table every later stage reads.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import os
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from datetime import date, datetime, timedelta, timezone
from pathlib import Path
from typing import Iterable, Sequence

import requests

log = logging.getLogger(__name__)

NUMERIC_FIELDS = ("temp_f", "dewpoint_f", "humidity_pct", "pressure_inhg", "wind_mph")
CATEGORICAL_FIELDS = ("wind_dir", "condition")
CANONICAL_HEADER = (
    "timestamp_utc",
    "city",
    "temp_f",
    "dewpoint_f",
    "humidity_pct",
    "pressure_inhg",
    "wind_mph",
    "wind_dir",
    "condition",
)

# Sanity bands; a value outside its band is marked invalid (None).
BANDS = {
    "temp_f": (-60.0, 130.0),
    "dewpoint_f": (-60.0, 130.0),
    "humidity_pct": (0.0, 100.0),
    "pressure_inhg": (25.0, 35.0),
    "wind_mph": (0.0, float("inf")),
}

# Decimal places used when serializing. Pressure keeps two because station
# barometers report hundredths of an inch and one place erases most of the
# synoptic signal.
DECIMALS = {
    "temp_f": 1,
    "dewpoint_f": 1,
    "humidity_pct": 1,
    "pressure_inhg": 2,
    "wind_mph": 1,
}

FIXTURE_ENV = "TEMPEST_FIXTURE_DIR"


class IngestError(Exception):
    pass


class MalformedDocument(IngestError):
    """The document is not JSON or does not follow the fixture schema."""


class EmptyDocument(IngestError):
    """The document is well formed but holds zero observations."""


class NotFound(IngestError):
    pass


class TransportError(IngestError):
    """Network failure; the request may be retried."""


class RateLimited(IngestError):
    pass


class SchemaError(IngestError):
    pass


class CanonicalRowError(ValueError):
    def __init__(self, row_index: int, message: str):
        super().__init__(f"row {row_index}: {message}")
        self.row_index = row_index


@dataclass(frozen=True)
class CityId:
    name: str
    lat: float
    lon: float

    def __post_init__(self):
        if not self.name or self.name != self.name.lower():
            raise ValueError(f"city name must be nonempty lowercase: {self.name!r}")
        if not -90.0 <= self.lat <= 90.0:
            raise ValueError(f"latitude out of range: {self.lat}")
        if not -180.0 <= self.lon <= 180.0:
            raise ValueError(f"longitude out of range: {self.lon}")


@dataclass(frozen=True)
class RawObservation:
    """One city-hour of readings. ``None`` marks an absent or invalid value."""

    city: str
    timestamp: datetime
    temp_f: float | None = None
    dewpoint_f: float | None = None
    humidity_pct: float | None = None
    pressure_inhg: float | None = None
    wind_mph: float | None = None
    wind_dir: str | None = None
    condition: str | None = None

    def __post_init__(self):
        ts = self.timestamp
        if ts.tzinfo is None or ts.utcoffset() != timedelta(0):
            raise ValueError("timestamp must be timezone-aware UTC")
        if ts.minute or ts.second or ts.microsecond:
            raise ValueError(f"timestamp not truncated to the hour: {ts.isoformat()}")

    def value(self, name: str):
        return getattr(self, name)


@dataclass
class HistoryDocument:
    city: str
    date: date
    text: str
    observations: list[dict] = field(default_factory=list)


def validated(name: str, raw) -> float | None:
    """Convert one raw numeric reading, returning None when unusable."""
    if raw is None or isinstance(raw, bool):
        return None
    if isinstance(raw, (int, float)):
        value = float(raw)
    else:
        try:
            value = float(str(raw).strip())
        except ValueError:
            return None
    if value != value or value in (float("inf"), float("-inf")):
        return None
    lo, hi = BANDS[name]
    if not lo <= value <= hi:
        return None
    return value


def _category(raw) -> str | None:
    if raw is None:
        return None
    text = str(raw).strip()
    return text or None


def parse_history_document(text: str, city: CityId | str) -> list[RawObservation]:
    """Parse a fixture-schema JSON document into hourly UTC observations.

    Sub-hourly readings collapse to the one nearest the top of its hour
    (earliest wins a tie). Unparsable or out-of-band numerics become None.
    """
    name = city.name if isinstance(city, CityId) else city
    try:
        doc = json.loads(text)
    except (json.JSONDecodeError, TypeError) as exc:
        raise MalformedDocument(f"{name}: not JSON: {exc}") from exc
    if not isinstance(doc, dict) or not isinstance(doc.get("observations"), list):
        raise MalformedDocument(f"{name}: missing observations array")
    if doc.get("city") is not None and doc["city"] != name:
        raise MalformedDocument(f"document is for {doc['city']!r}, expected {name!r}")
    try:
        day = date.fromisoformat(doc["date"])
        offset = timedelta(minutes=int(doc.get("utc_offset_minutes", 0)))
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedDocument(f"{name}: bad date or utc offset: {exc}") from exc
    entries = doc["observations"]
    if not entries:
        raise EmptyDocument(f"{name} {day}: zero observations")

    best: dict[datetime, tuple[int, RawObservation]] = {}
    for entry in entries:
        if not isinstance(entry, dict):
            raise MalformedDocument(f"{name} {day}: observation is not an object")
        try:
            hh, mm = (int(part) for part in str(entry["time_local"]).split(":"))
            local = datetime(day.year, day.month, day.day) + timedelta(hours=hh, minutes=mm)
        except (KeyError, ValueError) as exc:
            raise MalformedDocument(f"{name} {day}: bad time_local: {exc}") from exc
        utc = (local - offset).replace(tzinfo=timezone.utc)
        hour = utc.replace(minute=0, second=0, microsecond=0)
        minutes_past = int((utc - hour).total_seconds() // 60)
        obs = RawObservation(
            city=name,
            timestamp=hour,
            temp_f=validated("temp_f", entry.get("temp_f")),
            dewpoint_f=validated("dewpoint_f", entry.get("dewpoint_f")),
            humidity_pct=validated("humidity_pct", entry.get("humidity_pct")),
            pressure_inhg=validated("pressure_inhg", entry.get("pressure_inhg")),
            wind_mph=validated("wind_mph", entry.get("wind_mph")),
            wind_dir=_category(entry.get("wind_dir")),
            condition=_category(entry.get("condition")),
        )
        kept = best.get(hour)
        if kept is None or minutes_past < kept[0]:
            best[hour] = (minutes_past, obs)
    return [best[h][1] for h in sorted(best)]


# -- clients ---------------------------------------------------------------


class HistoryClient:
    """Source of raw history documents for (city, day) pairs."""

    def get(self, city: str, day: date) -> str:
        raise NotImplementedError


class FixtureClient(HistoryClient):
    """Reads ``<root>/<city>/<YYYY-MM-DD>.json``.

    ``TEMPEST_FIXTURE_DIR`` overrides the configured root when set.
    """

    def __init__(self, root: str | os.PathLike | None = None):
        override = os.environ.get(FIXTURE_ENV)
        chosen = override or root
        if chosen is None:
            raise ValueError(f"no fixture directory configured and {FIXTURE_ENV} unset")
        self.root = Path(chosen)

    def path_for(self, city: str, day: date) -> Path:
        return self.root / city / f"{day.isoformat()}.json"

    def get(self, city: str, day: date) -> str:
        path = self.path_for(city, day)
        try:
            return path.read_text(encoding="utf-8")
        except FileNotFoundError:
            raise NotFound(str(path)) from None


class _RateGate:
    """Spaces request starts at least ``interval`` seconds apart."""

    def __init__(self, per_second: float | None):
        self.interval = 1.0 / per_second if per_second else 0.0
        self._lock = threading.Lock()
        self._next = 0.0

    def wait(self):
        if not self.interval:
            return
        with self._lock:
            now = time.monotonic()
            start = max(now, self._next)
            self._next = start + self.interval
        if start > now:
            time.sleep(start - now)


class HttpClient(HistoryClient):
    """One GET of ``<base_url>/<city>/<YYYY-MM-DD>.json`` per (city, day)."""

    def __init__(
        self,
        base_url: str,
        retries: int = 3,
        backoff: float = 1.0,
        timeout: float = 30.0,
        rate_per_second: float | None = None,
        session: requests.Session | None = None,
    ):
        if not base_url:
            raise ValueError("live client needs a base URL")
        self.base_url = base_url.rstrip("/")
        self.retries = retries
        self.backoff = backoff
        self.timeout = timeout
        self.gate = _RateGate(rate_per_second)
        self.session = session or requests.Session()

    def url_for(self, city: str, day: date) -> str:
        return f"{self.base_url}/{city}/{day.isoformat()}.json"

    def get(self, city: str, day: date) -> str:
        url = self.url_for(city, day)
        for attempt in range(self.retries + 1):
            last = attempt == self.retries
            self.gate.wait()
            try:
                resp = self.session.get(url, timeout=self.timeout)
            except requests.RequestException as exc:
                if last:
                    raise TransportError(f"{url}: {exc}") from exc
            else:
                if resp.status_code == 200:
                    return resp.text
                if resp.status_code == 404:
                    raise NotFound(url)
                if resp.status_code == 429:
                    if last:
                        raise RateLimited(url)
                elif last:
                    raise TransportError(f"{url}: HTTP {resp.status_code}")
            time.sleep(self.backoff * 2**attempt)
        raise AssertionError("unreachable")


def fetch_city_day(client: HistoryClient, city: CityId | str, day: date) -> HistoryDocument:
    name = city.name if isinstance(city, CityId) else city
    text = client.get(name, day)
    try:
        entries = json.loads(text).get("observations", [])
    except (json.JSONDecodeError, AttributeError):
        entries = []
    return HistoryDocument(city=name, date=day, text=text, observations=entries)


@dataclass
class FetchResult:
    observations: list[RawObservation]
    missing: list[tuple[str, date]]
    failed: list[tuple[str, date, str]]


def fetch_grid(
    client: HistoryClient,
    cities: Sequence[CityId | str],
    days: Iterable[date],
    parallelism: int = 4,
) -> FetchResult:
    """Fetch and parse every (city, day) pair, collecting gaps instead of stopping."""
    names = [c.name if isinstance(c, CityId) else c for c in cities]
    pairs = [(name, d) for d in days for name in names]

    def one(pair):
        name, d = pair
        try:
            doc = fetch_city_day(client, name, d)
            return pair, parse_history_document(doc.text, name), None
        except NotFound:
            return pair, None, "missing"
        except EmptyDocument:
            return pair, [], None
        except IngestError as exc:
            return pair, None, str(exc)

    with ThreadPoolExecutor(max_workers=max(1, parallelism)) as pool:
        results = list(pool.map(one, pairs))

    obs: list[RawObservation] = []
    missing, failed = [], []
    for (name, d), parsed, err in results:
        if err == "missing":
            log.warning("no document for %s %s", name, d)
            missing.append((name, d))
        elif err is not None:
            log.error("fetch failed for %s %s: %s", name, d, err)
            failed.append((name, d, err))
        else:
            obs.extend(parsed)
    return FetchResult(observations=obs, missing=missing, failed=failed)


# -- canonical table -------------------------------------------------------


def _fmt(name: str, value) -> str:
    if value is None:
        return ""
    if name in DECIMALS:
        return f"{value:.{DECIMALS[name]}f}"
    return str(value)


def _fmt_ts(ts: datetime) -> str:
    return ts.strftime("%Y-%m-%dT%H:00Z")


def normalize(observations: Iterable[RawObservation]) -> list[RawObservation]:
    """Sort by (timestamp, city), keep the first of duplicate city-hours, and
    round numerics to their serialized precision."""
    seen = {}
    for obs in observations:
        key = (obs.timestamp, obs.city)
        if key not in seen:
            seen[key] = obs
    out = []
    for key in sorted(seen):
        obs = seen[key]
        rounded = {
            name: (None if obs.value(name) is None else float(_fmt(name, obs.value(name))))
            for name in NUMERIC_FIELDS
        }
        out.append(replace(obs, **rounded))
    return out


def canonical_text(observations: Iterable[RawObservation], header: bool = True) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    if header:
        writer.writerow(CANONICAL_HEADER)
    for obs in normalize(observations):
        writer.writerow(
            [_fmt_ts(obs.timestamp), obs.city]
            + [_fmt(name, obs.value(name)) for name in NUMERIC_FIELDS]
            + [obs.wind_dir or "", obs.condition or ""]
        )
    return buf.getvalue()


def write_canonical(
    observations: Iterable[RawObservation], sink: str | os.PathLike, append: bool = False
) -> int:
    """Write observations to the canonical CSV; returns data rows written.

    With ``append`` the header is only written when the file is new or empty.
    """
    rows = normalize(observations)
    path = Path(sink)
    fresh = not append or not path.exists() or path.stat().st_size == 0
    try:
        with open(path, "a" if append else "w", encoding="utf-8", newline="") as fh:
            fh.write(canonical_text(rows, header=fresh))
    except OSError as exc:
        raise IngestError(f"cannot write {path}: {exc}") from exc
    return len(rows)


def _parse_ts(text: str) -> datetime:
    if len(text) != 17 or not text.endswith(":00Z"):
        raise ValueError(f"bad timestamp {text!r}")
    return datetime.strptime(text, "%Y-%m-%dT%H:00Z").replace(tzinfo=timezone.utc)


def parse_canonical(text: str) -> list[RawObservation]:
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header is None or tuple(header) != CANONICAL_HEADER:
        raise SchemaError(f"header mismatch: {header}")
    out = []
    for i, row in enumerate(reader, start=1):
        if not row:
            continue
        if len(row) != len(CANONICAL_HEADER):
            raise SchemaError(f"row {i}: expected {len(CANONICAL_HEADER)} columns, got {len(row)}")
        try:
            ts = _parse_ts(row[0])
        except ValueError as exc:
            raise CanonicalRowError(i, str(exc)) from None
        if not row[1]:
            raise CanonicalRowError(i, "empty city")
        values = {}
        for name, cell in zip(NUMERIC_FIELDS, row[2:7]):
            if cell == "":
                values[name] = None
                continue
            try:
                float(cell)
            except ValueError:
                raise CanonicalRowError(i, f"{name}={cell!r} is not numeric") from None
            values[name] = validated(name, cell)
        out.append(
            RawObservation(
                city=row[1],
                timestamp=ts,
                wind_dir=row[7] or None,
                condition=row[8] or None,
                **values,
            )
        )
    return out


def read_canonical(source: str | os.PathLike) -> list[RawObservation]:
    return parse_canonical(Path(source).read_text(encoding="utf-8"))


def fixture_document(city: str, day: date, utc_offset_minutes: int, observations: Sequence[RawObservation]) -> dict:
    """Build a fixture-schema document from observations of one local day."""
    offset = timedelta(minutes=utc_offset_minutes)
    entries = []
    for obs in sorted(observations, key=lambda o: o.timestamp):
        local = obs.timestamp.replace(tzinfo=None) + offset
        entries.append(
            {
                "time_local": local.strftime("%H:%M"),
                "temp_f": obs.temp_f,
                "dewpoint_f": obs.dewpoint_f,
                "humidity_pct": obs.humidity_pct,
                "pressure_inhg": obs.pressure_inhg,
                "wind_mph": obs.wind_mph,
                "wind_dir": obs.wind_dir or "",
                "condition": obs.condition or "",
            }
        )
    return {
        "city": city,
        "date": day.isoformat(),
        "utc_offset_minutes": utc_offset_minutes,
        "observations": entries,
    }
