"""Join per-city observations into rows, attach next-day targets, split by date."""

from __future__ import annotations

import csv
import io
from collections import defaultdict
from dataclasses import dataclass, field, replace
from datetime import date, datetime, timedelta, timezone
from typing import Iterable, Sequence

from .ingest import CATEGORICAL_FIELDS, NUMERIC_FIELDS, DECIMALS, RawObservation

FEATURES = NUMERIC_FIELDS + CATEGORICAL_FIELDS
HORIZON = timedelta(hours=24)
# A feature column absent in more than this fraction of candidate rows is dropped.
COLUMN_DROP_FRACTION = 0.05


class DatasetError(Exception):
    pass


class NoOverlap(DatasetError):
    pass


class UnknownCity(DatasetError):
    pass


class EmptySplit(DatasetError):
    pass


class InsufficientHistory(DatasetError):
    pass


@dataclass
class JoinedRow:
    timestamp: datetime
    features: dict[str, dict[str, float | str | None]]
    target: float | None = None

    @property
    def cities(self) -> list[str]:
        return list(self.features)


@dataclass
class DatasetSplit:
    train: list[JoinedRow]
    test: list[JoinedRow]
    target_city: str
    city_order: list[str]
    train_range: tuple[date, date]
    test_range: tuple[date, date]
    counts: dict[str, int] = field(default_factory=dict)


def city_order(cities: Sequence[str], target_city: str) -> list[str]:
    """Configuration order with the target city moved to the front."""
    names = list(cities)
    if target_city not in names:
        raise UnknownCity(f"target city {target_city!r} not in {names}")
    return [target_city] + [c for c in names if c != target_city]


def join_cities(observations: Iterable[RawObservation], cities: Sequence[str]) -> list[JoinedRow]:
    """One row per timestamp at which every listed city reports.

    Feature columns missing in more than 5% of those timestamps are dropped
    everywhere; rows still missing a numeric value are then dropped. Missing
    categoricals survive as None.
    """
    cities = list(cities)
    if not cities:
        raise ValueError("city list is empty")
    wanted = set(cities)
    by_time: dict[datetime, dict[str, RawObservation]] = defaultdict(dict)
    for obs in observations:
        if obs.city in wanted:
            by_time[obs.timestamp].setdefault(obs.city, obs)
    candidates = sorted(t for t, got in by_time.items() if len(got) == len(cities))
    if not candidates:
        raise NoOverlap(f"no timestamp has observations for all of {cities}")

    limit = COLUMN_DROP_FRACTION * len(candidates)
    kept: dict[str, list[str]] = {}
    for city in cities:
        kept[city] = [
            name
            for name in FEATURES
            if sum(by_time[t][city].value(name) is None for t in candidates) <= limit
        ]

    rows = []
    for t in candidates:
        feats = {city: {name: by_time[t][city].value(name) for name in kept[city]} for city in cities}
        if any(
            feats[city][name] is None for city in cities for name in kept[city] if name in NUMERIC_FIELDS
        ):
            continue
        rows.append(JoinedRow(timestamp=t, features=feats))
    if not rows:
        raise NoOverlap(f"every common timestamp for {cities} has an invalid value")
    return rows


def attach_target(rows: Sequence[JoinedRow], target_city: str, horizon: timedelta = HORIZON) -> list[JoinedRow]:
    """Set each row's target to the target city's temperature ``horizon`` later.

    The lookup is among the joined rows; rows without a partner are dropped.
    """
    if not rows:
        return []
    if target_city not in rows[0].features:
        raise UnknownCity(f"target city {target_city!r} not in join {rows[0].cities}")
    if "temp_f" not in rows[0].features[target_city]:
        raise DatasetError(f"temp_f of {target_city} was eliminated; no target available")
    temps = {r.timestamp: r.features[target_city]["temp_f"] for r in rows}
    out = []
    for r in rows:
        later = temps.get(r.timestamp + horizon)
        if later is not None:
            out.append(replace(r, target=later))
    return out


def _check_range(rng) -> tuple[date, date]:
    start, end = rng
    if not start < end:
        raise ValueError(f"empty date range {start}..{end}")
    return start, end


def split_by_date(
    rows: Sequence[JoinedRow],
    train_range: tuple[date, date],
    test_range: tuple[date, date],
    target_city: str | None = None,
) -> DatasetSplit:
    """Assign rows to train/test by the date of their own timestamp; ranges are [start, end)."""
    train_range, test_range = _check_range(train_range), _check_range(test_range)
    if train_range[0] < test_range[1] and test_range[0] < train_range[1]:
        raise ValueError(f"train {train_range} and test {test_range} overlap")
    train = [r for r in rows if train_range[0] <= r.timestamp.date() < train_range[1]]
    test = [r for r in rows if test_range[0] <= r.timestamp.date() < test_range[1]]
    if any(r.target is None for r in train + test):
        raise ValueError("rows must have targets attached before splitting")
    if not train:
        raise EmptySplit(f"train range {train_range} holds no rows")
    if not test:
        raise EmptySplit(f"test range {test_range} holds no rows")
    order = rows[0].cities
    return DatasetSplit(
        train=train,
        test=test,
        target_city=target_city or order[0],
        city_order=order,
        train_range=train_range,
        test_range=test_range,
        counts={"train": len(train), "test": len(test)},
    )


def trailing_weeks_subset(split: DatasetSplit, k: int) -> DatasetSplit:
    """Restrict training to the ``k`` weeks immediately before the test start."""
    if k < 1:
        raise ValueError("k must be at least 1")
    start = split.test_range[0] - timedelta(days=7 * k)
    if start < split.train_range[0]:
        raise InsufficientHistory(
            f"{k} weeks needs history from {start}, train range starts {split.train_range[0]}"
        )
    end = split.test_range[0]
    train = [r for r in split.train if start <= r.timestamp.date() < end]
    if not train:
        raise EmptySplit(f"no training rows in [{start}, {end})")
    return replace(
        split,
        train=train,
        train_range=(start, end),
        counts={"train": len(train), "test": len(split.test)},
    )


# -- interchange CSV -------------------------------------------------------


def _cell(name: str, value) -> str:
    if value is None:
        return ""
    if name in DECIMALS:
        return f"{value:.{DECIMALS[name]}f}"
    return str(value)


def joined_columns(rows: Sequence[JoinedRow]) -> list[tuple[str, str]]:
    if not rows:
        return []
    return [(city, name) for city, feats in rows[0].features.items() for name in feats]


def joined_text(rows: Sequence[JoinedRow]) -> str:
    cols = joined_columns(rows)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["timestamp_utc", "target_temp_f"] + [f"{c}_{n}" for c, n in cols])
    for r in rows:
        writer.writerow(
            [r.timestamp.strftime("%Y-%m-%dT%H:00Z"), _cell("temp_f", r.target)]
            + [_cell(n, r.features[c][n]) for c, n in cols]
        )
    return buf.getvalue()


def parse_joined(text: str, cities: Sequence[str]) -> list[JoinedRow]:
    """Inverse of :func:`joined_text`; ``cities`` disambiguates column prefixes."""
    reader = csv.reader(io.StringIO(text))
    header = next(reader)
    if header[:2] != ["timestamp_utc", "target_temp_f"]:
        raise ValueError(f"not a joined dataset header: {header[:2]}")
    cols = []
    for label in header[2:]:
        for city in sorted(cities, key=len, reverse=True):
            name = label[len(city) + 1 :]
            if label.startswith(city + "_") and name in FEATURES:
                cols.append((city, name))
                break
        else:
            raise ValueError(f"column {label!r} matches no configured city/feature")
    rows = []
    for row in reader:
        ts = datetime.strptime(row[0], "%Y-%m-%dT%H:00Z").replace(tzinfo=timezone.utc)
        feats: dict[str, dict] = {}
        for (city, name), cell in zip(cols, row[2:]):
            feats.setdefault(city, {})
            if cell == "":
                feats[city][name] = None
            elif name in NUMERIC_FIELDS:
                feats[city][name] = float(cell)
            else:
                feats[city][name] = cell
        rows.append(JoinedRow(timestamp=ts, features=feats, target=float(row[1]) if row[1] else None))
    return rows
