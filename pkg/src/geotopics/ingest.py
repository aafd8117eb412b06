"""Turn a JSON-lines tweet corpus plus a gazetteer into a count tensor and index maps.

A tweet contributes iff its raw text matches a tracking keyword, it yields
at least one retained token, a location can be resolved for it, and its
timestamp falls on the time axis. Each retained token occurrence then
increments one (term, location, day-bin) cell. Term and location indices
are assigned in first-appearance order over the input, so identical inputs
produce identical artifacts byte for byte.

Location resolution is a gazetteer lookup rather than a named-entity
model: the user profile location is tried first (longest match), then the
tweet text is scanned left to right. The gazetteer file is a plain CSV, so
a richer resolver can be swapped in by regenerating it.
"""

from __future__ import annotations

import csv
import functools
import json
import re
import unicodedata
from dataclasses import dataclass
from datetime import date, datetime, timedelta, timezone
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

from .errors import EmptyCorpusError
from .tensor import SparseTensor3, build_coo_arrays

# The tracking keywords of the case study this pipeline was built around.
DEFAULT_KEYWORDS: tuple[str, ...] = (
    "coronavirus",
    "covid19",
    "covid-19",
    "covid_19",
    "coronovirusoutbreak",
    "covid2019",
    "covid",
    "coronaoutbreak",
)

_URL_RE = re.compile(r"(?:https?://|www\.)\S+")
_MENTION_RE = re.compile(r"@\w+")
_TOKEN_RE = re.compile(r"[^\W\d_]+", re.UNICODE)
_MIN_TOKEN_LEN = 2


def tokenize_normalize(text: str, stopwords: frozenset[str] | set[str]) -> list[str]:
    """Lowercased alphabetic tokens, stripped of URLs/mentions/stopwords.

    Hashtag words survive (the '#' is not a letter), digits and one-letter
    fragments do not. Order and duplicates are preserved.
    """
    cleaned = _MENTION_RE.sub(" ", _URL_RE.sub(" ", text.lower()))
    return [
        tok
        for tok in _TOKEN_RE.findall(cleaned)
        if len(tok) >= _MIN_TOKEN_LEN and tok not in stopwords
    ]


@functools.lru_cache(maxsize=16)
def _keyword_regex(keywords: tuple[str, ...]) -> re.Pattern[str]:
    # Longest alternatives first; boundaries exclude letters and digits so
    # "covid" hits "covid-19 update" but not "covidiocy19"-style run-ons.
    alts = sorted({kw.lower() for kw in keywords}, key=lambda k: (-len(k), k))
    body = "|".join(re.escape(kw) for kw in alts)
    return re.compile(rf"(?<![a-z0-9])(?:{body})(?![a-z0-9])")


def filter_keywords(
    tokens: list[str], raw_text: str, keywords: frozenset[str] | set[str] | tuple[str, ...]
) -> bool:
    """True iff the lowercased raw text contains a keyword on word-ish boundaries.

    Matching runs on the raw text because the keyword list contains hyphen
    and underscore variants that tokenization destroys. ``tokens`` is part
    of the signature for alternative (token-level) matching rules; the
    boundary rule subsumes them.
    """
    if not keywords:
        return False
    return _keyword_regex(tuple(sorted(keywords))).search(raw_text.lower()) is not None


@dataclass(frozen=True)
class Tweet:
    id: str
    text: str
    created_at: datetime
    user_location: str | None = None


def parse_tweet_line(line: str) -> Tweet:
    """Parse one JSON-lines record; raises ValueError on anything unusable."""
    obj = json.loads(line)
    if not isinstance(obj, dict):
        raise ValueError("record is not an object")
    text = obj["text"]
    if not isinstance(text, str) or not text.strip():
        raise ValueError("missing or empty text")
    raw_ts = obj["created_at"]
    ts = datetime.fromisoformat(str(raw_ts).replace("Z", "+00:00"))
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=timezone.utc)
    else:
        ts = ts.astimezone(timezone.utc)
    loc = obj.get("user_location")
    if loc is not None and not isinstance(loc, str):
        raise ValueError("user_location must be a string or null")
    return Tweet(id=str(obj["id"]), text=text, created_at=ts, user_location=loc)


# ---------------------------------------------------------------------------
# Index maps


class Vocabulary:
    """Bidirectional term <-> dense index map, insertion-ordered."""

    def __init__(self, terms: Iterable[str] = ()) -> None:
        self._index: dict[str, int] = {}
        for t in terms:
            self.intern(t)

    def intern(self, term: str) -> int:
        idx = self._index.get(term)
        if idx is None:
            idx = len(self._index)
            self._index[term] = idx
        return idx

    def index_of(self, term: str) -> int | None:
        return self._index.get(term)

    def term_at(self, idx: int) -> str:
        return self.terms[idx]

    @property
    def terms(self) -> list[str]:
        return list(self._index)

    def __len__(self) -> int:
        return len(self._index)

    def __iter__(self) -> Iterator[str]:
        return iter(self._index)


def normalize_place(name: str) -> str:
    """Case/accent/punctuation-insensitive form used for gazetteer keys."""
    decomposed = unicodedata.normalize("NFKD", name)
    stripped = "".join(c for c in decomposed if not unicodedata.combining(c))
    words = re.findall(r"[^\W_]+", stripped.lower(), re.UNICODE)
    return " ".join(words)


@dataclass(frozen=True)
class GazetteerEntry:
    canonical: str
    lat: float
    lon: float


class LocationIndex:
    """Gazetteer lookup plus dense location indices assigned on first use."""

    def __init__(self) -> None:
        self._names: dict[str, GazetteerEntry] = {}
        self._coords: dict[str, tuple[float, float]] = {}
        self._assigned: dict[str, int] = {}
        self._entries: list[GazetteerEntry] = []
        self.max_name_words = 0

    @classmethod
    def from_csv(cls, path: str | Path) -> "LocationIndex":
        """Load ``name,canonical_id,lat,lon`` rows; names are normalized."""
        index = cls()
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            required = {"name", "canonical_id", "lat", "lon"}
            if reader.fieldnames is None or not required <= set(reader.fieldnames):
                raise ValueError(f"{path}: gazetteer needs columns {sorted(required)}")
            for row in reader:
                index.add(row["name"], row["canonical_id"], float(row["lat"]), float(row["lon"]))
        if not index._names:
            raise ValueError(f"{path}: gazetteer is empty")
        return index

    def add(self, name: str, canonical: str, lat: float, lon: float) -> None:
        if not -90.0 <= lat <= 90.0 or not -180.0 <= lon <= 180.0:
            raise ValueError(f"gazetteer entry {canonical!r}: bad coordinates ({lat}, {lon})")
        key = normalize_place(name)
        if not key:
            raise ValueError(f"gazetteer name {name!r} normalizes to nothing")
        entry = GazetteerEntry(canonical=canonical, lat=lat, lon=lon)
        existing = self._names.get(key)
        if existing is not None and existing != entry:
            raise ValueError(f"gazetteer name {name!r} maps to conflicting entries")
        known = self._coords.get(canonical)
        if known is not None and known != (lat, lon):
            raise ValueError(f"canonical {canonical!r} has conflicting coordinates")
        self._names[key] = entry
        self._coords[canonical] = (lat, lon)
        self.max_name_words = max(self.max_name_words, len(key.split()))

    def lookup_normalized(self, key: str) -> GazetteerEntry | None:
        return self._names.get(key)

    def lookup_longest(self, raw: str) -> GazetteerEntry | None:
        """Longest-window gazetteer match inside a free-form location string."""
        words = normalize_place(raw).split()
        for span in range(min(len(words), self.max_name_words), 0, -1):
            for start in range(0, len(words) - span + 1):
                hit = self._names.get(" ".join(words[start : start + span]))
                if hit is not None:
                    return hit
        return None

    def scan_tokens(self, tokens: list[str]) -> GazetteerEntry | None:
        """First gazetteer hit scanning left to right; 2-word windows first."""
        for i in range(len(tokens)):
            for span in (2, 1):
                if i + span > len(tokens):
                    continue
                hit = self._names.get(" ".join(tokens[i : i + span]))
                if hit is not None:
                    return hit
        return None

    def intern(self, entry: GazetteerEntry) -> int:
        idx = self._assigned.get(entry.canonical)
        if idx is None:
            idx = len(self._assigned)
            self._assigned[entry.canonical] = idx
            self._entries.append(entry)
        return idx

    def assigned_entries(self) -> list[GazetteerEntry]:
        """Entries with dense indices, in assignment order."""
        return list(self._entries)

    def __len__(self) -> int:
        return len(self._assigned)


def _find_location(tweet: Tweet, index: LocationIndex) -> GazetteerEntry | None:
    if tweet.user_location:
        hit = index.lookup_longest(tweet.user_location)
        if hit is not None:
            return hit
    return index.scan_tokens(tokenize_normalize(tweet.text, frozenset()))


def resolve_location(tweet: Tweet, index: LocationIndex) -> int | None:
    """Dense location index for a tweet, or None.

    Profile location wins (longest gazetteer match); otherwise the first
    hit scanning the text. Assigns the next free index on a first hit; the
    corpus builder defers that assignment until a tweet fully qualifies.
    """
    hit = _find_location(tweet, index)
    return None if hit is None else index.intern(hit)


@dataclass(frozen=True)
class TimeAxis:
    """Uniform binning from a UTC origin date; default one-day bins."""

    origin: date
    bin_width: timedelta = timedelta(days=1)
    bin_count: int = 1

    def __post_init__(self) -> None:
        if self.bin_width <= timedelta(0):
            raise ValueError("bin_width must be positive")
        if self.bin_count < 1:
            raise ValueError("bin_count must be >= 1")

    @property
    def origin_dt(self) -> datetime:
        return datetime(self.origin.year, self.origin.month, self.origin.day, tzinfo=timezone.utc)

    def bin_start(self, idx: int) -> date:
        return (self.origin_dt + idx * self.bin_width).date()


def bin_time(ts: datetime, axis: TimeAxis) -> int | None:
    """floor((ts - origin) / bin_width) when on the axis, else None."""
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=timezone.utc)
    idx = (ts - axis.origin_dt) // axis.bin_width
    return int(idx) if 0 <= idx < axis.bin_count else None


# ---------------------------------------------------------------------------
# Corpus construction


@dataclass
class IngestConfig:
    keywords: tuple[str, ...] = DEFAULT_KEYWORDS
    stopwords: frozenset[str] = frozenset()
    bin_width: timedelta = timedelta(days=1)
    count_mode: str = "occurrence"  # or "binary": one count per distinct term per tweet
    origin: date | None = None  # both None: derived from the accepted tweets
    bin_count: int | None = None

    def __post_init__(self) -> None:
        if self.count_mode not in ("occurrence", "binary"):
            raise ValueError(f"count_mode must be 'occurrence' or 'binary', got {self.count_mode!r}")
        if self.bin_width <= timedelta(0):
            raise ValueError("bin_width must be positive")


@dataclass
class CorpusStats:
    read: int = 0
    kept: int = 0
    dropped_unreadable: int = 0
    dropped_no_keyword: int = 0
    dropped_no_tokens: int = 0
    dropped_no_location: int = 0
    dropped_out_of_range: int = 0
    retained_tokens: int = 0
    dims: tuple[int, int, int] = (0, 0, 0)

    def to_dict(self) -> dict:
        return {
            "read": self.read,
            "kept": self.kept,
            "dropped": {
                "unreadable": self.dropped_unreadable,
                "no_keyword": self.dropped_no_keyword,
                "no_tokens": self.dropped_no_tokens,
                "no_location": self.dropped_no_location,
                "out_of_range": self.dropped_out_of_range,
            },
            "retained_tokens": self.retained_tokens,
            "dims": {"terms": self.dims[0], "locations": self.dims[1], "bins": self.dims[2]},
        }


@dataclass
class CorpusResult:
    tensor: SparseTensor3
    vocabulary: Vocabulary
    locations: LocationIndex
    timeaxis: TimeAxis
    stats: CorpusStats


def build_corpus_tensor(
    tweets: Iterable[str | Tweet], gazetteer: LocationIndex, config: IngestConfig
) -> CorpusResult:
    """Stream tweets (or raw JSON lines) into the count tensor and index maps.

    Drop reasons are checked in a fixed order (parse, keyword, tokens,
    location, time) so the stats are as deterministic as the tensor.
    Raises EmptyCorpusError when nothing survives.
    """
    stats = CorpusStats()
    stopwords = frozenset(config.stopwords)
    keywords = tuple(config.keywords)
    candidates: list[tuple[list[str], GazetteerEntry, datetime]] = []
    for item in tweets:
        stats.read += 1
        if isinstance(item, Tweet):
            tweet = item
        else:
            try:
                tweet = parse_tweet_line(item)
            except (ValueError, KeyError, TypeError):
                stats.dropped_unreadable += 1
                continue
        if not filter_keywords([], tweet.text, keywords):
            stats.dropped_no_keyword += 1
            continue
        tokens = tokenize_normalize(tweet.text, stopwords)
        if not tokens:
            stats.dropped_no_tokens += 1
            continue
        entry = _find_location(tweet, gazetteer)
        if entry is None:
            stats.dropped_no_location += 1
            continue
        candidates.append((tokens, entry, tweet.created_at))

    if not candidates:
        raise EmptyCorpusError("no tweet passed the keyword/token/location filters")

    origin = config.origin
    if origin is None:
        origin = min(ts for _, _, ts in candidates).astimezone(timezone.utc).date()
    bin_count = config.bin_count
    if bin_count is None:
        origin_dt = datetime(origin.year, origin.month, origin.day, tzinfo=timezone.utc)
        last = max(ts for _, _, ts in candidates)
        span = (last - origin_dt) // config.bin_width
        bin_count = max(1, int(span) + 1)
    axis = TimeAxis(origin=origin, bin_width=config.bin_width, bin_count=bin_count)

    vocab = Vocabulary()
    counts: dict[tuple[int, int, int], float] = {}
    for tokens, entry, ts in candidates:
        o = bin_time(ts, axis)
        if o is None:
            stats.dropped_out_of_range += 1
            continue
        n = gazetteer.intern(entry)
        if config.count_mode == "binary":
            tokens = list(dict.fromkeys(tokens))
        for tok in tokens:
            m = vocab.intern(tok)
            key = (m, n, o)
            counts[key] = counts.get(key, 0.0) + 1.0
            stats.retained_tokens += 1
        stats.kept += 1

    if not counts:
        raise EmptyCorpusError("every candidate tweet fell outside the time axis")

    coords = np.asarray(list(counts.keys()), dtype=np.int64)
    values = np.asarray(list(counts.values()), dtype=np.float64)
    dims = (len(vocab), len(gazetteer), axis.bin_count)
    tensor = build_coo_arrays(coords, values, dims)
    stats.dims = dims
    return CorpusResult(
        tensor=tensor, vocabulary=vocab, locations=gazetteer, timeaxis=axis, stats=stats
    )


# ---------------------------------------------------------------------------
# File I/O for word lists and ingest artifacts


def load_wordlist(path: str | Path) -> tuple[str, ...]:
    """One lowercase word per line; blanks and '#' comments ignored."""
    out = []
    for ln in Path(path).read_text(encoding="utf-8").splitlines():
        word = ln.strip().lower()
        if word and not word.startswith("#"):
            out.append(word)
    return tuple(out)


def write_corpus_artifacts(result: CorpusResult, outdir: str | Path) -> list[str]:
    """Write terms.txt, locations.csv, timeaxis.json and stats.json; returns names."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    (outdir / "terms.txt").write_text(
        "".join(t + "\n" for t in result.vocabulary.terms), encoding="utf-8"
    )
    with open(outdir / "locations.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["index", "canonical", "lat", "lon"])
        for i, entry in enumerate(result.locations.assigned_entries()):
            writer.writerow([i, entry.canonical, repr(entry.lat), repr(entry.lon)])
    axis = result.timeaxis
    (outdir / "timeaxis.json").write_text(
        json.dumps(
            {
                "origin": axis.origin.isoformat(),
                "bin_width_seconds": int(axis.bin_width.total_seconds()),
                "bin_count": axis.bin_count,
            },
            indent=2,
            sort_keys=True,
        )
        + "\n",
        encoding="utf-8",
    )
    (outdir / "stats.json").write_text(
        json.dumps(result.stats.to_dict(), indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )
    return ["terms.txt", "locations.csv", "timeaxis.json", "stats.json"]


def read_terms(path: str | Path) -> list[str]:
    return [ln for ln in Path(path).read_text(encoding="utf-8").splitlines() if ln]


def read_locations_csv(path: str | Path) -> list[GazetteerEntry]:
    entries = []
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            entries.append(
                GazetteerEntry(
                    canonical=row["canonical"], lat=float(row["lat"]), lon=float(row["lon"])
                )
            )
    return entries


def read_timeaxis(path: str | Path) -> TimeAxis:
    obj = json.loads(Path(path).read_text(encoding="utf-8"))
    return TimeAxis(
        origin=date.fromisoformat(obj["origin"]),
        bin_width=timedelta(seconds=int(obj["bin_width_seconds"])),
        bin_count=int(obj["bin_count"]),
    )
