"""Planted ground-truth instances: models, observations, and whole corpora.

Every generator is deterministic per seed. ``plant_model`` draws a
nonnegative CP model with controlled per-component supports and emits its
(optionally noised) reconstruction as a sparse observation. ``plant_corpus``
goes one step further and writes a synthetic tweet corpus that, fed to the
ingestion pipeline, reproduces a known integer count tensor exactly, so
the whole ingest stack can be tested end to end against ground truth.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from datetime import date, timedelta
from pathlib import Path
import numpy as np

from .errors import SpecError
from .solver import write_model
from .tensor import CPModel, SparseTensor3, build_coo_arrays, write_tensor

CORPUS_KEYWORD = "covid"
CORPUS_ORIGIN = date(2020, 3, 1)


@dataclass
class PlantedSpec:
    """Recipe for one synthetic instance.

    Supports are per component: term and location supports are index
    subsets (disjoint across components unless the overlap flag is set),
    time supports are contiguous windows. ``shared_term_column`` copies
    component 0's term column into every component, which makes the
    topic mode uninformative about which location pattern belongs to
    which time pattern - the adversarial case for matrix baselines.
    """

    dims: tuple[int, int, int]
    rank: int
    term_support: int
    location_support: int
    time_support: int
    term_overlap: bool = False
    location_overlap: bool = False
    time_overlap: bool = True
    shared_term_column: bool = False
    term_twist: float = 0.0
    noise: float = 0.0
    sparsity_target: float | None = None
    seed: int = 0
    count_scale: float = 20.0
    emit_corpus: bool = False

    def __post_init__(self) -> None:
        self.dims = tuple(int(d) for d in self.dims)  # type: ignore[assignment]
        if len(self.dims) != 3 or any(d < 1 for d in self.dims):
            raise SpecError(f"dims must be three positive integers, got {self.dims}")
        if self.rank < 1:
            raise SpecError(f"rank must be >= 1, got {self.rank}")
        supports = (self.term_support, self.location_support, self.time_support)
        for size, dim, name in zip(supports, self.dims, ("term", "location", "time")):
            if not 1 <= size <= dim:
                raise SpecError(f"{name} support {size} infeasible for extent {dim}")
        if not self.term_overlap and self.term_support * self.rank > self.dims[0]:
            raise SpecError("disjoint term supports do not fit the term mode")
        if not self.location_overlap and self.location_support * self.rank > self.dims[1]:
            raise SpecError("disjoint location supports do not fit the location mode")
        if not self.time_overlap and self.time_support * self.rank > self.dims[2]:
            raise SpecError("disjoint time windows do not fit the time mode")
        if self.term_twist < 0:
            raise SpecError(f"term_twist must be >= 0, got {self.term_twist}")
        if self.term_twist > 0:
            if not self.shared_term_column:
                raise SpecError("term_twist requires shared_term_column")
            if self.term_support + self.rank > self.dims[0]:
                raise SpecError("no room for per-component exclusive terms")
        if self.noise < 0:
            raise SpecError(f"noise must be >= 0, got {self.noise}")
        if self.sparsity_target is not None and not 0 < self.sparsity_target <= 1:
            raise SpecError(f"sparsity_target must be in (0, 1], got {self.sparsity_target}")
        if self.count_scale <= 0:
            raise SpecError("count_scale must be positive")

    @classmethod
    def from_dict(cls, obj: dict) -> "PlantedSpec":
        known = {f for f in cls.__dataclass_fields__}  # type: ignore[attr-defined]
        unknown = set(obj) - known
        if unknown:
            raise SpecError(f"unknown spec fields: {sorted(unknown)}")
        try:
            return cls(**obj)
        except TypeError as err:
            raise SpecError(f"bad planted spec: {err}") from err

    @classmethod
    def from_json(cls, path: str | Path) -> "PlantedSpec":
        try:
            obj = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as err:
            raise SpecError(f"{path}: not valid JSON: {err}") from err
        if not isinstance(obj, dict):
            raise SpecError(f"{path}: spec must be a JSON object")
        if "dims" in obj:
            obj["dims"] = tuple(obj["dims"])
        return cls.from_dict(obj)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["dims"] = list(self.dims)
        return out


def recovery_spec(seed: int = 7) -> PlantedSpec:
    """The standard moderately-sparse recovery instance used by the benchmarks.

    Supports overlap across components; fully disjoint supports make the
    landscape needlessly multimodal for plain coordinate descent and test
    local-minimum luck rather than recovery.
    """
    return PlantedSpec(
        dims=(50, 20, 30),
        rank=5,
        term_support=8,
        location_support=4,
        time_support=10,
        term_overlap=True,
        location_overlap=True,
        noise=0.01,
        seed=seed,
    )


def adversarial_spec(seed: int = 7) -> PlantedSpec:
    """Two components sharing one term distribution, with swapped space/time couplings.

    Flattened matrices see essentially the same topic twice (the per-component
    twist terms are 20x fainter than the shared mass), so pairing the two
    NMF arms by term similarity runs on noise-level evidence; only the
    tensor keeps the (location, time) pairing identifiable.
    """
    return PlantedSpec(
        dims=(40, 12, 24),
        rank=2,
        term_support=10,
        location_support=4,
        time_support=8,
        time_overlap=False,
        shared_term_column=True,
        term_twist=0.2,
        noise=0.0,
        seed=seed,
        count_scale=100.0,
        emit_corpus=True,
    )


def _subset_supports(
    dim: int, size: int, rank: int, overlap: bool, rng: np.random.Generator
) -> list[np.ndarray]:
    if overlap:
        return [np.sort(rng.choice(dim, size=size, replace=False)) for _ in range(rank)]
    perm = rng.permutation(dim)
    return [np.sort(perm[r * size : (r + 1) * size]) for r in range(rank)]


def _window_supports(
    dim: int, size: int, rank: int, overlap: bool, rng: np.random.Generator
) -> list[np.ndarray]:
    out = []
    if overlap:
        for _ in range(rank):
            start = int(rng.integers(0, dim - size + 1))
            out.append(np.arange(start, start + size))
    else:
        stride = dim // rank
        for r in range(rank):
            slack = stride - size
            start = r * stride + int(rng.integers(0, slack + 1))
            out.append(np.arange(start, start + size))
    return out


def plant_model(spec: PlantedSpec) -> tuple[CPModel, SparseTensor3]:
    """Ground-truth model plus its sparse observation.

    The observation is the exact reconstruction on the support union; with
    ``spec.noise`` set, each nonzero is scaled by (1 + noise * z), z uniform
    on [-1, 1], clamped at zero.
    """
    rng = np.random.default_rng(spec.seed)
    m_dim, n_dim, o_dim = spec.dims
    rank = spec.rank

    term_supports = _subset_supports(m_dim, spec.term_support, rank, spec.term_overlap, rng)
    loc_supports = _subset_supports(n_dim, spec.location_support, rank, spec.location_overlap, rng)
    time_supports = _window_supports(o_dim, spec.time_support, rank, spec.time_overlap, rng)

    factors = [np.zeros((d, rank)) for d in spec.dims]
    if spec.shared_term_column:
        shared = term_supports[0]
        base = rng.uniform(0.5, 1.5, size=len(shared))
        for r in range(rank):
            factors[0][shared, r] = base
        if spec.term_twist > 0:
            # A faint exclusive term per component keeps the flattened
            # matrices full-rank without giving the topic mode any usable
            # coupling signal.
            complement = np.setdiff1d(np.arange(m_dim), shared)
            for r in range(rank):
                factors[0][complement[r], r] = spec.term_twist
    else:
        for r in range(rank):
            factors[0][term_supports[r], r] = rng.uniform(0.5, 1.5, size=spec.term_support)
    for mode, mode_supports in ((1, loc_supports), (2, time_supports)):
        for r in range(rank):
            factors[mode][mode_supports[r], r] = rng.uniform(
                0.5, 1.5, size=len(mode_supports[r])
            )

    model = CPModel(np.ones(rank), tuple(factors))

    chunks_coords = []
    chunks_values = []
    for r in range(rank):
        su = np.nonzero(factors[0][:, r])[0]
        sl = np.nonzero(factors[1][:, r])[0]
        st = np.nonzero(factors[2][:, r])[0]
        mm, nn, oo = np.meshgrid(su, sl, st, indexing="ij")
        coords = np.stack([mm.ravel(), nn.ravel(), oo.ravel()], axis=1)
        vals = np.einsum(
            "i,j,k->ijk", factors[0][su, r], factors[1][sl, r], factors[2][st, r]
        ).ravel()
        chunks_coords.append(coords)
        chunks_values.append(vals)
    coords = np.concatenate(chunks_coords, axis=0)
    values = np.concatenate(chunks_values, axis=0)
    observation = build_coo_arrays(coords, values, spec.dims)

    if spec.noise > 0 and observation.nnz:
        z = rng.uniform(-1.0, 1.0, size=observation.nnz)
        noisy = np.maximum(observation.values * (1.0 + spec.noise * z), 0.0)
        observation = build_coo_arrays(observation.coords, noisy, spec.dims)

    if spec.sparsity_target is not None:
        density = observation.nnz / float(m_dim * n_dim * o_dim)
        if density > spec.sparsity_target:
            raise SpecError(
                f"supports give density {density:.4f} > target {spec.sparsity_target}"
            )
    return model, observation


# ---------------------------------------------------------------------------
# Corpus synthesis


def _alpha_id(i: int) -> str:
    """0 -> 'a', 25 -> 'z', 26 -> 'aa': compact deterministic name suffixes."""
    i += 1
    out = ""
    while i:
        i, rem = divmod(i - 1, 26)
        out = chr(ord("a") + rem) + out
    return out


def term_string(idx: int) -> str:
    return "t" + _alpha_id(idx)


def location_name(idx: int) -> str:
    return "loc" + _alpha_id(idx)


def location_coords(idx: int) -> tuple[float, float]:
    # Spread synthetic places over a plausible lat/lon box, deterministically.
    lat = round(-44.0 + (idx * 7 % 34), 4)
    lon = round(112.0 + (idx * 13 % 42), 4)
    return lat, lon


@dataclass
class PlantedCorpus:
    """Everything :func:`plant_corpus` wrote, plus in-memory ground truth."""

    outdir: Path
    tweets_path: Path
    gazetteer_path: Path
    stopwords_path: Path
    keywords_path: Path
    expected_tensor: SparseTensor3 | None
    truth: CPModel | None
    term_strings: list[str]
    location_names: list[str]
    origin: date
    n_tweets: int
    total_tokens: int


def plant_corpus(spec: PlantedSpec, outdir: str | Path) -> PlantedCorpus:
    """Write a corpus whose ingestion reproduces a known integer tensor exactly.

    The planted observation is scaled by ``spec.count_scale`` and rounded to
    integer counts; each (location, day) slice becomes one tweet whose text
    carries the query keyword plus every term occurrence of that slice.
    Index relabelling follows the emission order, so the expected tensor's
    term/location indices coincide with the ingester's first-appearance
    assignment, and its time axis starts at the first occupied day. The
    keyword itself is emitted as the sole stopword, keeping it out of the
    vocabulary.
    """
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    model, observation = plant_model(spec)

    counts = np.rint(observation.values * spec.count_scale).astype(np.int64)
    keep = counts > 0
    coords = observation.coords[keep]
    counts = counts[keep]

    tweets_path = outdir / "tweets.jsonl"
    gazetteer_path = outdir / "gazetteer.csv"
    stopwords_path = outdir / "stopwords.txt"
    keywords_path = outdir / "keywords.txt"
    stopwords_path.write_text(CORPUS_KEYWORD + "\n", encoding="utf-8")
    keywords_path.write_text(CORPUS_KEYWORD + "\n", encoding="utf-8")

    if coords.shape[0] == 0:
        # Nothing survives quantization: an intentionally empty corpus.
        tweets_path.write_text("", encoding="utf-8")
        gazetteer_path.write_text("name,canonical_id,lat,lon\nnowhere,nowhere,0.0,0.0\n", encoding="utf-8")
        (outdir / "spec.json").write_text(
            json.dumps(spec.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
        return PlantedCorpus(
            outdir=outdir,
            tweets_path=tweets_path,
            gazetteer_path=gazetteer_path,
            stopwords_path=stopwords_path,
            keywords_path=keywords_path,
            expected_tensor=None,
            truth=None,
            term_strings=[],
            location_names=[],
            origin=CORPUS_ORIGIN,
            n_tweets=0,
            total_tokens=0,
        )

    # Emission order: chronological, then by planted location, then term.
    order = np.lexsort((coords[:, 0], coords[:, 1], coords[:, 2]))
    coords = coords[order]
    counts = counts[order]

    # First-appearance relabelling along the emission order; the time axis
    # shifts to the first occupied day (interior empty days survive).
    term_map: dict[int, int] = {}
    loc_map: dict[int, int] = {}
    for o_old, n_old, m_old in zip(coords[:, 2], coords[:, 1], coords[:, 0]):
        if int(n_old) not in loc_map:
            loc_map[int(n_old)] = len(loc_map)
        if int(m_old) not in term_map:
            term_map[int(m_old)] = len(term_map)
    o_min = int(coords[:, 2].min())
    o_max = int(coords[:, 2].max())
    new_dims = (len(term_map), len(loc_map), o_max - o_min + 1)

    new_coords = np.stack(
        [
            np.asarray([term_map[int(m)] for m in coords[:, 0]], dtype=np.int64),
            np.asarray([loc_map[int(n)] for n in coords[:, 1]], dtype=np.int64),
            coords[:, 2] - o_min,
        ],
        axis=1,
    )
    expected = build_coo_arrays(new_coords, counts.astype(np.float64), new_dims)

    old_terms = sorted(term_map, key=term_map.get)  # type: ignore[arg-type]
    old_locs = sorted(loc_map, key=loc_map.get)  # type: ignore[arg-type]
    truth = CPModel(
        model.weights.copy(),
        (
            model.term_factor[old_terms, :].copy(),
            model.location_factor[old_locs, :].copy(),
            model.time_factor[o_min : o_max + 1, :].copy(),
        ),
    )

    term_strings = [term_string(i) for i in range(new_dims[0])]
    loc_names = [location_name(i) for i in range(new_dims[1])]

    with open(gazetteer_path, "w", encoding="utf-8", newline="") as fh:
        fh.write("name,canonical_id,lat,lon\n")
        for i, name in enumerate(loc_names):
            lat, lon = location_coords(i)
            fh.write(f"{name},{name},{lat},{lon}\n")

    # One tweet per occupied (day, location) slice carrying all its tokens.
    n_tweets = 0
    total_tokens = 0
    with open(tweets_path, "w", encoding="utf-8") as fh:
        slice_breaks = np.nonzero(
            np.any(np.diff(np.stack([new_coords[:, 2], new_coords[:, 1]], axis=1), axis=0) != 0, axis=1)
        )[0]
        starts = np.concatenate(([0], slice_breaks + 1))
        ends = np.concatenate((slice_breaks + 1, [new_coords.shape[0]]))
        for start, end in zip(starts, ends):
            o_new = int(new_coords[start, 2])
            n_new = int(new_coords[start, 1])
            tokens = [CORPUS_KEYWORD]
            for row in range(start, end):
                word = term_strings[int(new_coords[row, 0])]
                reps = int(counts[row])
                tokens.extend([word] * reps)
                total_tokens += reps
            created = CORPUS_ORIGIN + timedelta(days=o_new)
            record = {
                "id": f"tw{n_tweets:06d}",
                "text": " ".join(tokens),
                "created_at": f"{created.isoformat()}T12:00:00+00:00",
                "user_location": loc_names[n_new],
            }
            fh.write(json.dumps(record, sort_keys=True) + "\n")
            n_tweets += 1

    expected_dir = outdir / "expected"
    expected_dir.mkdir(exist_ok=True)
    write_tensor(expected, expected_dir / "tensor.txt")
    # The expected tensor doubles as the instance tensor so bench can treat
    # corpus-backed and tensor-only planted directories identically.
    write_tensor(expected, outdir / "tensor.txt")
    (expected_dir / "terms.txt").write_text(
        "".join(t + "\n" for t in term_strings), encoding="utf-8"
    )
    with open(expected_dir / "locations.csv", "w", encoding="utf-8", newline="") as fh:
        fh.write("index,canonical,lat,lon\n")
        for i, name in enumerate(loc_names):
            lat, lon = location_coords(i)
            fh.write(f"{i},{name},{lat!r},{lon!r}\n")
    (expected_dir / "timeaxis.json").write_text(
        json.dumps(
            {
                "origin": CORPUS_ORIGIN.isoformat(),
                "bin_width_seconds": 86400,
                "bin_count": new_dims[2],
            },
            indent=2,
            sort_keys=True,
        )
        + "\n",
        encoding="utf-8",
    )
    write_model(truth, outdir / "truth_model", meta={"planted": True, "seed": spec.seed})
    (outdir / "spec.json").write_text(
        json.dumps(spec.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    return PlantedCorpus(
        outdir=outdir,
        tweets_path=tweets_path,
        gazetteer_path=gazetteer_path,
        stopwords_path=stopwords_path,
        keywords_path=keywords_path,
        expected_tensor=expected,
        truth=truth,
        term_strings=term_strings,
        location_names=loc_names,
        origin=CORPUS_ORIGIN,
        n_tweets=n_tweets,
        total_tokens=total_tokens,
    )


def plant_instance(spec: PlantedSpec, outdir: str | Path) -> tuple[CPModel, SparseTensor3]:
    """Write the tensor-level instance: tensor.txt plus truth_model/ and spec.json."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    model, observation = plant_model(spec)
    write_tensor(observation, outdir / "tensor.txt")
    write_model(model, outdir / "truth_model", meta={"planted": True, "seed": spec.seed})
    (outdir / "spec.json").write_text(
        json.dumps(spec.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    return model, observation
