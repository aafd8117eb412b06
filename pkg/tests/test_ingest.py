import json
from datetime import date, datetime, timedelta, timezone

import pytest

from geotopics.errors import EmptyCorpusError
from geotopics.ingest import (
    DEFAULT_KEYWORDS,
    IngestConfig,
    LocationIndex,
    TimeAxis,
    Tweet,
    bin_time,
    build_corpus_tensor,
    filter_keywords,
    load_wordlist,
    normalize_place,
    parse_tweet_line,
    read_locations_csv,
    read_terms,
    read_timeaxis,
    resolve_location,
    tokenize_normalize,
    write_corpus_artifacts,
)


class TestTokenize:
    def test_urls_mentions_digits_stripped(self):
        out = tokenize_normalize("Covid-19 cases RISING! https://t.co/x @who", set())
        assert out == ["covid", "cases", "rising"]

    def test_stopwords_dropped_case_insensitive(self):
        assert tokenize_normalize("The the THE", {"the"}) == []

    def test_hashtag_unified_duplicates_kept(self):
        assert tokenize_normalize("#lockdown lockdown", set()) == ["lockdown", "lockdown"]

    def test_short_tokens_dropped(self):
        assert tokenize_normalize("a an ok go", set()) == ["an", "ok", "go"]

    def test_unicode_letters_kept(self):
        assert tokenize_normalize("café open", set()) == ["café", "open"]


class TestFilterKeywords:
    def test_hyphen_variant_matches_raw_text(self):
        assert filter_keywords([], "COVID-19 update", DEFAULT_KEYWORDS)

    def test_irrelevant_text(self):
        assert not filter_keywords([], "nothing relevant here", DEFAULT_KEYWORDS)

    def test_coronaoutbreak(self):
        assert filter_keywords([], "coronaoutbreak latest", DEFAULT_KEYWORDS)

    def test_boundary_blocks_runons(self):
        assert not filter_keywords([], "covidiocy is a word", ("covid",))
        assert filter_keywords([], "covid, and more", ("covid",))

    def test_underscore_variant(self):
        assert filter_keywords([], "tracking covid_19 today", DEFAULT_KEYWORDS)


def _gazetteer():
    index = LocationIndex()
    index.add("Brisbane", "brisbane", -27.47, 153.03)
    index.add("bris", "brisbane", -27.47, 153.03)
    index.add("Melbourne", "melbourne", -37.81, 144.96)
    index.add("Gold Coast", "gold coast", -28.0, 153.43)
    return index


def _tweet(text, loc=None, ts="2020-03-05T10:00:00+00:00", tid="t1"):
    return Tweet(id=tid, text=text, created_at=datetime.fromisoformat(ts), user_location=loc)


class TestResolveLocation:
    def test_profile_direct_lookup(self):
        index = _gazetteer()
        idx = resolve_location(_tweet("something covid", loc="Brisbane, QLD"), index)
        assert idx == 0
        assert index.assigned_entries()[0].canonical == "brisbane"

    def test_text_scan_fallback(self):
        index = _gazetteer()
        idx = resolve_location(_tweet("stuck in melbourne airport"), index)
        assert index.assigned_entries()[idx].canonical == "melbourne"

    def test_no_hit_returns_none(self):
        index = _gazetteer()
        assert resolve_location(_tweet("covid test", loc="somewhere over the rainbow"), index) is None

    def test_two_word_window_beats_single(self):
        index = _gazetteer()
        idx = resolve_location(_tweet("enjoying gold coast sun"), index)
        assert index.assigned_entries()[idx].canonical == "gold coast"

    def test_longest_match_in_profile(self):
        index = _gazetteer()
        index.add("coast", "coast", 0.0, 0.0)
        idx = resolve_location(_tweet("covid", loc="Gold Coast"), index)
        assert index.assigned_entries()[idx].canonical == "gold coast"

    def test_unicode_profile_normalized(self):
        index = LocationIndex()
        index.add("São Paulo", "sao paulo", -23.55, -46.63)
        idx = resolve_location(_tweet("covid", loc="SAO PAULO!"), index)
        assert index.assigned_entries()[idx].canonical == "sao paulo"

    def test_normalize_place(self):
        assert normalize_place("Brisbane, QLD.") == "brisbane qld"
        assert normalize_place("São Paulo") == "sao paulo"


class TestBinTime:
    AXIS = TimeAxis(origin=date(2019, 11, 27), bin_width=timedelta(days=1), bin_count=133)

    def test_first_day(self):
        ts = datetime(2019, 11, 27, 23, 59, tzinfo=timezone.utc)
        assert bin_time(ts, self.AXIS) == 0

    def test_final_day_of_133(self):
        ts = datetime(2020, 4, 7, 0, 1, tzinfo=timezone.utc)
        assert bin_time(ts, self.AXIS) == 132

    def test_before_origin_absent(self):
        ts = datetime(2019, 11, 26, 23, 59, tzinfo=timezone.utc)
        assert bin_time(ts, self.AXIS) is None

    def test_beyond_range_absent(self):
        ts = datetime(2020, 4, 9, 0, 0, tzinfo=timezone.utc)
        assert bin_time(ts, self.AXIS) is None

    def test_week_bins(self):
        axis = TimeAxis(origin=date(2020, 3, 1), bin_width=timedelta(days=7), bin_count=4)
        assert bin_time(datetime(2020, 3, 14, 12, 0, tzinfo=timezone.utc), axis) == 1


class TestParseTweetLine:
    def test_good_line(self):
        tw = parse_tweet_line(
            '{"id": "1", "text": "hi covid", "created_at": "2020-03-01T00:00:00Z", '
            '"user_location": null, "extra": 1}'
        )
        assert tw.created_at.tzinfo is not None
        assert tw.user_location is None

    @pytest.mark.parametrize(
        "line",
        [
            "not json",
            '{"id": "1", "text": "", "created_at": "2020-03-01T00:00:00Z"}',
            '{"id": "1", "created_at": "2020-03-01T00:00:00Z"}',
            '{"id": "1", "text": "x", "created_at": "yesterday"}',
        ],
    )
    def test_bad_lines(self, line):
        with pytest.raises((ValueError, KeyError)):
            parse_tweet_line(line)


class TestBuildCorpus:
    def _config(self, **kw):
        defaults = dict(keywords=("covid",), stopwords=frozenset({"covid"}))
        defaults.update(kw)
        return IngestConfig(**defaults)

    def test_counting_semantics(self):
        tweets = [_tweet("covid covid cases", loc="Brisbane")]
        result = build_corpus_tensor(tweets, _gazetteer(), self._config(stopwords=frozenset()))
        vocab = result.vocabulary
        x = result.tensor
        # two tokens of "covid", one of "cases", all at (brisbane, bin 0)
        entries = {(int(m), int(n), int(o)): v for (m, n, o), v in zip(x.coords, x.values)}
        assert entries == {
            (vocab.index_of("covid"), 0, 0): 2.0,
            (vocab.index_of("cases"), 0, 0): 1.0,
        }
        assert result.stats.retained_tokens == 3

    def test_binary_mode(self):
        tweets = [_tweet("covid alpha alpha beta", loc="Brisbane")]
        result = build_corpus_tensor(
            tweets, _gazetteer(), self._config(count_mode="binary")
        )
        assert sorted(result.tensor.values.tolist()) == [1.0, 1.0]

    def test_drop_reasons_counted(self):
        tweets = [
            '{"bad json',
            _tweet("no keywords here"),
            _tweet("covid"),  # keyword only; all tokens stopworded away
            _tweet("covid somewhere nice", loc="atlantis"),
            _tweet("covid cases", loc="Brisbane"),
        ]
        result = build_corpus_tensor(tweets, _gazetteer(), self._config())
        stats = result.stats
        assert stats.read == 5
        assert stats.dropped_unreadable == 1
        assert stats.dropped_no_keyword == 1
        assert stats.dropped_no_tokens == 1
        assert stats.dropped_no_location == 1
        assert stats.kept == 1

    def test_out_of_range_with_fixed_axis(self):
        tweets = [
            _tweet("covid cases", loc="Brisbane", ts="2020-03-05T10:00:00+00:00"),
            _tweet("covid deaths", loc="Brisbane", ts="2020-04-05T10:00:00+00:00"),
        ]
        config = self._config(origin=date(2020, 3, 1), bin_count=10)
        result = build_corpus_tensor(tweets, _gazetteer(), config)
        assert result.stats.kept == 1
        assert result.stats.dropped_out_of_range == 1
        assert result.timeaxis.bin_count == 10

    def test_derived_axis_spans_accepted_days(self):
        tweets = [
            _tweet("covid aa", loc="Brisbane", ts="2020-03-03T01:00:00+00:00"),
            _tweet("covid bb", loc="Melbourne", ts="2020-03-07T23:00:00+00:00"),
        ]
        result = build_corpus_tensor(tweets, _gazetteer(), self._config())
        assert result.timeaxis.origin == date(2020, 3, 3)
        assert result.timeaxis.bin_count == 5

    def test_empty_corpus_raises(self):
        with pytest.raises(EmptyCorpusError):
            build_corpus_tensor([_tweet("irrelevant")], _gazetteer(), self._config())

    def test_conservation_and_coverage(self):
        tweets = [
            _tweet("covid alpha beta", loc="Brisbane"),
            _tweet("covid alpha", loc="Melbourne", ts="2020-03-06T10:00:00+00:00"),
            _tweet("covid gamma gamma gamma", loc="bris", ts="2020-03-07T10:00:00+00:00"),
        ]
        result = build_corpus_tensor(tweets, _gazetteer(), self._config())
        x = result.tensor
        assert x.mass() == result.stats.retained_tokens
        # every index map row appears in the tensor and vice versa
        assert set(x.coords[:, 0].tolist()) == set(range(len(result.vocabulary)))
        assert set(x.coords[:, 1].tolist()) == set(range(len(result.locations)))
        assert x.dims == (len(result.vocabulary), len(result.locations), result.timeaxis.bin_count)

    def test_first_appearance_index_order(self):
        tweets = [
            _tweet("covid zulu alpha", loc="Melbourne"),
            _tweet("covid alpha bravo", loc="Brisbane", ts="2020-03-06T10:00:00+00:00"),
        ]
        result = build_corpus_tensor(tweets, _gazetteer(), self._config())
        assert result.vocabulary.terms == ["zulu", "alpha", "bravo"]
        assert [e.canonical for e in result.locations.assigned_entries()] == [
            "melbourne",
            "brisbane",
        ]


class TestArtifacts:
    def test_write_and_read_back(self, tmp_path):
        tweets = [
            _tweet("covid alpha beta", loc="Brisbane"),
            _tweet("covid gamma", loc="Melbourne", ts="2020-03-06T10:00:00+00:00"),
        ]
        config = IngestConfig(keywords=("covid",), stopwords=frozenset({"covid"}))
        result = build_corpus_tensor(tweets, _gazetteer(), config)
        names = write_corpus_artifacts(result, tmp_path)
        assert set(names) == {"terms.txt", "locations.csv", "timeaxis.json", "stats.json"}
        assert read_terms(tmp_path / "terms.txt") == result.vocabulary.terms
        locs = read_locations_csv(tmp_path / "locations.csv")
        assert [e.canonical for e in locs] == ["brisbane", "melbourne"]
        assert locs[0].lat == -27.47
        axis = read_timeaxis(tmp_path / "timeaxis.json")
        assert axis == result.timeaxis
        stats = json.loads((tmp_path / "stats.json").read_text())
        assert stats["kept"] == 2

    def test_deterministic_bytes(self, tmp_path):
        tweets = [
            _tweet("covid alpha beta", loc="Brisbane"),
            _tweet("covid gamma", loc="Melbourne", ts="2020-03-06T10:00:00+00:00"),
        ]
        config = IngestConfig(keywords=("covid",), stopwords=frozenset({"covid"}))
        out1, out2 = tmp_path / "a", tmp_path / "b"
        for out in (out1, out2):
            result = build_corpus_tensor(list(tweets), _gazetteer(), config)
            write_corpus_artifacts(result, out)
        for name in ("terms.txt", "locations.csv", "timeaxis.json", "stats.json"):
            assert (out1 / name).read_bytes() == (out2 / name).read_bytes()


class TestWordlist:
    def test_load(self, tmp_path):
        p = tmp_path / "words.txt"
        p.write_text("# comment\nAlpha\n\nbeta\n")
        assert load_wordlist(p) == ("alpha", "beta")


class TestGazetteerValidation:
    def test_bad_coordinates(self):
        index = LocationIndex()
        with pytest.raises(ValueError, match="coordinates"):
            index.add("x", "x", 99.0, 0.0)

    def test_conflicting_canonical(self):
        index = LocationIndex()
        index.add("a", "x", 1.0, 2.0)
        with pytest.raises(ValueError, match="conflicting"):
            index.add("b", "x", 3.0, 4.0)

    def test_csv_requires_columns(self, tmp_path):
        p = tmp_path / "g.csv"
        p.write_text("name,lat,lon\nx,1,2\n")
        with pytest.raises(ValueError, match="columns"):
            LocationIndex.from_csv(p)
