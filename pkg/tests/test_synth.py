import json

import numpy as np
import pytest

from geotopics.errors import EmptyCorpusError, SpecError
from geotopics.ingest import IngestConfig, LocationIndex, build_corpus_tensor, load_wordlist
from geotopics.synth import (
    PlantedSpec,
    adversarial_spec,
    plant_corpus,
    plant_instance,
    plant_model,
    recovery_spec,
)
from geotopics.tensor import frobenius_sq, read_tensor, residual_sq


class TestPlantedSpec:
    def test_round_trips_through_json(self, tmp_path):
        spec = recovery_spec()
        p = tmp_path / "spec.json"
        p.write_text(json.dumps(spec.to_dict()))
        assert PlantedSpec.from_json(p) == spec

    @pytest.mark.parametrize(
        "patch",
        [
            {"rank": 0},
            {"dims": (0, 5, 5)},
            {"term_support": 100},
            {"noise": -0.1},
            {"sparsity_target": 2.0},
            {"count_scale": 0.0},
        ],
    )
    def test_invalid_fields(self, patch):
        base = recovery_spec().to_dict()
        base.update(patch)
        with pytest.raises(SpecError):
            PlantedSpec.from_dict(base)

    def test_disjoint_supports_must_fit(self):
        base = recovery_spec().to_dict()
        base.update({"term_overlap": False, "term_support": 20})  # 20*5 > 50
        with pytest.raises(SpecError, match="disjoint term supports"):
            PlantedSpec.from_dict(base)

    def test_unknown_field_rejected(self):
        base = recovery_spec().to_dict()
        base["typo_field"] = 1
        with pytest.raises(SpecError, match="unknown"):
            PlantedSpec.from_dict(base)

    def test_twist_requires_shared_column(self):
        base = recovery_spec().to_dict()
        base["term_twist"] = 0.1
        with pytest.raises(SpecError, match="shared_term_column"):
            PlantedSpec.from_dict(base)


class TestPlantModel:
    def test_noiseless_observation_is_exact(self):
        spec = PlantedSpec(
            dims=(20, 10, 15), rank=3, term_support=5, location_support=3,
            time_support=5, noise=0.0, seed=3,
        )
        truth, obs = plant_model(spec)
        assert residual_sq(obs, truth) <= 1e-12 * frobenius_sq(obs)

    def test_noise_bound(self):
        spec = recovery_spec()
        clean_spec = PlantedSpec(**{**spec.to_dict(), "noise": 0.0})
        truth, noisy = plant_model(spec)
        _, clean = plant_model(clean_spec)
        assert noisy.nnz == clean.nnz
        diff = np.linalg.norm(noisy.values - clean.values)
        assert diff <= spec.noise * np.linalg.norm(clean.values)

    def test_same_seed_identical(self):
        a_truth, a_obs = plant_model(recovery_spec())
        b_truth, b_obs = plant_model(recovery_spec())
        assert (a_obs.coords == b_obs.coords).all()
        assert (a_obs.values == b_obs.values).all()
        for fa, fb in zip(a_truth.factors, b_truth.factors):
            assert (fa == fb).all()

    def test_sparsity_target_enforced(self):
        spec = PlantedSpec(
            dims=(10, 10, 10), rank=2, term_support=8, location_support=8,
            time_support=8, term_overlap=True, location_overlap=True,
            sparsity_target=0.01, seed=0,
        )
        with pytest.raises(SpecError, match="density"):
            plant_model(spec)

    def test_shared_term_column_with_twist(self):
        spec = adversarial_spec()
        truth, _ = plant_model(spec)
        u = truth.term_factor
        shared = (u[:, 0] > spec.term_twist) | (u[:, 1] > spec.term_twist)
        assert (u[shared, 0] == u[shared, 1]).all()
        exclusive0 = (u[:, 0] == spec.term_twist).nonzero()[0]
        exclusive1 = (u[:, 1] == spec.term_twist).nonzero()[0]
        assert len(exclusive0) == 1 and len(exclusive1) == 1
        assert u[exclusive0, 1] == 0.0 and u[exclusive1, 0] == 0.0


class TestPlantCorpus:
    def _ingest(self, planted):
        gaz = LocationIndex.from_csv(planted.gazetteer_path)
        config = IngestConfig(
            keywords=load_wordlist(planted.keywords_path),
            stopwords=frozenset(load_wordlist(planted.stopwords_path)),
        )
        with open(planted.tweets_path, encoding="utf-8") as fh:
            return build_corpus_tensor(fh, gaz, config)

    def test_tiny_round_trip(self, tmp_path):
        spec = PlantedSpec(
            dims=(6, 3, 4), rank=1, term_support=2, location_support=1,
            time_support=2, noise=0.0, seed=5, count_scale=10.0,
        )
        planted = plant_corpus(spec, tmp_path / "tiny")
        result = self._ingest(planted)
        exp = planted.expected_tensor
        assert result.tensor.dims == exp.dims
        assert (result.tensor.coords == exp.coords).all()
        assert (result.tensor.values == exp.values).all()

    def test_round_trip_with_maps(self, tmp_path):
        planted = plant_corpus(adversarial_spec(), tmp_path / "adv")
        result = self._ingest(planted)
        exp = planted.expected_tensor
        assert result.tensor.dims == exp.dims
        assert (result.tensor.coords == exp.coords).all()
        assert (result.tensor.values == exp.values).all()
        assert result.vocabulary.terms == planted.term_strings
        assert [e.canonical for e in result.locations.assigned_entries()] == planted.location_names
        assert result.timeaxis.origin == planted.origin
        assert result.stats.retained_tokens == planted.total_tokens == result.tensor.mass()

    def test_instance_files_written(self, tmp_path):
        out = tmp_path / "inst"
        model, obs = plant_instance(recovery_spec(), out)
        assert (out / "tensor.txt").exists()
        back = read_tensor(out / "tensor.txt")
        assert (back.values == obs.values).all()
        from geotopics.solver import read_model

        truth, meta = read_model(out / "truth_model")
        assert meta["planted"] is True
        for fa, fb in zip(truth.factors, model.factors):
            assert (fa == fb).all()

    def test_empty_spec_surfaces_empty_corpus_error(self, tmp_path):
        # Quantization wipes every entry: ingestion must report the empty corpus.
        spec = PlantedSpec(
            dims=(4, 2, 3), rank=1, term_support=1, location_support=1,
            time_support=1, noise=0.0, seed=1, count_scale=1e-6,
        )
        planted = plant_corpus(spec, tmp_path / "empty")
        assert planted.expected_tensor is None
        assert planted.n_tweets == 0
        with pytest.raises(EmptyCorpusError):
            self._ingest(planted)

    def test_deterministic_files(self, tmp_path):
        p1 = plant_corpus(adversarial_spec(), tmp_path / "a")
        p2 = plant_corpus(adversarial_spec(), tmp_path / "b")
        assert p1.tweets_path.read_bytes() == p2.tweets_path.read_bytes()
        assert p1.gazetteer_path.read_bytes() == p2.gazetteer_path.read_bytes()
