import json
from datetime import date, timedelta

import numpy as np
import pytest

from conftest import random_model
from geotopics.errors import ShapeError
from geotopics.ingest import TimeAxis
from geotopics.nmf import flatten_location, flatten_time, nmf_factorize
from geotopics.patterns import (
    association_loss_report,
    build_reports,
    component_report,
    factor_match_score,
    normalize_components,
    top_terms,
    write_report_json,
    write_topics_csv,
)
from geotopics.solver import SolverConfig, factorize
from geotopics.synth import adversarial_spec, plant_model
from geotopics.tensor import CPModel, reconstruct_entry


def _simple_model():
    u = np.array([[2.0], [2.0]])
    l = np.array([[1.0], [0.0]])
    t = np.array([[3.0], [1.0]])
    return CPModel(np.ones(1), (u, l, t))


class TestNormalize:
    def test_hand_example(self):
        norm = normalize_components(_simple_model())
        assert norm.term_factor[:, 0].tolist() == [0.5, 0.5]
        assert norm.location_factor[:, 0].tolist() == [1.0, 0.0]
        assert norm.time_factor[:, 0].tolist() == [0.75, 0.25]
        assert norm.weights[0] == 16.0

    def test_idempotent_on_normalized_model(self):
        norm = normalize_components(_simple_model())
        again = normalize_components(norm)
        assert (again.weights == norm.weights).all()
        for a, b in zip(again.factors, norm.factors):
            assert (a == b).all()

    def test_zero_column_left_zero_with_zero_weight(self):
        model = CPModel(
            np.ones(2),
            (
                np.array([[1.0, 0.0], [1.0, 0.0]]),
                np.array([[1.0, 0.0]]),
                np.array([[1.0, 0.0]]),
            ),
        )
        norm = normalize_components(model)
        assert norm.weights[1] == 0.0
        assert not norm.term_factor[:, 1].any()

    def test_reconstruction_preserved(self, rng):
        model = random_model(rng, (4, 3, 5), 3, unit_weights=False)
        norm = normalize_components(model)
        for m in range(4):
            for n in range(3):
                for o in range(5):
                    a = reconstruct_entry(model, m, n, o)
                    b = reconstruct_entry(norm, m, n, o)
                    assert b == pytest.approx(a, rel=1e-12, abs=1e-15)


class TestTopTerms:
    def test_ranked_terms(self):
        u = np.array([[0.4], [0.3], [0.2], [0.1]])
        model = CPModel(np.ones(1), (u, np.ones((1, 1)), np.ones((1, 1))))
        vocab = ["help", "need", "govern", "school"]
        ranked = top_terms(model, 0, 3, vocab)
        assert [t for t, _ in ranked] == ["help", "need", "govern"]

    def test_zero_column_lexicographic(self):
        u = np.zeros((3, 1))
        model = CPModel(np.ones(1), (u, np.ones((1, 1)), np.ones((1, 1))))
        ranked = top_terms(model, 0, 3, ["pear", "apple", "mango"])
        assert [t for t, _ in ranked] == ["apple", "mango", "pear"]
        assert all(w == 0.0 for _, w in ranked)

    def test_tie_broken_lexicographically(self):
        u = np.array([[0.5], [0.5], [0.1]])
        model = CPModel(np.ones(1), (u, np.ones((1, 1)), np.ones((1, 1))))
        ranked = top_terms(model, 0, 2, ["zebra", "ant", "cat"])
        assert [t for t, _ in ranked] == ["ant", "zebra"]

    def test_component_out_of_range(self):
        model = _simple_model()
        with pytest.raises(IndexError):
            top_terms(model, 1, 2, ["a", "b"])

    def test_invariant_to_vocabulary_insertion_order(self, rng):
        # Permuting term indices (and the factor rows with them) must not
        # change the ranked term strings.
        model = random_model(rng, (6, 2, 2), 2)
        vocab = ["fox", "crow", "owl", "hen", "wren", "dove"]
        ranked = top_terms(model, 0, 4, vocab)
        perm = rng.permutation(6)
        permuted_model = CPModel(
            model.weights.copy(),
            (model.factors[0][perm].copy(), model.factors[1].copy(), model.factors[2].copy()),
        )
        permuted_vocab = [vocab[i] for i in perm]
        assert top_terms(permuted_model, 0, 4, permuted_vocab) == ranked


class TestComponentReport:
    def _axis(self, bins):
        return TimeAxis(origin=date(2020, 3, 1), bin_width=timedelta(days=1), bin_count=bins)

    def test_planted_support_localized(self):
        # Component mass confined to one location and a time window shows up
        # exactly there in the report.
        u = np.array([[1.0], [0.0], [0.0]])
        l = np.array([[0.0], [1.0], [0.0]])
        t = np.array([[0.0], [0.5], [0.5], [0.0]])
        model = CPModel(np.ones(1), (u, l, t))
        locations = [("brisbane", -27.5, 153.0), ("sydney", -33.9, 151.2), ("perth", -32.0, 115.9)]
        rep = component_report(model, 0, ["alpha", "beta", "gamma"], locations, self._axis(4), k=2)
        spatial_weights = {name: w for name, _, _, w in rep.spatial}
        assert max(spatial_weights, key=spatial_weights.get) == "sydney"
        support = [d for d, w in rep.temporal if w > 0]
        assert support == [date(2020, 3, 2), date(2020, 3, 3)]

    def test_r1_model_verbatim(self):
        model = normalize_components(_simple_model())
        rep = component_report(
            model, 0, ["aa", "bb"], [("x", 0.0, 0.0), ("y", 1.0, 1.0)], self._axis(2), k=2
        )
        assert rep.weight == 16.0
        assert [w for _, w in rep.temporal] == [0.75, 0.25]
        assert [w for _, _, _, w in rep.spatial] == [1.0, 0.0]
        assert not rep.degenerate

    def test_out_of_range_component(self):
        model = _simple_model()
        with pytest.raises(IndexError):
            component_report(model, 1, ["a", "b"], [("x", 0.0, 0.0)], self._axis(2))

    def test_index_map_mismatch(self):
        model = _simple_model()
        with pytest.raises(ShapeError):
            component_report(model, 0, ["only-one"], [("x", 0.0, 0.0)], self._axis(2))

    def test_degenerate_flag_and_exports(self, tmp_path):
        model = CPModel(
            np.ones(2),
            (
                np.array([[1.0, 0.0], [1.0, 0.0]]),
                np.array([[1.0, 0.0]]),
                np.array([[1.0, 0.0], [0.0, 0.0]]),
            ),
        )
        reports = build_reports(model, ["aa", "bb"], [("x", 1.0, 2.0)], self._axis(2), k=2)
        assert not reports[0].degenerate
        assert reports[1].degenerate
        write_report_json(reports, tmp_path / "report.json")
        write_topics_csv(reports, tmp_path / "topics.csv")
        payload = json.loads((tmp_path / "report.json").read_text())
        assert payload[1]["degenerate"] is True
        assert payload[0]["temporal"][0]["date"] == "2020-03-01"
        lines = (tmp_path / "topics.csv").read_text().splitlines()
        assert lines[0] == "component_id,rank,term,weight"
        assert len(lines) == 5


class TestFactorMatchScore:
    def test_identical_models(self, rng):
        a = random_model(rng, (5, 4, 3), 3)
        assert factor_match_score(a, a) == pytest.approx(1.0, abs=1e-12)

    def test_permuted_rescaled_copy(self, rng):
        a = random_model(rng, (5, 4, 3), 3, unit_weights=False)
        perm = [2, 0, 1]
        factors = tuple(f[:, perm].copy() for f in a.factors)
        factors[0][:, 0] *= 5.0
        factors[1][:, 2] *= 0.25
        b = CPModel(a.weights[perm].copy(), factors)
        assert factor_match_score(a, b) == pytest.approx(1.0, abs=1e-12)

    def test_symmetry(self, rng):
        a = random_model(rng, (4, 4, 4), 2)
        b = random_model(rng, (4, 4, 4), 2)
        assert factor_match_score(a, b) == pytest.approx(factor_match_score(b, a), abs=1e-12)

    def test_independent_models_separate(self):
        # Independent draws never look like recovery; bound derived from a
        # 100-seed sweep whose observed max was: see test body.
        scores = []
        for seed in range(100):
            r = np.random.default_rng(seed)
            a = random_model(r, (50, 20, 30), 5)
            b = random_model(r, (50, 20, 30), 5)
            scores.append(factor_match_score(a, b))
        assert max(scores) < 0.6

    def test_shape_mismatch(self, rng):
        a = random_model(rng, (4, 4, 4), 2)
        b = random_model(rng, (4, 4, 3), 2)
        with pytest.raises(ShapeError):
            factor_match_score(a, b)

    def test_zero_column_contributes_zero(self):
        a = CPModel(np.ones(1), (np.ones((2, 1)), np.ones((2, 1)), np.ones((2, 1))))
        b = CPModel(np.ones(1), (np.zeros((2, 1)), np.ones((2, 1)), np.ones((2, 1))))
        assert factor_match_score(a, b) == 0.0


class TestAssociationLoss:
    def _fit_arms(self, obs, rank, seed, iters=1000, tol=1e-10):
        cfg = SolverConfig(rank=rank, seed=seed, max_iters=iters, rel_tol=tol)
        ntf, _ = factorize(obs, cfg)
        nmf_t, _ = nmf_factorize(flatten_time(obs), cfg)
        nmf_l, _ = nmf_factorize(flatten_location(obs), cfg)
        return ntf, nmf_t, nmf_l

    def test_adversarial_instance(self):
        truth, obs = plant_model(adversarial_spec())
        ntf, nmf_t, nmf_l = self._fit_arms(obs, 2, 7)
        report = association_loss_report(ntf, nmf_t, nmf_l, truth)
        assert report.ntf_fms >= 0.95
        assert report.ntf_all_match
        assert report.nmf_mismatch_count >= 1

    def test_disjoint_everything_both_correct(self):
        from geotopics.synth import PlantedSpec

        spec = PlantedSpec(
            dims=(40, 10, 30), rank=2, term_support=8, location_support=3,
            time_support=8, time_overlap=False, noise=0.0, seed=31,
        )
        truth, obs = plant_model(spec)
        ntf, nmf_t, nmf_l = self._fit_arms(obs, 2, 31)
        report = association_loss_report(ntf, nmf_t, nmf_l, truth)
        assert report.ntf_all_match
        assert report.nmf_mismatch_count == 0

    def test_rank_mismatch_rejected(self, rng):
        truth, obs = plant_model(adversarial_spec())
        ntf, nmf_t, nmf_l = self._fit_arms(obs, 2, 7, iters=5, tol=0.0)
        bad = random_model(rng, truth.dims, 3)
        with pytest.raises(ShapeError):
            association_loss_report(ntf, nmf_t, nmf_l, bad)
