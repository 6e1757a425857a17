import pytest
from fastapi.testclient import TestClient

from tmjcds.evaluate import StrategySpec, run_experiment
from tmjcds.forest import ForestHyperparams
from tmjcds.model import TrainedModel
from tmjcds.service import create_app

HP = ForestHyperparams(n_trees=15, max_depth=5, seed=3)

REQUEST = {
    "values": {
        "krepitationleft": 1, "krepitationright": 1, "painmoveleft": 2,
        "painmoveright": 1, "openingmm": 34.0, "profile": "concave",
        "drug": "etanercept", "lowerface": 2,
    },
    "gender": "female",
    "age_years": 9.0,
}


@pytest.fixture(scope="module")
def model(medium_signal_cohort):
    strategy = StrategySpec("iid")
    res = run_experiment(medium_signal_cohort, strategy, "expert", HP,
                         split_seed=5, shap_max_rows=5)
    return TrainedModel.from_experiment(res, strategy, "expert",
                                        medium_signal_cohort.schema)


@pytest.fixture(scope="module")
def client(model):
    return TestClient(create_app(model=model))


class TestSchemaEndpoint:
    def test_expert_model_lists_26_raw_features(self, client):
        body = client.get("/schema").json()
        assert len(body["raw_features"]) == 26
        kinds = {f["kind"] for f in body["raw_features"]}
        assert kinds <= {"binary", "ordinal", "nominal", "continuous"}

    def test_no_lag_blocks_for_iid(self, client):
        assert client.get("/schema").json()["previous_exams_required"] == 0

    def test_503_without_model(self):
        bare = TestClient(create_app())
        assert bare.get("/schema").status_code == 503
        assert bare.get("/model/info").status_code == 503
        assert bare.post("/predict", json=REQUEST).status_code == 503


class TestPredict:
    def test_prediction_response_shape(self, client):
        r = client.post("/predict", json=REQUEST)
        assert r.status_code == 200
        body = r.json()
        assert set(body["probabilities"]) == {"TMJ0", "TMJ1"}
        assert body["point_label"] in ("TMJ0", "TMJ1")
        assert body["prediction_set"] and set(body["prediction_set"]) <= {"TMJ0", "TMJ1"}
        assert body["alpha"] == 0.1
        assert len(body["attributions"]) == body["model_info"]["d"]
        total = body["base_value"] + sum(a["shap_value"] for a in body["attributions"])
        assert abs(total - body["probabilities"]["TMJ1"]) <= 1e-9

    def test_identical_requests_identical_bodies(self, client):
        a = client.post("/predict", json=REQUEST).json()
        b = client.post("/predict", json=REQUEST).json()
        assert a == b

    def test_malformed_category_400_names_feature(self, client):
        bad = {**REQUEST, "values": {**REQUEST["values"], "profile": "wavy"}}
        r = client.post("/predict", json=bad)
        assert r.status_code == 400
        assert any(e["feature"] == "profile" for e in r.json()["errors"])

    def test_unknown_feature_400(self, client):
        bad = {**REQUEST, "values": {**REQUEST["values"], "bogus": 1}}
        r = client.post("/predict", json=bad)
        assert r.status_code == 400
        assert any("bogus" in e["feature"] for e in r.json()["errors"])

    def test_set_contains_argmax(self, client):
        body = client.post("/predict", json=REQUEST).json()
        assert body["point_label"] in body["prediction_set"]

    def test_missing_lag_block_422(self, medium_signal_cohort):
        strategy = StrategySpec("lagged", k=1)
        res = run_experiment(medium_signal_cohort, strategy, "expert", HP,
                             split_seed=5, shap_max_rows=5)
        lag_model = TrainedModel.from_experiment(res, strategy, "expert",
                                                 medium_signal_cohort.schema)
        lag_client = TestClient(create_app(model=lag_model))
        r = lag_client.post("/predict", json=REQUEST)
        assert r.status_code == 422
        ok = lag_client.post("/predict", json={
            **REQUEST,
            "previous_exams": [{"values": REQUEST["values"], "age_years": 8.0}],
        })
        assert ok.status_code == 200
        assert lag_client.get("/schema").json()["previous_exams_required"] == 1


class TestWhatIf:
    def test_empty_overrides_baseline_only(self, client):
        r = client.post("/whatif", json={**REQUEST, "overrides": []})
        assert r.status_code == 200
        results = r.json()["results"]
        assert len(results) == 1
        assert results[0]["override"] is None

    def test_three_overrides_order_preserved(self, client):
        overrides = [
            {"krepitationleft": 0, "krepitationright": 0},
            {"painmoveleft": 0, "painmoveright": 0},
            {"openingmm": 48.0},
        ]
        r = client.post("/whatif", json={**REQUEST, "overrides": overrides})
        results = r.json()["results"]
        assert len(results) == 4
        assert [res["override"] for res in results[1:]] == overrides

    def test_per_item_errors_do_not_fail_batch(self, client):
        overrides = [{"profile": "wavy"}, {"openingmm": 50.0}]
        r = client.post("/whatif", json={**REQUEST, "overrides": overrides})
        assert r.status_code == 200
        results = r.json()["results"]
        assert "error" in results[1]
        assert "response" in results[2]

    def test_baseline_first_and_independent(self, client):
        r1 = client.post("/whatif", json={**REQUEST, "overrides": [{"openingmm": 50.0}]})
        r2 = client.post("/predict", json=REQUEST)
        assert r1.json()["results"][0]["response"] == r2.json()


class TestModelInfoAndReload:
    def test_info_fields(self, client, model):
        info = client.get("/model/info").json()
        assert info["strategy"] == "iid"
        assert info["alpha"] == 0.1
        assert info["schema_hash"] == model.schema_hash
        assert info["version"] == model.tool_version
        assert "train_report_digest" in info

    def test_reload_swaps_model(self, medium_signal_cohort, tmp_path, model):
        strategy = StrategySpec("temporal", segment=0)
        res = run_experiment(medium_signal_cohort, strategy, "expert", HP,
                             split_seed=5, shap_max_rows=5)
        other = TrainedModel.from_experiment(res, strategy, "expert",
                                             medium_signal_cohort.schema)
        path_a = tmp_path / "a.json"
        path_b = tmp_path / "b.json"
        model.save(str(path_a))
        other.save(str(path_b))
        client = TestClient(create_app(model_path=str(path_a)))
        assert client.get("/model/info").json()["strategy"] == "iid"
        r = client.post("/admin/reload", json={"model_path": str(path_b)})
        assert r.status_code == 200
        assert client.get("/model/info").json()["strategy"] == "temporal:0"

    def test_reload_missing_file_400(self, model, tmp_path):
        path = tmp_path / "m.json"
        model.save(str(path))
        client = TestClient(create_app(model_path=str(path)))
        r = client.post("/admin/reload", json={"model_path": str(tmp_path / "nope.json")})
        assert r.status_code == 400

    def test_alpha_override(self, model):
        client = TestClient(create_app(model=model, alpha_override=0.2))
        assert client.get("/model/info").json()["alpha"] == 0.2
