import pytest

from utils.config_utils import get_settings


def report_rows():
    return [
        {"benchmark": "a", "config_id": "None2D_r0.739", "seed": 1, "wl": 20.0, "cpd_ps": 400.0},
        {"benchmark": "a", "config_id": "SB_p100_RepeatedInterval_subset_r0.739", "seed": 1, "wl": 15.0,
         "cpd_ps": 300.0},
        {"benchmark": "a", "config_id": "SB_p100_RepeatedInterval_subset_r0.739", "seed": 2, "wl": 15.0,
         "cpd_ps": 500.0, "status": "failed", "error": "UnroutableError: congestion"},
    ]


def test_validate_accepts_a_valid_document(client, make_arch_text):
    response = client.post("/arch/validate", json={"text": make_arch_text(layers=2, connection_type="SB")})

    assert response.status_code == 200
    body = response.json()
    assert body["valid"] is True
    assert body["violations"] == []
    assert len(body["spec_hash"]) == 64


def test_validate_lists_violations(client, make_arch_text):
    response = client.post("/arch/validate", json={"text": make_arch_text(layers=1, connection_type="CB")})

    assert response.status_code == 200
    assert response.json() == {"valid": False, "violations": ["vertical connectivity requires ≥2 layers"],
                               "spec_hash": None}


def test_validate_rejects_malformed_yaml(client):
    response = client.post("/arch/validate", json={"text": "grid: [width: 4\n"})

    assert response.status_code == 400
    assert "syntax error" in response.json()["detail"]


def test_census_of_a_single_site_fabric(client, make_arch_text):
    text = make_arch_text(layers=2, channel_width=2, connection_type="SB", sb_placement="CustomList",
                          vertical={"custom_sites": [[2, 2]]})

    response = client.post("/arch/census", json={"text": text})

    assert response.status_code == 200
    body = response.json()
    assert body["nodes"]["CHANZ"] == 8
    assert body["vertical_total"] == 4
    assert body["vertical_per_grid"] == pytest.approx(0.25)
    assert body["vertical_breakdown"] == {"pin_in": 0, "pin_out": 0, "sb": 4}


def test_census_rejects_invalid_document(client, make_arch_text):
    response = client.post("/arch/census", json={"text": make_arch_text(layers=1, connection_type="SB")})

    assert response.status_code == 400


def test_space_count(client):
    response = client.post("/space/count", json={"types": ["CB", "CBO", "SB", "Hybrid", "HybridO"]})

    assert response.status_code == 200
    assert response.json() == {"count": 1_729_440_302, "digits": 10}


def test_space_count_rejects_custom(client):
    response = client.post("/space/count", json={"types": ["Custom"]})

    assert response.status_code == 400


def test_space_count_rejects_bad_percentage(client):
    response = client.post("/space/count", json={"types": ["SB"], "percentages": [0, 101]})

    assert response.status_code == 422


def test_patterns_catalog(client):
    response = client.get("/space/patterns")

    assert response.status_code == 200
    patterns = response.json()
    assert patterns["revolving_offset"] == {"input": [0, 1, 2, 3], "output": [0, 1, 2, 3]}
    assert len(patterns) == 8


def test_summarize_endpoint(client):
    response = client.post("/reports/summarize", json={"rows": report_rows(), "baseline": "None2D_r0.739"})

    assert response.status_code == 200
    summary = {entry["config_id"]: entry for entry in response.json()}
    sb = summary["SB_p100_RepeatedInterval_subset_r0.739"]
    assert sb["rows"] == 1
    assert sb["wl_reduction"] == pytest.approx(25.0)
    assert sb["cpd_reduction"] == pytest.approx(25.0)


def test_summarize_endpoint_needs_the_baseline(client):
    response = client.post("/reports/summarize", json={"rows": report_rows(), "baseline": "CB_r0.739"})

    assert response.status_code == 400
    assert "baseline" in response.json()["detail"]


def test_distribution_endpoint(client):
    response = client.post("/reports/distribution", json={"rows": report_rows()})

    assert response.status_code == 200
    assert [entry["config_id"] for entry in response.json()] == ["None2D_r0.739",
                                                                  "SB_p100_RepeatedInterval_subset_r0.739"]


def test_settings_reject_invalid_jobs(monkeypatch):
    monkeypatch.setenv("FPGA3D_JOBS", "0")

    with pytest.raises(ValueError, match="FPGA3D"):
        get_settings()


def test_settings_read_the_environment(monkeypatch, tmp_path):
    monkeypatch.setenv("FPGA3D_OUTPUT_DIR", str(tmp_path))
    monkeypatch.setenv("FPGA3D_JOBS", "3")
    monkeypatch.setenv("FPGA3D_LOG_LEVEL", "debug")

    settings = get_settings()

    assert settings.output_dir == str(tmp_path)
    assert settings.jobs == 3
    assert settings.log_level == "DEBUG"
