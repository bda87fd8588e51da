from fastapi.testclient import TestClient

from varfield.main import app

client = TestClient(app)

PARTICLE = """
dim 1
field y
lagrangian = 1/2 * d1(y)^2
vecfield shift = { y: 1 }
vecfield shear = { y: x }
"""


def test_healthcheck():
    response = client.get("/healthz")
    assert response.status_code == 200
    assert response.json()["status"] == "ok"


def test_root_lists_operations():
    payload = client.get("/").json()
    assert payload["name"] == "varfield"
    assert "elform" in payload["operations"]


def test_derive_euler_lagrange_plain():
    response = client.post("/api/derive", json={"model": PARTICLE, "operation": "elform", "format": "plain"})
    assert response.status_code == 200
    assert response.json()["results"] == ["-y_{1,1} ω∧dx"]


def test_derive_pair_current_json():
    body = {"model": PARTICLE, "operation": "paircurrent", "fields": ["shift", "shear"]}
    payload = client.post("/api/derive", json=body).json()
    assert payload["schema"] == "varfield-json/1"
    assert payload["results"][0]["kind"] == "form"


def test_derive_rejects_missing_fields():
    response = client.post("/api/derive", json={"model": PARTICLE, "operation": "noether"})
    assert response.status_code == 400


def test_derive_reports_parse_errors():
    response = client.post("/api/derive", json={"model": "dim 1\nfield y\n", "operation": "elform"})
    assert response.status_code == 400
    assert response.json()["detail"] == "missing 'lagrangian' statement"


def test_ym_demo_rejects_out_of_range_dimension():
    assert client.get("/api/ym-demo", params={"dim": 7}).status_code == 422
