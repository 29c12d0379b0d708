import base64
from concurrent.futures import ThreadPoolExecutor

import jsonschema
import numpy as np
import pytest
from fastapi.testclient import TestClient

from scenefill import pngio
from scenefill.dataset import sample_sparse
from scenefill.labelmaps import SparseLabelmap
from scenefill.service import (
    COMPLETE_RESPONSE_SCHEMA,
    ERROR_SCHEMA,
    RESAMPLE_RESPONSE_SCHEMA,
    TAXONOMY_SCHEMA,
    create_app,
)
from scenefill.toyworld import generate_toy_world


@pytest.fixture(scope="module")
def client(bundle):
    return TestClient(create_app(bundle))


@pytest.fixture()
def sparse_b64(taxonomy, toy_config):
    dense, inst = generate_toy_world(toy_config, taxonomy, 12)
    sparse = sample_sparse(dense, inst, taxonomy, 0.3, 4)
    return pngio.to_b64(pngio.sparse_to_png_bytes(sparse, taxonomy))


def test_taxonomy_endpoint(client, taxonomy):
    response = client.get("/taxonomy")
    assert response.status_code == 200
    jsonschema.validate(response.json(), TAXONOMY_SCHEMA)
    assert response.json() == taxonomy.to_dict()


def test_complete_endpoint_happy_path(client, sparse_b64):
    response = client.post(
        "/complete", json={"sparse_png_b64": sparse_b64, "seed": 3, "return_image": True}
    )
    assert response.status_code == 200
    body = response.json()
    jsonschema.validate(body, COMPLETE_RESPONSE_SCHEMA)
    dense = pngio.read_dense_png(pngio.from_b64(body["dense_png_b64"]))
    assert dense.shape == (64, 64)


def test_complete_without_image_omits_key(client, sparse_b64):
    body = client.post("/complete", json={"sparse_png_b64": sparse_b64}).json()
    jsonschema.validate(body, COMPLETE_RESPONSE_SCHEMA)
    assert "image_png_b64" not in body


def test_complete_deterministic_per_seed(client, sparse_b64):
    payload = {"sparse_png_b64": sparse_b64, "seed": 7}
    a = client.post("/complete", json=payload).json()
    b = client.post("/complete", json=payload).json()
    assert a == b
    c = client.post("/complete", json={"sparse_png_b64": sparse_b64, "seed": 8}).json()
    assert c["dense_png_b64"] != a["dense_png_b64"]


def test_schema_valid_on_randomized_requests(client, taxonomy, toy_config):
    rng = np.random.default_rng(0)
    for trial in range(100):
        dense, inst = generate_toy_world(toy_config, taxonomy, int(rng.integers(0, 10_000)))
        sparse = sample_sparse(dense, inst, taxonomy, float(rng.uniform(0.1, 1.0)), trial)
        payload = {
            "sparse_png_b64": pngio.to_b64(pngio.sparse_to_png_bytes(sparse, taxonomy)),
            "seed": int(rng.integers(0, 2**31)),
            "return_image": bool(rng.random() < 0.3),
        }
        response = client.post("/complete", json=payload)
        assert response.status_code == 200
        jsonschema.validate(response.json(), COMPLETE_RESPONSE_SCHEMA)


def test_concurrent_requests_match_sequential(client, taxonomy, toy_config):
    payloads = []
    for seed in range(6):
        dense, inst = generate_toy_world(toy_config, taxonomy, 40 + seed)
        sparse = sample_sparse(dense, inst, taxonomy, 0.3, seed)
        payloads.append(
            {"sparse_png_b64": pngio.to_b64(pngio.sparse_to_png_bytes(sparse, taxonomy)),
             "seed": seed}
        )
    sequential = [client.post("/complete", json=p).json() for p in payloads]
    with ThreadPoolExecutor(max_workers=6) as pool:
        concurrent = list(pool.map(lambda p: client.post("/complete", json=p).json(), payloads))
    assert concurrent == sequential


def test_resample_endpoint(client, taxonomy, toy_config):
    dense, inst = generate_toy_world(toy_config, taxonomy, 77)
    body = {
        "dense_png_b64": pngio.to_b64(pngio.dense_to_png_bytes(dense)),
        "instance_png_b64": pngio.to_b64(pngio.instance_to_png_bytes(inst)),
        "fraction": 0.3,
        "k": 3,
        "seed": 5,
    }
    response = client.post("/resample", json=body)
    assert response.status_code == 200
    variants = response.json()
    jsonschema.validate(variants, RESAMPLE_RESPONSE_SCHEMA)
    assert len(variants) == 3
    assert len({v["dense_png_b64"] for v in variants}) == 3


def test_error_format_bad_base64(client):
    response = client.post("/complete", json={"sparse_png_b64": "@@@"})
    assert response.status_code == 400
    jsonschema.validate(response.json(), ERROR_SCHEMA)
    assert response.json()["code"] == "invalid_input"


def test_error_format_missing_field(client):
    response = client.post("/complete", json={})
    assert response.status_code == 400
    jsonschema.validate(response.json(), ERROR_SCHEMA)
    assert response.json()["code"] == "invalid_request"


def test_error_format_stuff_in_sparse(client, taxonomy):
    bad = SparseLabelmap(np.full((64, 64), taxonomy.stuff_ids[0]))
    payload = pngio.to_b64(pngio.sparse_to_png_bytes(bad, taxonomy))
    response = client.post("/complete", json={"sparse_png_b64": payload})
    assert response.status_code == 400
    assert "non-thing" in response.json()["message"]


def test_error_format_not_a_png(client):
    payload = base64.b64encode(b"hello world").decode()
    response = client.post("/complete", json={"sparse_png_b64": payload})
    assert response.status_code == 400
    jsonschema.validate(response.json(), ERROR_SCHEMA)
