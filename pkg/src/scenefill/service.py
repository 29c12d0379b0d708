"""HTTP completion service.

Inference only: checkpoints are loaded once at startup and shared read-only
across requests; per-request randomness comes from the request seed, so
concurrent calls are independent.

Endpoints:

- ``GET /taxonomy`` -> the taxonomy JSON document;
- ``POST /complete`` ``{sparse_png_b64, seed?, return_image}`` ->
  ``{dense_png_b64, boundary_png_b64, image_png_b64?}``;
- ``POST /resample`` ``{dense_png_b64, instance_png_b64, fraction, k, seed?,
  return_image?}`` -> list of variants, each
  ``{sparse_png_b64, dense_png_b64, boundary_png_b64, image_png_b64?}``.

Errors are ``{code, message}`` with a 4xx/5xx status.
"""

from __future__ import annotations

from typing import Optional

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from . import pngio
from .errors import CheckpointError, InvalidInputError, RenderError, SceneFillError
from .pipeline import CheckpointBundle, CompletionResult, complete, load_bundle, resample

_B64_PNG = {"type": "string", "contentEncoding": "base64"}

COMPLETE_RESPONSE_SCHEMA = {
    "type": "object",
    "properties": {
        "dense_png_b64": _B64_PNG,
        "boundary_png_b64": _B64_PNG,
        "image_png_b64": _B64_PNG,
    },
    "required": ["dense_png_b64", "boundary_png_b64"],
    "additionalProperties": False,
}

VARIANT_SCHEMA = {
    "type": "object",
    "properties": {
        "sparse_png_b64": _B64_PNG,
        "dense_png_b64": _B64_PNG,
        "boundary_png_b64": _B64_PNG,
        "image_png_b64": _B64_PNG,
    },
    "required": ["sparse_png_b64", "dense_png_b64", "boundary_png_b64"],
    "additionalProperties": False,
}

RESAMPLE_RESPONSE_SCHEMA = {"type": "array", "items": VARIANT_SCHEMA}

ERROR_SCHEMA = {
    "type": "object",
    "properties": {"code": {"type": "string"}, "message": {"type": "string"}},
    "required": ["code", "message"],
    "additionalProperties": False,
}

TAXONOMY_SCHEMA = {
    "type": "object",
    "properties": {
        "classes": {
            "type": "array",
            "items": {
                "type": "object",
                "properties": {
                    "id": {"type": "integer"},
                    "name": {"type": "string"},
                    "kind": {"enum": ["stuff", "thing"]},
                    "color": {
                        "type": "array",
                        "items": {"type": "integer", "minimum": 0, "maximum": 255},
                        "minItems": 3,
                        "maxItems": 3,
                    },
                },
                "required": ["id", "name", "kind", "color"],
            },
        },
        "unlabeled_id": {"type": "integer"},
    },
    "required": ["classes", "unlabeled_id"],
}


class CompleteRequest(BaseModel):
    sparse_png_b64: str
    seed: Optional[int] = None
    return_image: bool = False


class ResampleRequest(BaseModel):
    dense_png_b64: str
    instance_png_b64: str
    fraction: float = 0.3
    k: int = 1
    seed: Optional[int] = None
    return_image: bool = True


def _completion_payload(result: CompletionResult, taxonomy, include_sparse: bool) -> dict:
    payload = {}
    if include_sparse:
        payload["sparse_png_b64"] = pngio.to_b64(pngio.sparse_to_png_bytes(result.sparse, taxonomy))
    payload["dense_png_b64"] = pngio.to_b64(pngio.dense_to_png_bytes(result.dense))
    payload["boundary_png_b64"] = pngio.to_b64(pngio.boundary_to_png_bytes(result.boundary))
    if result.image is not None:
        payload["image_png_b64"] = pngio.to_b64(pngio.image_to_png_bytes(result.image))
    return payload


def create_app(bundle: CheckpointBundle, backend: str = "palette") -> FastAPI:
    app = FastAPI(title="scenefill", version="0.1.0")
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
    )

    @app.exception_handler(InvalidInputError)
    async def _invalid_input(request: Request, exc: InvalidInputError):
        return JSONResponse(status_code=400, content={"code": "invalid_input", "message": str(exc)})

    @app.exception_handler(RequestValidationError)
    async def _invalid_request(request: Request, exc: RequestValidationError):
        return JSONResponse(status_code=400, content={"code": "invalid_request", "message": str(exc)})

    @app.exception_handler(CheckpointError)
    async def _checkpoint_error(request: Request, exc: CheckpointError):
        return JSONResponse(status_code=503, content={"code": "checkpoint_error", "message": str(exc)})

    @app.exception_handler(RenderError)
    async def _render_error(request: Request, exc: RenderError):
        return JSONResponse(status_code=500, content={"code": "render_error", "message": str(exc)})

    @app.exception_handler(SceneFillError)
    async def _internal(request: Request, exc: SceneFillError):
        return JSONResponse(status_code=500, content={"code": "internal_error", "message": str(exc)})

    @app.get("/taxonomy")
    def taxonomy():
        return bundle.taxonomy.to_dict()

    @app.post("/complete")
    def complete_endpoint(req: CompleteRequest):
        sparse = pngio.read_sparse_png(pngio.from_b64(req.sparse_png_b64), bundle.taxonomy)
        result = complete(
            bundle, sparse, seed=req.seed, return_image=req.return_image, backend=backend
        )
        return _completion_payload(result, bundle.taxonomy, include_sparse=False)

    @app.post("/resample")
    def resample_endpoint(req: ResampleRequest):
        dense = pngio.read_dense_png(pngio.from_b64(req.dense_png_b64))
        instances = pngio.read_instance_png(pngio.from_b64(req.instance_png_b64))
        variants = resample(
            bundle, dense, instances,
            fraction=req.fraction, k=req.k, seed=req.seed,
            return_image=req.return_image, backend=backend,
        )
        return [_completion_payload(v, bundle.taxonomy, include_sparse=True) for v in variants]

    return app


def create_app_from_dir(checkpoint_dir, backend: str = "palette") -> FastAPI:
    return create_app(load_bundle(checkpoint_dir), backend=backend)
