"""HTTP serving layer for the model engines.

Implements the five-endpoint protocol the evaluation client speaks.  Every
embedding response carries the layer convention so a mismatched client fails
loudly instead of silently indexing the wrong layer.
"""

from __future__ import annotations

from typing import Optional

from fastapi import FastAPI, HTTPException, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from ffci_sidecar.models import LAYER_CONVENTION, LayerOutOfRange, UnknownModel


class TokenEmbeddingsRequest(BaseModel):
    model: str
    layer: int = Field(ge=0)
    texts: list[str]
    include_special: bool = False


class NspPairBody(BaseModel):
    first: str
    second: str


class NspRequest(BaseModel):
    model: str
    pairs: list[NspPairBody]


class StsRequest(BaseModel):
    model: str
    texts: list[str]


class SegmentsRequest(BaseModel):
    model: Optional[str] = None
    text: str
    granularity: str = "sentence"


class EntitiesRequest(BaseModel):
    model: Optional[str] = None
    text: str


def make_app(engine) -> FastAPI:
    app = FastAPI(title="ffci-sidecar")

    @app.exception_handler(RequestValidationError)
    async def malformed_body(request: Request, exc: RequestValidationError):
        return JSONResponse(status_code=400, content={"error": str(exc)})

    @app.exception_handler(UnknownModel)
    async def unknown_model(request: Request, exc: UnknownModel):
        return JSONResponse(status_code=404,
                            content={"error": f"unknown model {exc.args[0]!r}"})

    @app.exception_handler(LayerOutOfRange)
    async def bad_layer(request: Request, exc: LayerOutOfRange):
        return JSONResponse(status_code=400, content={"error": str(exc)})

    @app.post("/v1/token_embeddings")
    def token_embeddings(body: TokenEmbeddingsRequest):
        results = engine.token_embeddings(body.model, body.layer, body.texts,
                                          body.include_special)
        dim = engine.model_info(body.model).dim
        items = [{"tokens": list(tokens), "vectors": vectors.tolist()}
                 for tokens, vectors in results]
        return {"layer_convention": LAYER_CONVENTION, "dim": dim, "items": items}

    @app.post("/v1/nsp")
    def nsp(body: NspRequest):
        pairs = [(p.first, p.second) for p in body.pairs]
        if not pairs:
            raise HTTPException(status_code=400, detail="pairs must be non-empty")
        return {"probs": engine.nsp_probabilities(body.model, pairs)}

    @app.post("/v1/sts_embeddings")
    def sts(body: StsRequest):
        vectors = engine.sts_embeddings(body.model, body.texts)
        dim = int(vectors.shape[1]) if vectors.size else 0
        return {"dim": dim, "vectors": vectors.tolist()}

    @app.post("/v1/segments")
    def segments(body: SegmentsRequest):
        if body.granularity not in ("sentence", "edu"):
            raise HTTPException(status_code=400,
                                detail=f"unknown granularity {body.granularity!r}")
        spans = engine.segments(body.model or "default", body.text, body.granularity)
        return {"spans": [[int(a), int(b)] for a, b in spans]}

    @app.post("/v1/entities")
    def entities(body: EntitiesRequest):
        return {"entities": engine.entities(body.model or "default", body.text)}

    return app


def serve(engine, host: str = "127.0.0.1", port: int = 8300) -> None:
    """Run the service until interrupted."""
    import uvicorn

    uvicorn.run(make_app(engine), host=host, port=port, log_level="info")
