"""HTTP service exposing trained models for interactive exploration.

Stateless JSON API: clients hold their own latents and session state; the
server loads checkpoints once and renders on demand.  Long-running edits go
through a small in-process job queue and are polled by id.
"""

from __future__ import annotations

import base64
import io
import threading
import uuid
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np
from fastapi import FastAPI, HTTPException, Request
from fastapi.responses import JSONResponse, Response
from PIL import Image
from pydantic import BaseModel, Field

from .checkpoint import CheckpointError, load_checkpoint
from .config import NetConfig
from .editing import EditConfig, EditConstraints, EditError, optimize_edit
from .latent import (
    BranchedLatent,
    LatentError,
    SamplePolicy,
    constant_sweep,
    fuse,
    sample_latent,
    sample_latent_batch,
)
from .networks import Encoder, Generator, generate, generate_batch
from .training import nets_from_checkpoint


# --------------------------------------------------------------------------
# Model registry


@dataclass
class ModelEntry:
    """One loadable checkpoint; networks materialize on first use."""

    name: str
    path: str
    _generator: Optional[Generator] = field(default=None, repr=False)
    _encoder: Optional[Encoder] = field(default=None, repr=False)
    _loaded: bool = False

    def load(self) -> None:
        if self._loaded:
            return
        ckpt = load_checkpoint(self.path)
        g, _, e = nets_from_checkpoint(ckpt, with_encoder=True)
        self._generator = g
        self._encoder = e
        self._loaded = True

    @property
    def generator(self) -> Generator:
        self.load()
        return self._generator

    @property
    def encoder(self) -> Optional[Encoder]:
        self.load()
        return self._encoder

    @property
    def config(self) -> NetConfig:
        return self.generator.config

    def describe(self) -> dict:
        g = self.generator
        h, w = g.resolution
        return {
            "name": self.name,
            "stage": g.stage,
            "resolution": [h, w],
            "subvector_dims": list(g.config.subvector_dims),
            "has_encoder": self.encoder is not None,
        }


class ModelRegistry:
    def __init__(self, entries: dict[str, str]):
        self.entries = {name: ModelEntry(name, path) for name, path in entries.items()}

    def get(self, name: str) -> ModelEntry:
        if name not in self.entries:
            raise HTTPException(status_code=404, detail=f"unknown model {name!r}")
        return self.entries[name]


# --------------------------------------------------------------------------
# Wire formats


def image_to_png_bytes(image: np.ndarray) -> bytes:
    arr = np.clip(np.asarray(image, dtype=np.float64) * 255.0, 0, 255).round().astype(np.uint8)
    buf = io.BytesIO()
    Image.fromarray(arr).save(buf, format="PNG")
    return buf.getvalue()


def image_to_b64(image: np.ndarray) -> str:
    return base64.b64encode(image_to_png_bytes(image)).decode("ascii")


def _decode_plane(value: Union[str, list], name: str) -> np.ndarray:
    """A 2-D or 3-D array sent as nested JSON lists or a base64 PNG."""
    if isinstance(value, str):
        try:
            raw = base64.b64decode(value)
            with Image.open(io.BytesIO(raw)) as im:
                return np.asarray(im.convert("RGB"), dtype=np.float32) / 255.0
        except Exception as exc:
            raise HTTPException(status_code=422, detail=f"cannot decode {name} PNG: {exc}")
    return np.asarray(value, dtype=np.float32)


def _latent_from_wire(obj: dict) -> BranchedLatent:
    try:
        return BranchedLatent.from_json_obj(obj)
    except (LatentError, TypeError, ValueError) as exc:
        raise HTTPException(status_code=422, detail=f"bad latent: {exc}")


def _resolve_latent(
    entry: ModelEntry, latent: Optional[dict], seed: Optional[int]
) -> BranchedLatent:
    if (latent is None) == (seed is None):
        raise HTTPException(status_code=422, detail="provide exactly one of latent / seed")
    if latent is not None:
        out = _latent_from_wire(latent)
        if out.dims != entry.config.subvector_dims:
            raise HTTPException(
                status_code=422,
                detail=f"latent dims {out.dims} do not match model {entry.config.subvector_dims}",
            )
        return out
    cfg = entry.config
    return sample_latent(cfg, SamplePolicy.all_uniform(cfg.branches), int(seed))


# --------------------------------------------------------------------------
# Request models


class GenerateRequest(BaseModel):
    model: str
    latent: Optional[dict] = None
    seed: Optional[int] = None


class SweepRequest(BaseModel):
    model: str
    latent: Optional[dict] = None
    seed: Optional[int] = None
    subvector: int = 0
    values: list[float] = Field(default_factory=lambda: [-1.0, -0.5, 0.0, 0.5, 1.0])


class FuseRequest(BaseModel):
    model: str
    a: dict
    b: dict
    take_from_a: list[int]


class CandidatesRequest(BaseModel):
    model: str
    prefix: list[list[float]] = Field(default_factory=list)
    count: int = 8
    seed: int = 0


class EditRequestConfig(BaseModel):
    steps: int = 200
    step_size: float = 0.05
    restarts: int = 3
    edge_weight: float = 10.0
    init: str = "encoder"


class EditRequest(BaseModel):
    model: str
    color: Optional[Union[str, list]] = None
    mask: Optional[list] = None
    edge: Optional[list] = None
    init_latent: Optional[dict] = None
    seed: int = 0
    config: EditRequestConfig = Field(default_factory=EditRequestConfig)


# --------------------------------------------------------------------------
# Job queue


@dataclass
class JobTicket:
    id: str
    status: str = "queued"  # queued | running | done | failed
    progress: float = 0.0
    result: Optional[dict] = None
    error: Optional[str] = None

    def describe(self) -> dict:
        out = {"id": self.id, "status": self.status, "progress": self.progress}
        if self.result is not None:
            out["result"] = self.result
        if self.error is not None:
            out["error"] = self.error
        return out


class JobQueue:
    def __init__(self, max_workers: int = 1):
        self._pool = ThreadPoolExecutor(max_workers=max_workers)
        self._lock = threading.Lock()
        self._tickets: dict[str, JobTicket] = {}

    def submit(self, fn) -> JobTicket:
        ticket = JobTicket(id=uuid.uuid4().hex)
        with self._lock:
            self._tickets[ticket.id] = ticket

        def run():
            with self._lock:
                ticket.status = "running"
            try:
                result = fn(lambda p: self._set_progress(ticket, p))
                with self._lock:
                    ticket.result = result
                    ticket.progress = 1.0
                    ticket.status = "done"
            except Exception as exc:  # surfaced via the ticket, not the log
                with self._lock:
                    ticket.error = f"{type(exc).__name__}: {exc}"
                    ticket.status = "failed"

        self._pool.submit(run)
        return ticket

    def _set_progress(self, ticket: JobTicket, p: float) -> None:
        with self._lock:
            ticket.progress = float(p)

    def get(self, job_id: str) -> JobTicket:
        with self._lock:
            if job_id not in self._tickets:
                raise HTTPException(status_code=404, detail=f"unknown job {job_id!r}")
            return self._tickets[job_id]


# --------------------------------------------------------------------------
# Application


def create_app(models: dict[str, str]) -> FastAPI:
    """Application factory; ``models`` maps model names to checkpoint paths."""
    app = FastAPI(title="scalebranch service")
    registry = ModelRegistry(models)
    jobs = JobQueue()
    app.state.registry = registry
    app.state.jobs = jobs

    @app.exception_handler(LatentError)
    @app.exception_handler(EditError)
    async def _domain_error(request: Request, exc: Exception):
        return JSONResponse(status_code=422, content={"detail": str(exc)})

    @app.exception_handler(CheckpointError)
    async def _ckpt_error(request: Request, exc: Exception):
        return JSONResponse(status_code=500, content={"detail": str(exc)})

    @app.get("/healthz")
    def healthz():
        return {"status": "ok", "models": len(registry.entries)}

    @app.get("/models")
    def list_models():
        return {"models": [registry.get(name).describe() for name in registry.entries]}

    @app.post("/generate")
    def generate_endpoint(req: GenerateRequest, request: Request):
        entry = registry.get(req.model)
        latent = _resolve_latent(entry, req.latent, req.seed)
        image = generate(entry.generator, latent)
        if "image/png" in request.headers.get("accept", ""):
            return Response(content=image_to_png_bytes(image), media_type="image/png")
        return {"latent": latent.to_json_obj(), "image_png_b64": image_to_b64(image)}

    @app.post("/sweep")
    def sweep_endpoint(req: SweepRequest):
        entry = registry.get(req.model)
        base = _resolve_latent(entry, req.latent, req.seed)
        if not 0 <= req.subvector < entry.config.branches:
            raise HTTPException(status_code=422, detail="subvector index out of range")
        latents = constant_sweep(base, req.subvector, req.values)
        flats = np.stack([l.flat() for l in latents])
        images = generate_batch(entry.generator, flats)
        return {
            "base": base.to_json_obj(),
            "values": req.values,
            "frames": [
                {"latent": l.to_json_obj(), "image_png_b64": image_to_b64(img)}
                for l, img in zip(latents, images)
            ],
        }

    @app.post("/fuse")
    def fuse_endpoint(req: FuseRequest):
        entry = registry.get(req.model)
        a = _latent_from_wire(req.a)
        b = _latent_from_wire(req.b)
        fused = fuse(a, b, req.take_from_a)
        if fused.dims != entry.config.subvector_dims:
            raise HTTPException(status_code=422, detail="latent dims do not match model")
        image = generate(entry.generator, fused)
        return {"latent": fused.to_json_obj(), "image_png_b64": image_to_b64(image)}

    @app.post("/candidates")
    def candidates_endpoint(req: CandidatesRequest):
        """Random completions of a fixed coarse prefix — the coarse-to-fine
        selection workflow draws each round from here."""
        entry = registry.get(req.model)
        cfg = entry.config
        k = len(req.prefix)
        if k >= cfg.branches:
            raise HTTPException(
                status_code=422,
                detail=f"prefix fixes {k} sub-vectors; model only has {cfg.branches}",
            )
        if not 1 <= req.count <= 64:
            raise HTTPException(status_code=422, detail="count must be in 1..64")
        prefix_parts = [np.asarray(p, dtype=np.float32) for p in req.prefix]
        for t, part in enumerate(prefix_parts):
            if part.shape != (cfg.subvector_dims[t],):
                raise HTTPException(
                    status_code=422,
                    detail=f"prefix sub-vector {t} must have {cfg.subvector_dims[t]} entries",
                )
            if np.abs(part).max(initial=0.0) > 1.0:
                raise HTTPException(status_code=422, detail="prefix outside [-1, 1]")
        # candidates vary only z^k: the prefix is pinned below it and finer
        # sub-vectors stay zero-fed until their own round
        flats = sample_latent_batch(
            cfg, SamplePolicy.active_prefix(cfg.branches, k + 1), int(req.seed), req.count
        )
        for t, part in enumerate(prefix_parts):
            flats[:, cfg.subvector_slice(t)] = part
        images = generate_batch(entry.generator, flats)
        out = []
        for i in range(req.count):
            lat = BranchedLatent.from_flat(flats[i], cfg.subvector_dims)
            out.append({"latent": lat.to_json_obj(), "image_png_b64": image_to_b64(images[i])})
        return {"candidates": out}

    @app.post("/edit")
    def edit_endpoint(req: EditRequest):
        entry = registry.get(req.model)
        color = _decode_plane(req.color, "color") if req.color is not None else None
        mask = np.asarray(req.mask, dtype=np.float32) if req.mask is not None else None
        edge = np.asarray(req.edge, dtype=np.float32) if req.edge is not None else None
        try:
            constraints = EditConstraints(color=color, mask=mask, edge=edge)
            init = req.config.init
            if init == "encoder" and entry.encoder is None:
                init = "latent" if req.init_latent is not None else "random"
            edit_config = EditConfig(
                edge_weight=req.config.edge_weight,
                steps=req.config.steps,
                step_size=req.config.step_size,
                restarts=req.config.restarts,
                init=init,
            )
            init_latent = (
                _latent_from_wire(req.init_latent) if req.init_latent is not None else None
            )
        except (EditError, LatentError) as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        g = entry.generator
        encoder = entry.encoder
        seed = req.seed

        def job(set_progress) -> dict:
            result = optimize_edit(
                g, constraints, edit_config, encoder=encoder,
                init_latent=init_latent, seed=seed,
            )
            set_progress(1.0)
            return {
                "latent": result.latent.to_json_obj(),
                "image_png_b64": image_to_b64(result.image),
                "loss": result.loss,
                "trace": result.trace,
                "init_kind": result.init_kind,
            }

        ticket = jobs.submit(job)
        return {"job_id": ticket.id, "status": ticket.status}

    @app.get("/jobs/{job_id}")
    def job_endpoint(job_id: str):
        return jobs.get(job_id).describe()

    return app


def run_service(models: dict[str, str], host: str = "127.0.0.1", port: int = 8000) -> None:
    import uvicorn

    uvicorn.run(create_app(models), host=host, port=port, log_level="warning")
