"""HTTP service exposing the deformation engine to the viewer and scripts.

Endpoints:
  GET  /health           liveness probe
  GET  /poses            JSON list of pose ids
  GET  /mesh/{id}        vertices + faces of the neutral or a pose
  POST /encode           {"poseId": ...} -> {"z": [...]}
  POST /deform           {"parts": [{"poseId", "faceIndices"}], "alpha"}
                         -> {"vertices": [...]}

The loaded model and pose bank are immutable, so concurrent requests are
safe; every deformation code is precomputed at startup and a request only
pays for the decode.
"""

from __future__ import annotations

from fastapi import FastAPI, HTTPException, Query, Request
from fastapi.exceptions import RequestValidationError
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from .latent import Mask, build_pose_bank, decode_codes
from .synth import load_dataset


class DeformPart(BaseModel):
    poseId: str
    faceIndices: list[int] = Field(default_factory=list)


class DeformRequest(BaseModel):
    parts: list[DeformPart] = Field(default_factory=list)
    alpha: float = 1.0


class EncodeRequest(BaseModel):
    poseId: str


class ServiceState:
    def __init__(self, params, neutral, bank):
        self.params = params
        self.neutral = neutral
        self.bank = bank
        self.meshes = {"neutral": neutral, neutral.id: neutral}
        self.meshes.update(bank.meshes)


def build_state(params, data_dir):
    dataset = load_dataset(data_dir)
    bank = build_pose_bank(dataset.neutral, dataset.poses, params)
    return ServiceState(params, dataset.neutral, bank)


def _mesh_payload(mesh, precision=None):
    verts = mesh.vertices
    if precision is not None:
        verts = verts.round(precision)
    return {"vertices": verts.tolist(), "faces": mesh.faces.tolist()}


def create_app(state):
    app = FastAPI(title="meshdeform service")
    app.add_middleware(CORSMiddleware, allow_origins=["*"], allow_methods=["*"],
                       allow_headers=["*"])

    @app.exception_handler(RequestValidationError)
    async def malformed_body(request: Request, exc: RequestValidationError):
        fields = [
            {"field": ".".join(str(p) for p in err["loc"]), "message": err["msg"]}
            for err in exc.errors()
        ]
        return JSONResponse(status_code=400,
                            content={"error": "malformed request body", "fields": fields})

    @app.get("/health")
    def health():
        return {"status": "ok"}

    @app.get("/poses")
    def poses():
        return state.bank.ids()

    @app.get("/mesh/{mesh_id}")
    def mesh(mesh_id: str, precision: int | None = Query(default=None, ge=0, le=17)):
        if mesh_id not in state.meshes:
            raise HTTPException(status_code=404, detail=f"unknown mesh id {mesh_id!r}")
        return _mesh_payload(state.meshes[mesh_id], precision)

    @app.post("/encode")
    def encode(body: EncodeRequest):
        if body.poseId not in state.bank.entries:
            raise HTTPException(status_code=404, detail=f"unknown pose id {body.poseId!r}")
        return {"z": state.bank.code(body.poseId).z.tolist()}

    @app.post("/deform")
    def deform(body: DeformRequest):
        n_faces = state.neutral.n_faces
        parts = []
        for part in body.parts:
            if part.poseId not in state.bank.entries:
                raise HTTPException(status_code=404,
                                    detail=f"unknown pose id {part.poseId!r}")
            try:
                mask = Mask.from_face_indices(n_faces, part.faceIndices,
                                              name=part.poseId)
            except IndexError:
                raise HTTPException(status_code=422,
                                    detail=f"mask face index out of range for {part.poseId!r}")
            parts.append((state.bank.code(part.poseId), mask))
        deformed, _, _ = decode_codes(state.neutral, state.bank.local, parts,
                                      state.params, alpha=body.alpha)
        return {"vertices": deformed.vertices.tolist()}

    return app
