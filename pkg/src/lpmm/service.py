"""HTTP JSON API over the toolkit: model building, fitting, editing,
adaptor training and rendering, backed by flat artifact files.

Reads work on immutable snapshots; every mutation (model build, surrogate
setup, library writes, adaptor swap) goes through a single writer lock, so
clients never observe partially-updated state. Training runs on a
background thread and is polled via /adaptor/status.
"""

from __future__ import annotations

import json
import logging
import os
import threading
import uuid
from pathlib import Path

import numpy as np
from fastapi import FastAPI, Query, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from . import adaptor as ad
from . import landmarks as lm
from . import model as md
from . import poseedit as pe
from . import surrogate as sg
from .errors import DomainError, FormatError, LpmmError

logger = logging.getLogger("lpmm.service")

API = "/api/v1"


class ServiceError(LpmmError):
    def __init__(self, status: int, code: str, message: str):
        super().__init__(message, code=code)
        self.status = status


def _missing(code: str, what: str) -> ServiceError:
    return ServiceError(404, code, f"no {what} loaded")


def _atomic_write(path: Path, data: bytes) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(data)
    os.replace(tmp, path)


class JobStatus:
    """Mutable training-job snapshot with its own lock, so status polls
    never contend with the writer lock."""

    def __init__(self):
        self._lock = threading.Lock()
        self.state = "idle"
        self.step = 0
        self.losses: dict | None = None
        self.job_id: str | None = None
        self.error: str | None = None

    def snapshot(self) -> dict:
        with self._lock:
            return {
                "state": self.state,
                "step": self.step,
                "losses": self.losses,
                "job_id": self.job_id,
                "error": self.error,
            }

    def update(self, **kw) -> None:
        with self._lock:
            for key, value in kw.items():
                setattr(self, key, value)


class SessionState:
    def __init__(self, state_dir: Path):
        self.state_dir = Path(state_dir)
        self.state_dir.mkdir(parents=True, exist_ok=True)
        (self.state_dir / "blendshapes").mkdir(exist_ok=True)
        self.lock = threading.RLock()
        self.model: md.LpmmModel | None = None
        self.surrogate: sg.SurrogateStack | None = None
        self.adaptor: ad.AdaptorNet | None = None
        self.adaptor_meta: dict = {}
        self.library: pe.BlendshapeLibrary | None = None
        self.dataset: lm.LandmarkDataset | None = None
        self.job = JobStatus()
        self.job_thread: threading.Thread | None = None
        self.startup_report: dict[str, str] = {}

    # ---- persistence -------------------------------------------------

    def load_artifacts(self) -> None:
        """Best-effort load of persisted artifacts; corrupt files are
        reported per-artifact and skipped."""
        report = {}
        model_path = self.state_dir / "model.json"
        if model_path.exists():
            try:
                self.model = md.deserialize_model(model_path.read_bytes())
                report["model"] = "loaded"
            except LpmmError as exc:
                report["model"] = f"error: {exc}"
        dataset_path = self.state_dir / "dataset.jsonl"
        if dataset_path.exists():
            try:
                self.dataset = lm.parse_landmark_records(dataset_path.read_bytes())
                report["dataset"] = "loaded"
            except LpmmError as exc:
                report["dataset"] = f"error: {exc}"
        if self.model is not None:
            self.library = pe.BlendshapeLibrary(model_fingerprint=self.model.dataset_fingerprint)
            for path in sorted((self.state_dir / "blendshapes").glob("*.json")):
                try:
                    bs = pe.deserialize_blendshape(path.read_bytes(), self.model.dataset_fingerprint)
                    self.library.add(bs)
                    report[f"blendshape:{path.stem}"] = "loaded"
                except LpmmError as exc:
                    report[f"blendshape:{path.stem}"] = f"error: {exc}"
            surrogate_path = self.state_dir / "surrogate.json"
            if surrogate_path.exists():
                try:
                    self.surrogate = self._surrogate_from_file(surrogate_path.read_bytes())
                    report["surrogate"] = "loaded"
                except LpmmError as exc:
                    report["surrogate"] = f"error: {exc}"
            adaptor_path = self.state_dir / "adaptor.json"
            if adaptor_path.exists():
                try:
                    net, meta = ad.deserialize_adaptor(adaptor_path.read_bytes())
                    if self.surrogate is None or net.w != self.surrogate.w:
                        raise FormatError("adaptor does not match active surrogate", code="surrogate_mismatch")
                    self.adaptor, self.adaptor_meta = net, meta
                    report["adaptor"] = "loaded"
                except LpmmError as exc:
                    report["adaptor"] = f"error: {exc}"
        for name, status in report.items():
            if status != "loaded":
                logger.warning("startup artifact %s: %s", name, status)
        self.startup_report = report

    def _surrogate_from_file(self, data: bytes) -> sg.SurrogateStack:
        obj = json.loads(data.decode("utf-8"))
        if obj.get("format") != "lpmm-surrogate":
            raise FormatError("not a surrogate file", code="malformed_surrogate")
        if obj.get("model_fingerprint") != self.model.dataset_fingerprint:
            raise DomainError("surrogate built for different model", code="fingerprint_mismatch")
        raster = sg.RasterConfig(**obj["raster"])
        return sg.make_surrogate(int(obj["seed"]), int(obj["w"]), self.model.n, raster, self.model.mean)

    def persist_surrogate(self) -> None:
        obj = {
            "format": "lpmm-surrogate",
            "version": 1,
            "seed": self.surrogate.seed,
            "w": self.surrogate.w,
            "raster": {
                "height": self.surrogate.raster.height,
                "width": self.surrogate.raster.width,
                "sigma": self.surrogate.raster.sigma,
            },
            "model_fingerprint": self.model.dataset_fingerprint,
        }
        _atomic_write(self.state_dir / "surrogate.json", json.dumps(obj).encode())

    # ---- typed accessors ----------------------------------------------

    def need_model(self) -> md.LpmmModel:
        model = self.model
        if model is None:
            raise _missing("no_model", "model")
        return model

    def need_surrogate(self) -> sg.SurrogateStack:
        stack = self.surrogate
        if stack is None:
            raise _missing("no_surrogate", "surrogate")
        return stack

    def need_adaptor(self) -> ad.AdaptorNet:
        net = self.adaptor
        if net is None:
            raise _missing("no_adaptor", "adaptor")
        return net

    def need_dataset(self) -> lm.LandmarkDataset:
        ds = self.dataset
        if ds is None:
            raise _missing("no_dataset", "dataset")
        return ds

    def need_library(self) -> pe.BlendshapeLibrary:
        lib = self.library
        if lib is None:
            raise _missing("no_model", "model")
        return lib


# ---- request schemas ---------------------------------------------------


class BuildRequest(BaseModel):
    dataset: list[dict] | str
    m: int | None = None


class FitRequest(BaseModel):
    points: list[list[float]]
    k: int
    space: str = "canonical"


class ReconstructRequest(BaseModel):
    params: list[float]


class InterpolateRequest(BaseModel):
    from_: list[float] = Field(alias="from")
    to: list[float]
    steps: int


class ScaleRequest(BaseModel):
    params: list[float]
    alpha: float


class BlendshapeCreate(BaseModel):
    name: str
    offset: list[float]
    description: str = ""


class RasterSpec(BaseModel):
    h: int = 64
    w: int = 64
    sigma: float = 0.02


class SurrogateRequest(BaseModel):
    seed: int
    w: int = 16
    raster: RasterSpec = RasterSpec()


class TrainRequest(BaseModel):
    k: int
    steps: int
    seed: int = 0
    learning_rate: float = 1e-4
    lambda_rgb: float = 1.0
    lambda_pose_reg: float = 1.0
    batch_size: int = 32
    loss_variant: str = "rgb"
    pose_reg_enabled: bool = True


class MapRequest(BaseModel):
    params: list[float]


class MixEdit(BaseModel):
    name: str
    weight: float


class MixRequest(BaseModel):
    driving_points: list[list[float]]
    edits: list[MixEdit] = []
    mode: str = "A"
    space: str = "canonical"


# ---- helpers ------------------------------------------------------------


def _params(values: list[float]) -> md.ParamVector:
    return md.ParamVector(np.asarray(values, dtype=np.float64))


def _landmarks(points: list[list[float]], space: str, n: int) -> lm.LandmarkSet:
    lms = lm.LandmarkSet(points, n=n)
    if space == "pixel":
        lms = lm.normalize_to_canonical(lms)
    elif space != "canonical":
        raise FormatError(f"unknown space {space!r}", code="schema_violation")
    return lms


def _points_payload(lms: lm.LandmarkSet) -> list[list[float]]:
    return [[float(x), float(y)] for x, y in lms.points]


def _raster_payload(raster: np.ndarray) -> dict:
    h, w = raster.shape
    return {"shape": [h, w], "values": raster.reshape(-1).tolist()}


def create_app(state_dir) -> FastAPI:
    state = SessionState(Path(state_dir))
    state.load_artifacts()

    app = FastAPI(title="lpmm service", version="1")
    app.state.session = state

    @app.exception_handler(LpmmError)
    async def lpmm_error_handler(request: Request, exc: LpmmError):
        if isinstance(exc, ServiceError):
            status = exc.status
        elif isinstance(exc, FormatError):
            status = 400
        else:
            status = 422
        return JSONResponse(status_code=status, content={"error": exc.code, "message": str(exc)})

    @app.exception_handler(RequestValidationError)
    async def schema_error_handler(request: Request, exc: RequestValidationError):
        return JSONResponse(
            status_code=400,
            content={"error": "schema_violation", "message": str(exc.errors()[:3])},
        )

    # ---- model ----------------------------------------------------------

    def _model_summary(model: md.LpmmModel) -> dict:
        return {
            "n": model.n,
            "m": model.m,
            "eigenvalues": model.eigenvalues.tolist(),
            "fingerprint": model.dataset_fingerprint,
            "warnings": list(model.warnings),
        }

    @app.post(API + "/model/build")
    def build_model(req: BuildRequest):
        if isinstance(req.dataset, str):
            path = Path(req.dataset)
            if not path.exists():
                raise ServiceError(404, "dataset_not_found", f"no dataset at {path}")
            dataset = lm.parse_landmark_records(path.read_bytes())
        else:
            lines = "\n".join(json.dumps(rec) for rec in req.dataset)
            dataset = lm.parse_landmark_records(lines.encode("utf-8"))
        dataset = lm.normalize_dataset(dataset)
        model = md.build_lpmm(dataset, req.m)
        with state.lock:
            if state.job.snapshot()["state"] == "running":
                raise ServiceError(409, "job_running", "cannot swap model while training")
            _atomic_write(state.state_dir / "model.json", md.serialize_model(model))
            _atomic_write(state.state_dir / "dataset.jsonl", lm.serialize_landmark_records(dataset))
            for stale in ("surrogate.json", "adaptor.json"):
                (state.state_dir / stale).unlink(missing_ok=True)
            for path in (state.state_dir / "blendshapes").glob("*.json"):
                path.unlink()
            state.model = model
            state.dataset = dataset
            state.surrogate = None
            state.adaptor = None
            state.adaptor_meta = {}
            state.library = pe.BlendshapeLibrary(model_fingerprint=model.dataset_fingerprint)
        return _model_summary(model)

    @app.get(API + "/model")
    def get_model():
        return _model_summary(state.need_model())

    @app.get(API + "/model/components")
    def get_component(i: int = Query(...)):
        model = state.need_model()
        if not 0 <= i < model.m:
            raise DomainError(f"component index {i} out of range [0, {model.m})", code="k_out_of_range")
        column = model.basis[:, i].reshape(-1, 2)
        return {
            "i": i,
            "offsets": [[float(x), float(y)] for x, y in column],
            "eigenvalue": float(model.eigenvalues[i]),
        }

    # ---- fitting / reconstruction ---------------------------------------

    @app.post(API + "/fit")
    def fit(req: FitRequest):
        model = state.need_model()
        lms = _landmarks(req.points, req.space, model.n)
        p = md.fit_params(model, lms, req.k)
        return {"params": p.values.tolist(), "k": p.k}

    @app.post(API + "/reconstruct")
    def reconstruct_endpoint(req: ReconstructRequest):
        model = state.need_model()
        p = _params(req.params)
        lms = md.reconstruct(model, p)
        out = {"points": _points_payload(lms), "k": p.k}
        net, stack = state.adaptor, state.surrogate
        if net is not None and stack is not None and net.k == p.k:
            latent = ad.map_params_to_latent(net, p)
            out["raster"] = _raster_payload(sg.render_raster(stack, latent))
        return out

    @app.post(API + "/interpolate")
    def interpolate(req: InterpolateRequest):
        p_from = _params(req.from_)
        p_to = _params(req.to)
        if req.steps < 2:
            raise DomainError("steps must be >= 2", code="invalid_steps")
        alphas = np.linspace(0.0, 1.0, req.steps)
        frames = [pe.interpolate_params(p_from, p_to, float(a)).values.tolist() for a in alphas]
        return {"frames": frames}

    @app.post(API + "/scale")
    def scale(req: ScaleRequest):
        return {"params": pe.scale_from_base(_params(req.params), req.alpha).values.tolist()}

    # ---- blendshape library ----------------------------------------------

    @app.get(API + "/blendshapes")
    def list_blendshapes():
        lib = state.need_library()
        return {
            "model_fingerprint": lib.model_fingerprint,
            "blendshapes": [
                {"name": bs.name, "k": bs.offset.k, "description": bs.description}
                for bs in (lib.get(name) for name in lib.names())
            ],
        }

    @app.get(API + "/blendshapes/{name}")
    def get_blendshape(name: str):
        lib = state.need_library()
        return pe.blendshape_to_json_obj(lib.get(name), lib.model_fingerprint)

    @app.post(API + "/blendshapes")
    def create_blendshape(req: BlendshapeCreate):
        lib = state.need_library()
        bs = pe.Blendshape(name=req.name, offset=_params(req.offset), description=req.description)
        with state.lock:
            if bs.name in lib.entries:
                raise ServiceError(409, "duplicate_blendshape", f"blendshape {bs.name!r} already exists")
            lib.add(bs)
            try:
                _atomic_write(
                    state.state_dir / "blendshapes" / f"{bs.name}.json",
                    pe.serialize_blendshape(bs, lib.model_fingerprint),
                )
            except OSError:
                lib.delete(bs.name)
                raise
        return {"name": bs.name, "k": bs.offset.k}

    @app.delete(API + "/blendshapes/{name}")
    def delete_blendshape(name: str):
        lib = state.need_library()
        with state.lock:
            lib.delete(name)
            (state.state_dir / "blendshapes" / f"{name}.json").unlink(missing_ok=True)
        return {"deleted": name}

    # ---- surrogate / adaptor ---------------------------------------------

    @app.post(API + "/surrogate")
    def setup_surrogate(req: SurrogateRequest):
        model = state.need_model()
        raster = sg.RasterConfig(height=req.raster.h, width=req.raster.w, sigma=req.raster.sigma)
        stack = sg.make_surrogate(req.seed, req.w, model.n, raster, model.mean)
        with state.lock:
            if state.job.snapshot()["state"] == "running":
                raise ServiceError(409, "job_running", "cannot swap surrogate while training")
            state.surrogate = stack
            state.adaptor = None
            state.adaptor_meta = {}
            (state.state_dir / "adaptor.json").unlink(missing_ok=True)
            state.persist_surrogate()
        return {
            "seed": stack.seed,
            "w": stack.w,
            "n": stack.n,
            "raster": {"h": raster.height, "w": raster.width, "sigma": raster.sigma},
        }

    @app.post(API + "/adaptor/train")
    def start_training(req: TrainRequest):
        model = state.need_model()
        stack = state.need_surrogate()
        dataset = state.need_dataset()
        cfg = ad.TrainConfig(
            k=req.k, steps=req.steps, seed=req.seed, learning_rate=req.learning_rate,
            lambda_rgb=req.lambda_rgb, lambda_pose_reg=req.lambda_pose_reg,
            batch_size=req.batch_size, loss_variant=req.loss_variant,
            pose_reg_enabled=req.pose_reg_enabled,
        )
        if cfg.k > model.m:
            raise DomainError(f"k={cfg.k} exceeds model m={model.m}", code="k_out_of_range")
        with state.lock:
            if state.job.snapshot()["state"] == "running":
                raise ServiceError(409, "job_running", "a training job is already running")
            job_id = uuid.uuid4().hex
            state.job.update(state="running", step=0, losses=None, job_id=job_id, error=None)

        def on_step(step: int, losses: ad.LossBreakdown) -> None:
            state.job.update(step=step, losses=losses.as_dict())

        def run() -> None:
            try:
                net, report = ad.train_adaptor(model, stack, dataset, cfg, on_step=on_step)
                with state.lock:
                    _atomic_write(
                        state.state_dir / "adaptor.json",
                        ad.serialize_adaptor(net, cfg, stack.seed),
                    )
                    _atomic_write(
                        state.state_dir / "train_report.json",
                        json.dumps(report.as_dict()).encode(),
                    )
                    state.adaptor = net
                    state.adaptor_meta = {"train_config": cfg.as_dict(), "surrogate_seed": stack.seed}
                state.job.update(state="done", losses=report.final.as_dict())
            except Exception as exc:  # surfaced via status, not raised
                logger.exception("training job failed")
                state.job.update(state="failed", error=str(exc))

        thread = threading.Thread(target=run, name=f"lpmm-train-{job_id}", daemon=True)
        state.job_thread = thread
        thread.start()
        return {"job_id": job_id}

    @app.get(API + "/adaptor/status")
    def training_status():
        return state.job.snapshot()

    @app.post(API + "/adaptor/map")
    def map_params(req: MapRequest):
        net = state.need_adaptor()
        latent = ad.map_params_to_latent(net, _params(req.params))
        return {"latent": latent.tolist(), "w": latent.size}

    @app.post(API + "/mix")
    def mix(req: MixRequest):
        model = state.need_model()
        net = state.need_adaptor()
        stack = state.need_surrogate()
        lib = state.need_library()
        driving = _landmarks(req.driving_points, req.space, model.n)
        edits = [(lib.get(e.name), e.weight) for e in req.edits]
        p_mixed, latent = ad.mix_driving_with_params(net, model, driving, edits, mode=req.mode, stack=stack)
        return {
            "params": p_mixed.values.tolist(),
            "latent": latent.tolist(),
            "raster": _raster_payload(sg.render_raster(stack, latent)),
        }

    # ---- evaluation -------------------------------------------------------

    @app.get(API + "/nme-sweep")
    def sweep(ks: str = Query(...)):
        model = state.need_model()
        dataset = state.need_dataset()
        try:
            k_list = [int(tok) for tok in ks.split(",") if tok.strip()]
        except ValueError:
            raise FormatError(f"ks must be comma-separated integers, got {ks!r}", code="schema_violation")
        reports = md.nme_sweep(model, dataset, k_list)
        return {
            "reports": [
                {"k": rep.k, "mean": rep.mean, "per_sample": list(rep.per_sample), "skipped": rep.skipped}
                for rep in reports
            ]
        }

    return app


def run_server(host: str, port: int, state_dir, ui_dir=None) -> None:
    """Blocking server entry point used by the CLI."""
    import uvicorn

    app = create_app(state_dir)
    if ui_dir is not None:
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=str(ui_dir), html=True), name="ui")
    uvicorn.run(app, host=host, port=port, log_level="info")
