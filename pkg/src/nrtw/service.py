"""Session-oriented HTTP facade over the sweep engine.

The UI creates a session (uploading an image or describing a phantom),
launches directional sweeps that run in background threads, polls the
curve summary, and fetches candidate images raw (NRTW-IMG) or windowed for
display (PNG). Everything quantitative is computed server-side on stored
float data.

State layout under ``state_dir``::

    sessions/<id>/session.json   checkpoint id, ROI, references
    sessions/<id>/input.img      the noisy input (NRTW-IMG)
    sessions/<id>/clean.img      optional clean reference
    sessions/<id>/curve/         curve directory (manifest + candidates)

Candidates are appended atomically and persisted as produced, so a crash
mid-sweep leaves a loadable prefix; on restart, in-flight sweeps are marked
failed.
"""

from __future__ import annotations

import base64
import json
import os
import threading
import uuid
from typing import Optional

from fastapi import Body, FastAPI, HTTPException, Query, Response

from . import sweeps as sweeps_mod
from .sweeps import (
    SweepConfig,
    NRTCurve,
    STATUS_BUILDING,
    STATUS_FAILED,
    STATUS_IDLE,
    build_nrt_curve,
    load_curve,
    save_curve,
)
from .errors import DegenerateCnrError, FormatError, NrtwError
from .formats import image_from_bytes, image_to_bytes, to_png_bytes
from .metrics import ROI, MetricsRecord, cnr, resolution_proxy, rmse, roi_std
from .simulate import NoiseSpec, PhantomSpec, add_noise, generate_phantom, window_to_bytes
from .training import Checkpoint

API_PREFIX = "/api/v1"


def _candidate_meta(cand) -> dict:
    return {
        "index": cand.signed_index,
        "iteration": cand.iteration,
        "loss": cand.loss,
        "distance_to_target": cand.distance_to_target,
        "distance_to_t_low": cand.distance_to_t_low,
        "distance_to_t_high": cand.distance_to_t_high,
        "metrics": cand.metrics.to_dict() if cand.metrics else None,
    }


class SessionState:
    def __init__(self, session_id: str, directory: str, checkpoint_id: str,
                 has_clean: bool, flat_roi: Optional[ROI]):
        self.id = session_id
        self.directory = directory
        self.checkpoint_id = checkpoint_id
        self.has_clean = has_clean
        self.flat_roi = flat_roi
        self.lock = threading.Lock()
        self.curve: Optional[NRTCurve] = None
        self.threads: dict = {}
        self.cancels: dict = {}

    @property
    def curve_dir(self) -> str:
        return os.path.join(self.directory, "curve")

    def direction_status(self, direction: str) -> str:
        with self.lock:
            if self.curve is None:
                return STATUS_IDLE
            return self.curve.direction_status.get(direction, STATUS_IDLE)


class WorkbenchState:
    def __init__(self, ckpt_dir: str, state_dir: str):
        self.ckpt_dir = ckpt_dir
        self.state_dir = state_dir
        self.sessions_dir = os.path.join(state_dir, "sessions")
        os.makedirs(self.ckpt_dir, exist_ok=True)
        os.makedirs(self.sessions_dir, exist_ok=True)
        self.sessions: dict[str, SessionState] = {}
        self.checkpoints: dict[str, Checkpoint] = {}
        self.lock = threading.Lock()
        self._scan_checkpoints()
        self._recover_sessions()

    # -- checkpoints

    def _scan_checkpoints(self) -> None:
        for name in sorted(os.listdir(self.ckpt_dir)):
            if name.endswith(".ckpt"):
                self.checkpoints[name[: -len(".ckpt")]] = None  # lazy load

    def checkpoint_path(self, ckpt_id: str) -> str:
        return os.path.join(self.ckpt_dir, f"{ckpt_id}.ckpt")

    def get_checkpoint(self, ckpt_id: str) -> Checkpoint:
        with self.lock:
            if ckpt_id not in self.checkpoints:
                raise HTTPException(404, f"unknown checkpoint {ckpt_id!r}")
            ckpt = self.checkpoints[ckpt_id]
            if ckpt is None:
                try:
                    ckpt = Checkpoint.load(self.checkpoint_path(ckpt_id))
                except (OSError, FormatError) as exc:
                    raise HTTPException(500, f"checkpoint unreadable: {exc}")
                self.checkpoints[ckpt_id] = ckpt
        return ckpt

    def register_checkpoint(self, data: bytes, ckpt_id: Optional[str]) -> str:
        try:
            ckpt = Checkpoint.from_bytes(data)
        except (FormatError, ValueError) as exc:
            raise HTTPException(400, f"malformed checkpoint: {exc}")
        if ckpt_id is None:
            from .formats import sha256_bytes

            ckpt_id = sha256_bytes(data)[:12]
        path = self.checkpoint_path(ckpt_id)
        with open(path, "wb") as fh:
            fh.write(data)
        with self.lock:
            self.checkpoints[ckpt_id] = ckpt
        return ckpt_id

    def list_checkpoints(self) -> list:
        out = []
        with self.lock:
            ids = sorted(self.checkpoints)
        for ckpt_id in ids:
            ckpt = self.get_checkpoint(ckpt_id)
            out.append(
                {
                    "id": ckpt_id,
                    "kind": ckpt.config.kind,
                    "config": ckpt.config.to_dict(),
                    "parameters": ckpt.params.total_size(),
                }
            )
        return out

    # -- sessions

    def _recover_sessions(self) -> None:
        for session_id in sorted(os.listdir(self.sessions_dir)):
            directory = os.path.join(self.sessions_dir, session_id)
            meta_path = os.path.join(directory, "session.json")
            if not os.path.isfile(meta_path):
                continue
            with open(meta_path, "r", encoding="utf-8") as fh:
                meta = json.load(fh)
            flat_roi = ROI.from_dict(meta["flat_roi"]) if meta.get("flat_roi") else None
            session = SessionState(
                session_id,
                directory,
                meta["checkpoint"],
                meta.get("has_clean", False),
                flat_roi,
            )
            try:
                curve = load_curve(session.curve_dir)
            except FormatError:
                curve = None
            if curve is not None:
                # in-flight sweeps did not survive the restart
                changed = False
                for direction, status in curve.direction_status.items():
                    if status == STATUS_BUILDING:
                        curve.direction_status[direction] = STATUS_FAILED
                        changed = True
                if changed:
                    save_curve(curve, session.curve_dir)
                session.curve = curve
            self.sessions[session_id] = session

    def get_session(self, session_id: str) -> SessionState:
        session = self.sessions.get(session_id)
        if session is None:
            raise HTTPException(404, f"unknown session {session_id!r}")
        return session


def _decode_image_field(payload: dict, field: str):
    encoded = payload.get(field)
    if encoded is None:
        return None
    try:
        raw = base64.b64decode(encoded, validate=True)
        image, _ = image_from_bytes(raw)
        return image
    except (ValueError, FormatError) as exc:
        raise HTTPException(400, f"malformed {field}: {exc}")


def _roi_from_payload(d: dict, default_label: str = "roi") -> ROI:
    try:
        return ROI.from_dict({**d, "label": d.get("label", default_label)})
    except (KeyError, TypeError, ValueError) as exc:
        raise HTTPException(400, f"invalid ROI: {exc}")


def create_app(ckpt_dir: str, state_dir: str) -> FastAPI:
    app = FastAPI(title="nrtw", version="1")
    state = WorkbenchState(ckpt_dir, state_dir)
    app.state.workbench = state

    # -- checkpoint registry

    @app.get(f"{API_PREFIX}/checkpoints")
    def list_checkpoints():
        return {"checkpoints": state.list_checkpoints()}

    @app.post(f"{API_PREFIX}/checkpoints", status_code=201)
    def register_checkpoint(
        body: bytes = Body(..., media_type="application/octet-stream"),
        id: Optional[str] = Query(None),
    ):
        ckpt_id = state.register_checkpoint(body, id)
        return {"id": ckpt_id}

    # -- sessions

    @app.post(f"{API_PREFIX}/sessions", status_code=201)
    def create_session(payload: dict = Body(...)):
        ckpt_id = payload.get("checkpoint")
        if not ckpt_id:
            raise HTTPException(400, "missing checkpoint id")
        ckpt = state.get_checkpoint(ckpt_id)

        clean = _decode_image_field(payload, "clean_b64")
        image = _decode_image_field(payload, "image_b64")
        if image is None and "phantom" in payload:
            spec_dict = payload["phantom"].get("spec")
            try:
                spec = (
                    PhantomSpec.from_dict(spec_dict)
                    if spec_dict
                    else PhantomSpec()
                )
                seed = int(payload["phantom"].get("seed", 0))
                sigma = float(payload["phantom"].get("sigma", 25.0))
                clean = generate_phantom(spec, seed=seed)
                sample = add_noise(clean, NoiseSpec(sigma=sigma, seed=seed))
                image = sample.noisy
            except (ValueError, KeyError) as exc:
                raise HTTPException(400, f"invalid phantom spec: {exc}")
        if image is None:
            raise HTTPException(400, "provide image_b64 or a phantom spec")

        flat_roi = None
        if payload.get("flat_roi"):
            flat_roi = _roi_from_payload(payload["flat_roi"], "flat")

        session_id = uuid.uuid4().hex[:12]
        directory = os.path.join(state.sessions_dir, session_id)
        os.makedirs(directory, exist_ok=True)
        with open(os.path.join(directory, "input.img"), "wb") as fh:
            fh.write(image_to_bytes(image))
        if clean is not None:
            with open(os.path.join(directory, "clean.img"), "wb") as fh:
                fh.write(image_to_bytes(clean))
        with open(os.path.join(directory, "session.json"), "w", encoding="utf-8") as fh:
            json.dump(
                {
                    "checkpoint": ckpt_id,
                    "has_clean": clean is not None,
                    "flat_roi": flat_roi.to_dict() if flat_roi else None,
                },
                fh,
            )

        session = SessionState(
            session_id, directory, ckpt_id, clean is not None, flat_roi
        )
        state.sessions[session_id] = session

        # candidate 0 is computed eagerly so the first paint needs no sweep
        try:
            curve = _fresh_curve(state, session, image, clean)
        except (ValueError, NrtwError) as exc:
            raise HTTPException(400, f"cannot build session: {exc}")
        with session.lock:
            session.curve = curve
        save_curve(curve, session.curve_dir)
        return {
            "id": session_id,
            "checkpoint": ckpt_id,
            "candidate0": _candidate_meta(curve.candidates[0]),
            "curve": _curve_summary(session),
        }

    @app.get(f"{API_PREFIX}/sessions/{{session_id}}/curve")
    def get_curve(session_id: str):
        session = state.get_session(session_id)
        return _curve_summary(session)

    @app.post(f"{API_PREFIX}/sessions/{{session_id}}/sweeps", status_code=202)
    def start_sweep(session_id: str, payload: dict = Body(default={})):
        session = state.get_session(session_id)
        direction = payload.get("direction")
        if direction not in sweeps_mod.DIRECTIONS:
            raise HTTPException(
                400,
                f"direction must be one of {list(sweeps_mod.DIRECTIONS)}, got {direction!r}",
            )
        overrides = payload.get("config") or {}
        try:
            config = SweepConfig.from_dict({**SweepConfig().to_dict(), **overrides})
        except (TypeError, ValueError) as exc:
            raise HTTPException(400, f"invalid sweep config: {exc}")

        with session.lock:
            thread = session.threads.get(direction)
            if thread is not None and thread.is_alive():
                raise HTTPException(
                    409, f"a {direction} sweep is already running for this session"
                )
            if session.curve is not None:
                session.curve.direction_status[direction] = STATUS_BUILDING
            cancel = threading.Event()
            session.cancels[direction] = cancel
            thread = threading.Thread(
                target=_run_sweep,
                args=(state, session, direction, config, cancel),
                daemon=True,
            )
            session.threads[direction] = thread
        thread.start()
        return {
            "direction": direction,
            "status": STATUS_BUILDING,
            "poll": f"{API_PREFIX}/sessions/{session_id}/curve",
        }

    @app.delete(f"{API_PREFIX}/sessions/{{session_id}}/sweeps/{{direction}}")
    def cancel_sweep(session_id: str, direction: str):
        session = state.get_session(session_id)
        if direction not in sweeps_mod.DIRECTIONS:
            raise HTTPException(400, f"unknown direction {direction!r}")
        with session.lock:
            thread = session.threads.get(direction)
            cancel = session.cancels.get(direction)
            if thread is None or not thread.is_alive() or cancel is None:
                raise HTTPException(409, f"no {direction} sweep is running")
            cancel.set()
        thread.join(timeout=120)
        return {"direction": direction, "status": session.direction_status(direction)}

    @app.get(f"{API_PREFIX}/sessions/{{session_id}}/candidates/{{index}}")
    def get_candidate(
        session_id: str,
        index: int,
        format: str = Query("raw"),
        window_low: float = Query(-160.0),
        window_high: float = Query(240.0),
    ):
        session = state.get_session(session_id)
        cand = _get_candidate(session, index)
        if format == "raw":
            return Response(
                content=image_to_bytes(cand.image),
                media_type="application/octet-stream",
            )
        if format == "windowed-8bit":
            try:
                gray = window_to_bytes(cand.image, window_low, window_high)
            except ValueError as exc:
                raise HTTPException(400, str(exc))
            return Response(content=to_png_bytes(gray), media_type="image/png")
        raise HTTPException(400, f"format must be raw or windowed-8bit, got {format!r}")

    @app.post(f"{API_PREFIX}/sessions/{{session_id}}/candidates/{{index}}/metrics")
    def candidate_metrics(session_id: str, index: int, payload: dict = Body(...)):
        session = state.get_session(session_id)
        cand = _get_candidate(session, index)
        image = cand.image
        record = MetricsRecord()
        rois: dict[str, ROI] = {}
        for i, roi_dict in enumerate(payload.get("rois", [])):
            roi = _roi_from_payload(roi_dict, f"roi{i}")
            rois[roi.label] = roi
        response: dict = {}
        try:
            for label, roi in rois.items():
                record.roi_std[label] = roi_std(image, roi)
            cnr_spec = payload.get("cnr")
            if cnr_spec:
                fg = rois.get(cnr_spec.get("foreground"))
                bg = rois.get(cnr_spec.get("background"))
                if fg is None or bg is None:
                    raise HTTPException(
                        400, "cnr foreground/background must name provided ROIs"
                    )
                record.cnr = cnr(image, fg, bg)
            edge_label = payload.get("edge_roi")
            if edge_label:
                edge = rois.get(edge_label)
                if edge is None:
                    raise HTTPException(400, "edge_roi must name a provided ROI")
                record.resolution_proxy = resolution_proxy(image, edge)
        except DegenerateCnrError as exc:
            raise HTTPException(422, f"degenerate CNR: {exc}")
        except ValueError as exc:
            raise HTTPException(400, str(exc))

        clean_path = os.path.join(session.directory, "clean.img")
        if os.path.isfile(clean_path):
            from .formats import read_image

            clean, _ = read_image(clean_path)
            record.rmse = rmse(image, clean)
        else:
            response["rmse_unavailable"] = True
        response.update(record.to_dict())
        return response

    return app


def _fresh_curve(state, session, image, clean) -> NRTCurve:
    """Curve containing only candidate 0, built eagerly at session creation."""
    ckpt = state.get_checkpoint(session.checkpoint_id)
    return build_nrt_curve(
        ckpt,
        image,
        SweepConfig(),
        clean=clean,
        flat_roi=session.flat_roi,
        directions=(),
    )


def _run_sweep(state, session, direction, config, cancel) -> None:
    ckpt = state.get_checkpoint(session.checkpoint_id)
    from .formats import read_image

    image, _ = read_image(os.path.join(session.directory, "input.img"))
    clean = None
    clean_path = os.path.join(session.directory, "clean.img")
    if os.path.isfile(clean_path):
        clean, _ = read_image(clean_path)

    with session.lock:
        curve = session.curve
    bounds = curve.bounds
    target = bounds.t_low if direction == sweeps_mod.LOW else bounds.t_high
    sign = 1 if direction == sweeps_mod.LOW else -1

    def annotate_and_publish(cand) -> None:
        if cand.signed_index == 0:
            return
        cand.distance_to_t_low = rmse(cand.image, bounds.t_low)
        cand.distance_to_t_high = rmse(cand.image, bounds.t_high)
        record = MetricsRecord()
        if clean is not None:
            record.rmse = rmse(cand.image, clean)
        if session.flat_roi is not None:
            record.roi_std[session.flat_roi.label] = roi_std(
                cand.image, session.flat_roi
            )
        cand.metrics = record
        with session.lock:
            curve.candidates[cand.signed_index] = cand
            save_curve(curve, session.curve_dir)

    try:
        result = sweeps_mod.sweep(
            ckpt,
            image,
            target,
            config,
            sign,
            on_candidate=annotate_and_publish,
            cancel=cancel,
        )
        status = result.status
    except Exception:
        status = STATUS_FAILED
    with session.lock:
        curve.direction_status[direction] = status
        save_curve(curve, session.curve_dir)


def _curve_summary(session) -> dict:
    with session.lock:
        curve = session.curve
        if curve is None:
            return {
                "indices": [],
                "directions": {d: STATUS_IDLE for d in sweeps_mod.DIRECTIONS},
                "candidates": {},
            }
        indices = sorted(curve.candidates)
        return {
            "indices": indices,
            "min_index": indices[0],
            "max_index": indices[-1],
            "status": curve.status,
            "directions": dict(curve.direction_status),
            "k": curve.bounds.k,
            "candidates": {
                str(j): _candidate_meta(curve.candidates[j]) for j in indices
            },
        }


def _get_candidate(session, index: int):
    with session.lock:
        curve = session.curve
        if curve is None or index not in curve.candidates:
            if curve is None or not curve.candidates:
                detail = "curve has no candidates yet"
            else:
                lo, hi = min(curve.candidates), max(curve.candidates)
                detail = (
                    f"candidate {index} not found; available range [{lo}, {hi}]"
                )
            raise HTTPException(404, detail)
        return curve.candidates[index]
