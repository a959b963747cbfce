"""HTTP guidance service: a live guided-calibration session over JSON + SSE.

The service hosts a virtual camera rig (hidden ground truth, user-steered
board pose) so clients stay purely presentational: they submit 6-DOF board
poses and render the returned guidance snapshots. All calibration decisions
are delegated to the session module; the service adds observation rendering
and transport only.

Endpoints (all under /v1):
    POST /session                  create a session, returns id + image size
    GET  /session/{id}             current guidance snapshot
    POST /session/{id}/board-pose  move the board; may capture a keyframe
    GET  /session/{id}/events      server-sent stream of every state change
"""

from __future__ import annotations

import json
import queue
import threading
import uuid
from dataclasses import dataclass, field

import numpy as np
from fastapi import FastAPI, HTTPException
from fastapi.responses import StreamingResponse
from pydantic import BaseModel

from .calibrate import FrameObservation
from .geometry import PARAM_NAMES, BoardGeometry, BoardPose, project_points
from .session import (
    Phase,
    SessionConfig,
    SessionState,
    submit_frame,
)
from .synth import DEFAULT_IMAGE_SIZE, GroundTruthCamera, sample_camera, default_real_camera


class SessionCreate(BaseModel):
    seed: int = 0
    noise: float = 1.0
    threshold: float = 0.1
    deviation: float = 0.1


class BoardPoseBody(BaseModel):
    pose: list[float]


@dataclass
class VirtualRig:
    """Server-side stand-in for the physical camera and hand-held board.

    Noise is drawn per corner id on every submission and shared between the
    current and previous renders, so the stillness gate measures board motion
    rather than detector jitter.
    """

    camera: GroundTruthCamera
    noise_sigma: float
    rng: np.random.Generator
    board: BoardGeometry
    previous_pose: BoardPose | None = None

    def _render(self, pose: BoardPose, noise: np.ndarray) -> FrameObservation | None:
        pix = project_points(self.board.object_points(), pose, self.camera.intrinsics)
        w, h = self.camera.image_size
        inside = (pix[:, 0] >= 0) & (pix[:, 0] < w) & (pix[:, 1] >= 0) & (pix[:, 1] < h)
        ids = np.flatnonzero(inside)
        if len(ids) == 0:
            return None
        return FrameObservation(ids, pix[inside] + noise[inside])

    def observe(
        self, pose: BoardPose
    ) -> tuple[FrameObservation | None, FrameObservation | None]:
        """Render (current, previous) observations for a newly set pose."""
        n_corners = len(self.board.object_points())
        noise = self.rng.normal(0.0, self.noise_sigma, (n_corners, 2))
        current = self._render(pose, noise)
        previous = (
            self._render(self.previous_pose, noise)
            if self.previous_pose is not None
            else current
        )
        self.previous_pose = pose
        return current, previous


@dataclass
class SessionHandle:
    rig: VirtualRig
    state: SessionState
    lock: threading.Lock = field(default_factory=threading.Lock)
    history: list[dict] = field(default_factory=list)
    subscribers: list[queue.SimpleQueue] = field(default_factory=list)
    last_verdict: dict | None = None

    def snapshot(self) -> dict:
        state = self.state
        board_polygon = None
        if self.rig.previous_pose is not None:
            pix = project_points(
                self.rig.board.outer_corners(),
                self.rig.previous_pose,
                self.rig.camera.intrinsics,
            )
            board_polygon = pix.tolist()
        snap = {
            "phase": state.phase.value,
            "frames_captured": len(state.keyframes),
            "image_size": list(state.config.image_size),
            "target": state.current_target.to_dict() if state.current_target else None,
            "board_polygon": board_polygon,
            "iod": state.estimate.iod.tolist() if state.estimate else None,
            "converged_mask": list(state.converged_mask),
            "estimate": state.estimate.to_dict() if state.estimate else None,
            "last_verdict": self.last_verdict,
        }
        if state.phase is Phase.CONVERGED:
            snap["ground_truth"] = dict(
                zip(PARAM_NAMES, self.rig.camera.intrinsics.to_array().tolist())
            )
        return snap

    def publish(self) -> dict:
        snap = self.snapshot()
        self.history.append(snap)
        for sub in self.subscribers:
            sub.put(snap)
        return snap


def create_app() -> FastAPI:
    app = FastAPI(title="calibguide guidance service")
    sessions: dict[str, SessionHandle] = {}

    def get_session(session_id: str) -> SessionHandle:
        handle = sessions.get(session_id)
        if handle is None:
            raise HTTPException(status_code=404, detail="unknown session")
        return handle

    @app.post("/v1/session", status_code=201)
    def create_session(body: SessionCreate) -> dict:
        if not 0.0 < body.threshold <= 1.0:
            raise HTTPException(400, "threshold must be in (0, 1]")
        if body.noise < 0:
            raise HTTPException(400, "noise must be non-negative")
        if body.deviation < 0:
            raise HTTPException(400, "deviation must be non-negative")
        camera = sample_camera(
            default_real_camera().intrinsics, body.deviation, seed=body.seed
        )
        board = BoardGeometry()
        rig = VirtualRig(
            camera=camera,
            noise_sigma=body.noise,
            rng=np.random.default_rng(body.seed + 0x5EED),
            board=board,
        )
        config = SessionConfig(
            convergence_threshold=body.threshold, image_size=camera.image_size
        )
        handle = SessionHandle(rig=rig, state=SessionState.new(config, board))
        session_id = uuid.uuid4().hex
        sessions[session_id] = handle
        with handle.lock:
            handle.publish()
        return {"id": session_id, "image_size": list(camera.image_size)}

    @app.get("/v1/session/{session_id}")
    def get_snapshot(session_id: str) -> dict:
        handle = get_session(session_id)
        with handle.lock:
            return handle.snapshot()

    @app.post("/v1/session/{session_id}/board-pose")
    def set_board_pose(session_id: str, body: BoardPoseBody) -> dict:
        handle = get_session(session_id)
        if len(body.pose) != 6:
            raise HTTPException(422, "pose must have 6 components (rvec + tvec)")
        pose = BoardPose.from_array(np.asarray(body.pose, dtype=np.float64))
        with handle.lock:
            camera_z = (
                pose.rotation_matrix() @ handle.rig.board.object_points().T
            ).T[:, 2] + pose.tvec[2]
            if np.any(camera_z <= 0):
                raise HTTPException(422, "pose places the board behind the camera")
            current, previous = handle.rig.observe(pose)
            if current is None:
                handle.last_verdict = {
                    "accepted": False,
                    "reason": "board outside view",
                    "jaccard": 0.0,
                }
                return handle.publish()
            new_state, verdict = submit_frame(handle.state, current, previous)
            handle.state = new_state
            handle.last_verdict = {
                "accepted": verdict.accepted,
                "reason": verdict.reason.value,
                "jaccard": verdict.jaccard,
            }
            return handle.publish()

    @app.get("/v1/session/{session_id}/events")
    def stream_events(session_id: str, max_events: int | None = None) -> StreamingResponse:
        """Snapshot stream; `max_events` lets scripted clients read a bounded
        prefix instead of holding the connection open."""
        handle = get_session(session_id)
        sub: queue.SimpleQueue = queue.SimpleQueue()
        with handle.lock:
            backlog = list(handle.history)
            handle.subscribers.append(sub)

        def generate():
            sent = 0
            try:
                for snap in backlog:
                    if max_events is not None and sent >= max_events:
                        return
                    yield f"data: {json.dumps(snap)}\n\n"
                    sent += 1
                while max_events is None or sent < max_events:
                    try:
                        snap = sub.get(timeout=30.0)
                    except queue.Empty:
                        yield ": keep-alive\n\n"
                        continue
                    yield f"data: {json.dumps(snap)}\n\n"
                    sent += 1
            finally:
                with handle.lock:
                    if sub in handle.subscribers:
                        handle.subscribers.remove(sub)

        return StreamingResponse(generate(), media_type="text/event-stream")

    return app


app = create_app()
