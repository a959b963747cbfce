"""Command-line front end: guided synthetic calibrations and experiments.

Subcommands
-----------
calibrate-synthetic
    Sample a ground-truth camera, run a guided session with a perfect-pose
    actor, and write the calibration result, the held-out estimation error,
    and a per-frame index-of-dispersion CSV.
correlation
    Run the pose-strategy / parameter-uncertainty study and write one CSV per
    layout (row per camera x frame-index x parameter: value, sigma, iod) plus
    a JSON summary.
compactness
    Run a guided session, then greedy key-frame compaction against a fresh
    test set; report both frame counts and estimation errors.
serve
    Start the HTTP guidance service.

Exit codes: 0 success, 1 runtime failure, 2 usage error. All output files are
written atomically (temp file + rename). A JSON config file may supply any
flag value; explicit flags win.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .geometry import PARAM_NAMES, IntrinsicParams
from .synth import (
    default_real_camera,
    estimation_error,
    greedy_compact,
    make_test_set,
    run_correlation_experiment,
    run_guided_session,
    sample_camera,
)

logger = logging.getLogger(__name__)


@dataclass
class RunConfig:
    """Resolved settings for one command invocation."""

    seed: int = 0
    noise_sigma: float = 1.0
    convergence_threshold: float = 0.1
    deviation: float = 0.1
    cameras: int = 20
    layout: str | None = None
    out: Path = field(default_factory=lambda: Path("out"))
    camera_overrides: dict[str, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not 0.0 < self.convergence_threshold <= 1.0:
            raise ValueError("convergence threshold must be in (0, 1]")
        if self.noise_sigma < 0:
            raise ValueError("noise sigma must be non-negative")
        if self.deviation < 0:
            raise ValueError("deviation must be non-negative")
        if self.cameras < 1:
            raise ValueError("cameras must be positive")

    def real_intrinsics(self) -> IntrinsicParams:
        base = default_real_camera().intrinsics
        if not self.camera_overrides:
            return base
        unknown = set(self.camera_overrides) - set(PARAM_NAMES)
        if unknown:
            raise ValueError(f"unknown camera overrides: {sorted(unknown)}")
        arr = base.to_array()
        for name, value in self.camera_overrides.items():
            arr[PARAM_NAMES.index(name)] = float(value)
        return IntrinsicParams.from_array(arr)


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    _atomic_write(path, buf.getvalue())


def _resolve_config(args: argparse.Namespace) -> RunConfig:
    settings: dict = {}
    if args.config is not None:
        with open(args.config) as fh:
            settings.update(json.load(fh))
        allowed = {"seed", "noise", "threshold", "deviation", "cameras", "layout", "out", "camera"}
        unknown = sorted(set(settings) - allowed)
        if unknown:
            raise ValueError(f"unknown config keys: {', '.join(unknown)}")
    for key in ("seed", "noise", "threshold", "deviation", "cameras", "layout", "out"):
        value = getattr(args, key, None)
        if value is not None:
            settings[key] = value
    return RunConfig(
        seed=int(settings.get("seed", 0)),
        noise_sigma=float(settings.get("noise", 1.0)),
        convergence_threshold=float(settings.get("threshold", 0.1)),
        deviation=float(settings.get("deviation", 0.1)),
        cameras=int(settings.get("cameras", 20)),
        layout=settings.get("layout"),
        out=Path(settings.get("out", "out")),
        camera_overrides=dict(settings.get("camera", {})),
    )


def cmd_calibrate_synthetic(config: RunConfig) -> int:
    cam = sample_camera(config.real_intrinsics(), config.deviation, seed=config.seed)
    result = run_guided_session(
        cam,
        noise_sigma=config.noise_sigma,
        convergence_threshold=config.convergence_threshold,
        seed=config.seed,
    )
    if not result.converged or result.state.estimate is None:
        logger.error("session did not converge after %d frames", result.frames_used)
        return 1
    test = make_test_set(cam, 50, config.noise_sigma, seed=config.seed + 90001)
    eps = estimation_error(result.state.estimate.intrinsics, test)
    payload = {
        "calibration": result.state.estimate.to_dict(),
        "frames_used": result.frames_used,
        "estimation_error_px": eps,
        "ground_truth": dict(zip(PARAM_NAMES, cam.intrinsics.to_array().tolist())),
    }
    _atomic_write(config.out / "calibration.json", json.dumps(payload, indent=2) + "\n")
    rows = [
        [i + 1, PARAM_NAMES[j], f"{iod[j]:.9g}"]
        for i, iod in enumerate(result.iod_history)
        for j in range(len(PARAM_NAMES))
    ]
    _write_csv(config.out / "iod.csv", ["frame", "parameter", "iod"], rows)
    print(f"converged in {result.frames_used} frames, estimation error {eps:.4f} px")
    return 0


def cmd_correlation(config: RunConfig) -> int:
    layouts = [config.layout] if config.layout else ["KFirst", "DistFirst"]
    summary: dict = {"n_cameras": config.cameras, "layouts": {}}
    for layout in layouts:
        result = run_correlation_experiment(
            n_cameras=config.cameras,
            layout=layout,
            seed=config.seed,
            c_real=config.real_intrinsics(),
            deviation=config.deviation,
            noise_sigma=config.noise_sigma,
        )
        rows = []
        for ci in range(result.sigma_traces.shape[0]):
            for fi, frame in enumerate(result.frame_index):
                for pj, name in enumerate(PARAM_NAMES):
                    rows.append(
                        [
                            ci,
                            int(frame),
                            name,
                            f"{result.value_traces[ci, fi, pj]:.9g}",
                            f"{result.sigma_traces[ci, fi, pj]:.9g}",
                            f"{result.iod_traces[ci, fi, pj]:.9g}",
                        ]
                    )
        _write_csv(
            config.out / f"correlation_{layout.lower()}.csv",
            ["camera", "frames", "parameter", "value", "sigma", "iod"],
            rows,
        )
        first_phase = result.sigma_mean[0] - result.sigma_mean[8]
        second_phase = result.sigma_mean[8] - result.sigma_mean[-1]
        summary["layouts"][layout] = {
            "n_failed": result.n_failed,
            "sigma_drop_frames_3_10": dict(zip(PARAM_NAMES, first_phase.tolist())),
            "sigma_drop_frames_11_20": dict(zip(PARAM_NAMES, second_phase.tolist())),
        }
    _atomic_write(
        config.out / "correlation_summary.json", json.dumps(summary, indent=2) + "\n"
    )
    print(f"wrote correlation data for {', '.join(layouts)} to {config.out}")
    return 0


def cmd_compactness(config: RunConfig) -> int:
    cam = sample_camera(config.real_intrinsics(), config.deviation, seed=config.seed)
    session = run_guided_session(
        cam,
        noise_sigma=config.noise_sigma,
        convergence_threshold=config.convergence_threshold,
        seed=config.seed,
    )
    if not session.converged or session.state.estimate is None:
        logger.error("session did not converge after %d frames", session.frames_used)
        return 1
    test = make_test_set(cam, 50, config.noise_sigma, seed=config.seed + 90002)
    full_eps = estimation_error(session.state.estimate.intrinsics, test)
    compact = greedy_compact(
        list(session.state.keyframes),
        test,
        session.state.working_intrinsics(),
        image_size=cam.image_size,
    )
    report = {
        "full_frames": session.frames_used,
        "full_estimation_error_px": full_eps,
        "compact_frames": compact.n_selected,
        "compact_estimation_error_px": compact.error_trace[-1],
        "selected_indices": compact.selected_indices,
        "error_trace": compact.error_trace,
    }
    _atomic_write(config.out / "compactness.json", json.dumps(report, indent=2) + "\n")
    print(
        f"full session: {report['full_frames']} frames at {full_eps:.4f} px; "
        f"compacted: {compact.n_selected} frames at {compact.error_trace[-1]:.4f} px"
    )
    return 0


def cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from .service import create_app

    uvicorn.run(create_app(), host=args.host, port=args.port)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="calibguide",
        description=__doc__,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", type=Path, help="JSON config file; flags override it")
        p.add_argument("--seed", type=int, help="master random seed (default 0)")
        p.add_argument("--noise", type=float, help="pixel noise sigma (default 1.0)")
        p.add_argument(
            "--threshold", type=float, help="variance-reduction threshold (default 0.1)"
        )
        p.add_argument(
            "--deviation", type=float, help="camera sampling spread (default 0.1)"
        )
        p.add_argument("--out", type=Path, help="output directory (default ./out)")

    p = sub.add_parser(
        "calibrate-synthetic",
        help="guided session against a sampled virtual camera",
    )
    add_common(p)

    p = sub.add_parser(
        "correlation", help="pose strategy vs. parameter uncertainty study"
    )
    add_common(p)
    p.add_argument("--cameras", type=int, help="number of sampled cameras (default 20)")
    p.add_argument(
        "--layout",
        choices=["KFirst", "DistFirst"],
        help="restrict to one phase ordering (default: run both)",
    )

    p = sub.add_parser("compactness", help="greedy key-frame subset selection report")
    add_common(p)

    p = sub.add_parser("serve", help="run the HTTP guidance service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "serve":
            return cmd_serve(args)
        config = _resolve_config(args)
    except (ValueError, OSError, json.JSONDecodeError) as exc:
        parser.exit(2, f"{parser.prog}: error: {exc}\n")
    try:
        if args.command == "calibrate-synthetic":
            return cmd_calibrate_synthetic(config)
        if args.command == "correlation":
            return cmd_correlation(config)
        return cmd_compactness(config)
    except Exception:
        logger.exception("%s failed", args.command)
        return 1


if __name__ == "__main__":
    sys.exit(main())
