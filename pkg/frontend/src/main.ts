/** Browser entry point: wires input, the throttled submitter, the event
 * stream and the canvas renderers together. */

import { GuidanceClient } from "./api";
import {
  applyDrag,
  applyInPlaneRotation,
  applyTilt,
  applyWheel,
  initialBoardState,
  toPoseArray,
  type BoardState
} from "./pose";
import { drawIodBars, drawJaccardGauge, drawScene } from "./render";
import { applyConnectionLoss, applySnapshot, initialAppState, type AppState } from "./state";
import { PoseThrottle } from "./throttle";
import type { Snapshot } from "./types";
import { deriveViewModel } from "./viewmodel";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) {
    throw new Error(`missing element #${id}`);
  }
  return node as T;
}

function renderAll(state: AppState): void {
  const banner = el<HTMLDivElement>("banner");
  const counter = el<HTMLDivElement>("frames");
  const revealPanel = el<HTMLDivElement>("reveal");
  if (state.connection === "lost") {
    banner.textContent = "Connection lost — retrying…";
    banner.className = "banner lost";
    return;
  }
  if (!state.snapshot) {
    banner.textContent = "Connecting…";
    return;
  }
  const vm = deriveViewModel(state.snapshot);
  banner.textContent = vm.banner;
  banner.className = vm.acceptFlash ? "banner flash" : "banner";
  counter.textContent = `frames captured: ${vm.framesCaptured}`;
  drawScene(el<HTMLCanvasElement>("scene"), vm, state.snapshot.image_size);
  drawIodBars(el<HTMLCanvasElement>("iod"), vm.bars);
  drawJaccardGauge(el<HTMLCanvasElement>("gauge"), vm.jaccard, vm.jaccardAccepted);
  if (vm.reveal) {
    revealPanel.hidden = false;
    revealPanel.innerHTML =
      "<h3>Estimate vs. ground truth</h3><table><tr><th></th><th>estimate</th><th>truth</th></tr>" +
      vm.reveal
        .map(
          (row) =>
            `<tr><td>${row.name}</td><td>${row.estimate.toPrecision(6)}</td>` +
            `<td>${row.truth.toPrecision(6)}</td></tr>`
        )
        .join("") +
      "</table>";
  }
}

async function start(): Promise<void> {
  const baseUrl = new URLSearchParams(location.search).get("service") ?? "";
  const client = new GuidanceClient(baseUrl);
  let app = initialAppState;
  let board: BoardState = initialBoardState();

  const created = await client.createSession({});
  app = { ...app, sessionId: created.id };

  const throttle = new PoseThrottle(async (pose) => {
    const snapshot = await client.submitPose(created.id, pose);
    app = applySnapshot(app, snapshot);
    renderAll(app);
  });

  const scene = el<HTMLCanvasElement>("scene");
  let dragging = false;
  scene.addEventListener("mousedown", () => {
    dragging = true;
  });
  window.addEventListener("mouseup", () => {
    dragging = false;
  });
  window.addEventListener("mousemove", (ev) => {
    if (!dragging) {
      return;
    }
    board = ev.shiftKey
      ? applyTilt(board, ev.movementX, ev.movementY)
      : applyDrag(board, ev.movementX, ev.movementY);
    throttle.push(toPoseArray(board));
  });
  scene.addEventListener("wheel", (ev) => {
    ev.preventDefault();
    board = applyWheel(board, Math.sign(ev.deltaY));
    throttle.push(toPoseArray(board));
  });
  window.addEventListener("keydown", (ev) => {
    if (ev.key === "q" || ev.key === "e") {
      board = applyInPlaneRotation(board, ev.key === "q" ? 1 : -1);
      throttle.push(toPoseArray(board));
    }
  });

  const subscribe = async (): Promise<void> => {
    try {
      await client.streamEvents(created.id, (snapshot: Snapshot) => {
        app = applySnapshot(app, snapshot);
        renderAll(app);
      });
    } catch {
      app = applyConnectionLoss(app);
      renderAll(app);
    }
    setTimeout(subscribe, 1000);
  };
  void subscribe();
  renderAll(app);
}

start().catch((err) => {
  const banner = document.getElementById("banner");
  if (banner) {
    banner.textContent = `failed to start: ${err}`;
  }
});
