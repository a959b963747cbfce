/** App state: the last snapshot plus connection status.
 *
 * The UI is stateless beyond this record and the input buffer, so reloading
 * and resubscribing reproduces the identical view.
 */

import type { Snapshot } from "./types";
import { isCaptureEvent } from "./viewmodel";

export type Connection = "connecting" | "open" | "lost";

export interface AppState {
  sessionId: string | null;
  snapshot: Snapshot | null;
  connection: Connection;
  captures: number;
}

export const initialAppState: AppState = {
  sessionId: null,
  snapshot: null,
  connection: "connecting",
  captures: 0
};

export function applySnapshot(state: AppState, snapshot: Snapshot): AppState {
  const captured = isCaptureEvent(state.snapshot, snapshot);
  return {
    ...state,
    snapshot,
    connection: "open",
    captures: state.captures + (captured ? 1 : 0)
  };
}

export function applyConnectionLoss(state: AppState): AppState {
  return { ...state, connection: "lost" };
}
