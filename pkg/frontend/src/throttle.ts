/** Rate-limited pose submission.
 *
 * Collapses a stream of pose updates to at most one in-flight request per
 * interval (30 Hz by default); the newest pending pose always wins.
 */

import type { PoseArray } from "./types";

export type SubmitFn = (pose: PoseArray) => Promise<void>;

export interface ThrottleClock {
  now: () => number;
  setTimeout: (fn: () => void, ms: number) => unknown;
}

const wallClock: ThrottleClock = {
  now: () => Date.now(),
  setTimeout: (fn, ms) => setTimeout(fn, ms)
};

export class PoseThrottle {
  private lastSent = -Infinity;
  private pending: PoseArray | null = null;
  private timerArmed = false;
  private inFlight = false;

  constructor(
    private readonly submit: SubmitFn,
    private readonly intervalMs = 1000 / 30,
    private readonly clock: ThrottleClock = wallClock
  ) {}

  /** Queue a pose; it is sent now if the interval allows, later otherwise. */
  push(pose: PoseArray): void {
    this.pending = pose;
    this.drain();
  }

  /** Idle safety: with no queued pose nothing is ever submitted. */
  get hasPending(): boolean {
    return this.pending !== null;
  }

  private drain(): void {
    if (this.pending === null || this.inFlight) {
      return;
    }
    const wait = this.lastSent + this.intervalMs - this.clock.now();
    if (wait > 0) {
      if (!this.timerArmed) {
        this.timerArmed = true;
        this.clock.setTimeout(() => {
          this.timerArmed = false;
          this.drain();
        }, wait);
      }
      return;
    }
    const pose = this.pending;
    this.pending = null;
    this.lastSent = this.clock.now();
    this.inFlight = true;
    void this.submit(pose).finally(() => {
      this.inFlight = false;
      this.drain();
    });
  }
}
