/** Thin typed client for the guidance service /v1 endpoints. */

import { SseParser } from "./sse";
import { parseSnapshot, type PoseArray, type SessionCreated, type Snapshot } from "./types";

export interface SessionOptions {
  seed?: number;
  noise?: number;
  threshold?: number;
  deviation?: number;
}

export class ApiError extends Error {
  constructor(
    public readonly status: number,
    message: string
  ) {
    super(message);
  }
}

async function expectJson(resp: Response): Promise<unknown> {
  if (!resp.ok) {
    const body = await resp.text().catch(() => "");
    throw new ApiError(resp.status, `HTTP ${resp.status}: ${body}`);
  }
  return resp.json();
}

export class GuidanceClient {
  constructor(
    private readonly baseUrl: string,
    private readonly fetchFn: typeof fetch = fetch
  ) {}

  async createSession(options: SessionOptions = {}): Promise<SessionCreated> {
    const resp = await this.fetchFn(`${this.baseUrl}/v1/session`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(options)
    });
    return (await expectJson(resp)) as SessionCreated;
  }

  async getSnapshot(sessionId: string): Promise<Snapshot> {
    const resp = await this.fetchFn(`${this.baseUrl}/v1/session/${sessionId}`);
    return parseSnapshot(await expectJson(resp));
  }

  async submitPose(sessionId: string, pose: PoseArray): Promise<Snapshot> {
    const resp = await this.fetchFn(
      `${this.baseUrl}/v1/session/${sessionId}/board-pose`,
      {
        method: "POST",
        headers: { "content-type": "application/json" },
        body: JSON.stringify({ pose })
      }
    );
    return parseSnapshot(await expectJson(resp));
  }

  /** Subscribe to the snapshot stream; resolves when the stream ends. */
  async streamEvents(
    sessionId: string,
    onSnapshot: (snapshot: Snapshot) => void,
    signal?: AbortSignal
  ): Promise<void> {
    const resp = await this.fetchFn(
      `${this.baseUrl}/v1/session/${sessionId}/events`,
      { signal }
    );
    if (!resp.ok || resp.body === null) {
      throw new ApiError(resp.status, "event stream unavailable");
    }
    const reader = resp.body.getReader();
    const decoder = new TextDecoder();
    const parser = new SseParser();
    for (;;) {
      const { done, value } = await reader.read();
      if (done) {
        return;
      }
      for (const payload of parser.feed(decoder.decode(value, { stream: true }))) {
        onSnapshot(parseSnapshot(payload));
      }
    }
  }
}
