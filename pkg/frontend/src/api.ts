import { decodeSnapshot } from "./snapshot.js";
import { subscribeEvents } from "./sse.js";
import { CloudInfo, SessionEvent, Snapshot } from "./types.js";

export class ApiError extends Error {
  constructor(
    public readonly status: number,
    message: string,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

async function asJson<T>(resp: Response): Promise<T> {
  if (!resp.ok) {
    let detail = resp.statusText;
    try {
      const body = (await resp.json()) as { error?: string; detail?: string };
      detail = body.error ?? body.detail ?? detail;
    } catch {
      /* non-JSON error body */
    }
    throw new ApiError(resp.status, detail);
  }
  return (await resp.json()) as T;
}

/** Thin typed client for the annotation server's HTTP + SSE API. */
export class ApiClient {
  constructor(
    private readonly baseUrl: string = "",
    private readonly fetchImpl: typeof fetch = fetch,
  ) {}

  private url(path: string): string {
    return `${this.baseUrl}${path}`;
  }

  listClouds(): Promise<CloudInfo[]> {
    return this.fetchImpl(this.url("/clouds")).then((r) => asJson(r));
  }

  addGeneratedCloud(spec: {
    family: string;
    part_count?: number;
    points_n?: number;
    rng_seed?: number;
  }): Promise<CloudInfo> {
    return this.fetchImpl(this.url("/clouds"), {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ generate: spec }),
    }).then((r) => asJson(r));
  }

  addPlyCloud(plyBase64: string, cloudId?: string): Promise<CloudInfo> {
    return this.fetchImpl(this.url("/clouds"), {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ ply_base64: plyBase64, cloud_id: cloudId }),
    }).then((r) => asJson(r));
  }

  createSession(
    cloudId: string,
    numClasses: number,
  ): Promise<{ session_id: string; phase: string; num_classes: number }> {
    return this.fetchImpl(this.url("/sessions"), {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ cloud_id: cloudId, num_classes: numClasses }),
    }).then((r) => asJson(r));
  }

  async getSnapshot(sessionId: string): Promise<Snapshot> {
    const resp = await this.fetchImpl(this.url(`/sessions/${sessionId}`));
    if (!resp.ok) {
      throw new ApiError(resp.status, `snapshot failed: ${resp.status}`);
    }
    return decodeSnapshot(await resp.arrayBuffer());
  }

  submitSeeds(
    sessionId: string,
    seeds: Array<[number, number]>,
  ): Promise<{ phase: string; clicks_total: number }> {
    return this.fetchImpl(this.url(`/sessions/${sessionId}/seeds`), {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ seeds }),
    }).then((r) => asJson(r));
  }

  train(sessionId: string): Promise<{ status: string; round: number }> {
    return this.fetchImpl(this.url(`/sessions/${sessionId}/train`), {
      method: "POST",
    }).then((r) => asJson(r));
  }

  submitCorrections(
    sessionId: string,
    corrections: Array<{ point_id: number; class_id: number; grow?: boolean }>,
  ): Promise<{ phase: string; clicks_total: number }> {
    return this.fetchImpl(this.url(`/sessions/${sessionId}/corrections`), {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ corrections }),
    }).then((r) => asJson(r));
  }

  finalize(sessionId: string): Promise<{ phase: string }> {
    return this.fetchImpl(this.url(`/sessions/${sessionId}/finalize`), {
      method: "POST",
    }).then((r) => asJson(r));
  }

  metrics(sessionId: string): Promise<{
    session_id: string;
    round: number;
    clicks_total: number;
    accuracy: number;
    miou: number;
  }> {
    return this.fetchImpl(this.url(`/metrics/${sessionId}`)).then((r) =>
      asJson(r),
    );
  }

  /** Resolves when the stream closes (after `finalized`). */
  events(
    sessionId: string,
    onEvent: (ev: SessionEvent) => void,
    signal?: AbortSignal,
  ): Promise<void> {
    return subscribeEvents(
      this.url(`/sessions/${sessionId}/events`),
      onEvent,
      this.fetchImpl,
      signal,
    );
  }
}
