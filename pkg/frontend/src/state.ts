import { ApiClient } from "./api.js";
import { Phase, SessionEvent, Snapshot } from "./types.js";

export interface SeedClick {
  pointId: number;
  classId: number;
}

export interface StoreView {
  phase: Phase | "idle";
  clicks: number;
  round: number;
  pendingSeeds: SeedClick[];
  snapshot: Snapshot | null;
  training: boolean;
  lastError: string | null;
  progress: { epoch: number; loss: number } | null;
}

type Listener = (view: StoreView) => void;

/**
 * Client-side session state. Invariant: the displayed click counter always
 * equals the server's accepted click total plus locally pending (not yet
 * submitted) seed clicks. Rejected requests never change the counter.
 */
export class SessionStore {
  private sessionId: string | null = null;
  private serverClicks = 0;
  private pendingSeeds: SeedClick[] = [];
  private snapshot: Snapshot | null = null;
  private phase: Phase | "idle" = "idle";
  private round = 0;
  private training = false;
  private lastError: string | null = null;
  private progress: { epoch: number; loss: number } | null = null;
  private listeners: Listener[] = [];

  constructor(private readonly api: ApiClient) {}

  subscribe(fn: Listener): () => void {
    this.listeners.push(fn);
    fn(this.view());
    return () => {
      this.listeners = this.listeners.filter((l) => l !== fn);
    };
  }

  view(): StoreView {
    return {
      phase: this.phase,
      clicks: this.serverClicks + this.pendingSeeds.length,
      round: this.round,
      pendingSeeds: [...this.pendingSeeds],
      snapshot: this.snapshot,
      training: this.training,
      lastError: this.lastError,
      progress: this.progress,
    };
  }

  private notify(): void {
    const v = this.view();
    for (const fn of this.listeners) fn(v);
  }

  async open(cloudId: string, numClasses: number): Promise<void> {
    const created = await this.api.createSession(cloudId, numClasses);
    this.sessionId = created.session_id;
    this.serverClicks = 0;
    this.pendingSeeds = [];
    this.round = 0;
    this.lastError = null;
    await this.refresh();
  }

  get id(): string | null {
    return this.sessionId;
  }

  async refresh(): Promise<void> {
    if (this.sessionId === null) return;
    const snap = await this.api.getSnapshot(this.sessionId);
    this.snapshot = snap;
    this.phase = snap.phase;
    this.round = snap.round;
    this.serverClicks = snap.clicksTotal;
    this.notify();
  }

  /** Stage a seed locally; it is submitted in one batch by startTraining. */
  placeSeed(pointId: number, classId: number): void {
    if (this.phase !== "seeding") {
      this.lastError = `cannot seed in phase ${this.phase}`;
      this.notify();
      return;
    }
    if (this.pendingSeeds.some((s) => s.pointId === pointId)) {
      this.lastError = `point ${pointId} already seeded`;
      this.notify();
      return;
    }
    this.pendingSeeds.push({ pointId, classId });
    this.lastError = null;
    this.notify();
  }

  removePendingSeed(pointId: number): void {
    this.pendingSeeds = this.pendingSeeds.filter((s) => s.pointId !== pointId);
    this.notify();
  }

  /** Submit staged seeds (if any), then kick off a training round. */
  async startTraining(): Promise<void> {
    if (this.sessionId === null) throw new Error("no open session");
    try {
      if (this.pendingSeeds.length > 0) {
        const batch: Array<[number, number]> = this.pendingSeeds.map((s) => [
          s.pointId,
          s.classId,
        ]);
        const resp = await this.api.submitSeeds(this.sessionId, batch);
        // server accepted: its total now includes the batch
        this.serverClicks = resp.clicks_total;
        this.pendingSeeds = [];
        this.phase = resp.phase as Phase;
      }
      await this.api.train(this.sessionId);
      this.training = true;
      this.progress = null;
      this.lastError = null;
    } catch (e) {
      this.lastError = e instanceof Error ? e.message : String(e);
    }
    this.notify();
  }

  /** One correction gesture = one server call; counter moves only on accept. */
  async correct(pointId: number, classId: number, grow = false): Promise<void> {
    if (this.sessionId === null) throw new Error("no open session");
    try {
      const resp = await this.api.submitCorrections(this.sessionId, [
        { point_id: pointId, class_id: classId, grow },
      ]);
      this.serverClicks = resp.clicks_total;
      this.lastError = null;
      await this.refresh();
    } catch (e) {
      this.lastError = e instanceof Error ? e.message : String(e);
      this.notify();
    }
  }

  async finalize(): Promise<void> {
    if (this.sessionId === null) throw new Error("no open session");
    try {
      await this.api.finalize(this.sessionId);
      this.lastError = null;
      await this.refresh();
    } catch (e) {
      this.lastError = e instanceof Error ? e.message : String(e);
      this.notify();
    }
  }

  /** Apply a server-sent event to the local state. */
  handleEvent(ev: SessionEvent): void {
    switch (ev.event) {
      case "progress":
        this.progress = {
          epoch: Number(ev.data["epoch"] ?? 0),
          loss: Number(ev.data["loss"] ?? NaN),
        };
        this.notify();
        break;
      case "trained":
        this.training = false;
        this.progress = null;
        void this.refresh();
        break;
      case "finalized":
        this.training = false;
        void this.refresh();
        break;
      case "error":
        this.training = false;
        this.lastError = String(ev.data["error"] ?? "training failed");
        this.notify();
        break;
    }
  }
}
