/** Shared domain types mirroring the server's wire formats. */

export const UNLABELED = -1;

export type Phase = "seeding" | "training" | "reviewing" | "finalized";

export enum Provenance {
  None = 0,
  Predicted = 1,
  Grown = 2,
  Seed = 3,
  Corrected = 4,
}

export interface Snapshot {
  sessionId: string;
  phase: Phase;
  round: number;
  numClasses: number;
  nPoints: number;
  clicksTotal: number;
  /** xyz triples, length 3 * nPoints */
  positions: Float32Array;
  /** class id per point, UNLABELED (-1) when unassigned */
  labels: Int32Array;
  /** Provenance value per point */
  provenance: Uint8Array;
  metrics?: { accuracy: number; miou: number };
}

export interface CloudInfo {
  cloud_id: string;
  n_points: number;
  has_ground_truth: boolean;
}

export interface SessionEvent {
  event: "progress" | "trained" | "finalized" | "error";
  data: Record<string, unknown>;
}

export type RGB = [number, number, number];
