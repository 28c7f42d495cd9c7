import { Snapshot, UNLABELED, Phase } from "./types.js";

const UNLABELED_BYTE = 255;

interface SnapshotHeader {
  session_id: string;
  phase: Phase;
  round: number;
  num_classes: number;
  n_points: number;
  clicks_total: number;
  blocks: { positions: number; labels: number; provenance: number };
  metrics?: { accuracy: number; miou: number };
}

/**
 * Decode the server's binary session snapshot: a little-endian u32 JSON
 * header length, the UTF-8 JSON header, then three raw blocks (f32 xyz
 * positions, u8 labels with 255 = unlabeled, u8 provenance).
 */
export function decodeSnapshot(buf: ArrayBuffer): Snapshot {
  if (buf.byteLength < 4) {
    throw new Error("snapshot too short for header length");
  }
  const view = new DataView(buf);
  const headerLen = view.getUint32(0, true);
  if (4 + headerLen > buf.byteLength) {
    throw new Error("snapshot header truncated");
  }
  const headerText = new TextDecoder().decode(new Uint8Array(buf, 4, headerLen));
  const header = JSON.parse(headerText) as SnapshotHeader;
  let off = 4 + headerLen;
  const { positions: posBytes, labels: labBytes, provenance: provBytes } =
    header.blocks;
  if (off + posBytes + labBytes + provBytes !== buf.byteLength) {
    throw new Error("snapshot payload size mismatch");
  }
  // copy the positions block: its offset inside the buffer is not guaranteed
  // to be 4-byte aligned, so a direct Float32Array view can throw
  const positions = new Float32Array(
    buf.slice(off, off + posBytes),
  );
  off += posBytes;
  const labelBytes = new Uint8Array(buf, off, labBytes);
  off += labBytes;
  const provenance = new Uint8Array(buf.slice(off, off + provBytes));

  const labels = new Int32Array(labelBytes.length);
  for (let i = 0; i < labelBytes.length; i++) {
    const b = labelBytes[i]!;
    labels[i] = b === UNLABELED_BYTE ? UNLABELED : b;
  }
  return {
    sessionId: header.session_id,
    phase: header.phase,
    round: header.round,
    numClasses: header.num_classes,
    nPoints: header.n_points,
    clicksTotal: header.clicks_total,
    positions,
    labels,
    provenance,
    metrics: header.metrics,
  };
}
