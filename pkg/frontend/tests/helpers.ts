/** Test helpers: encode a snapshot buffer the way the server does. */

export interface EncodeSpec {
  session_id: string;
  phase: string;
  round: number;
  num_classes: number;
  clicks_total: number;
  positions: number[]; // xyz triples
  labels: number[]; // -1 = unlabeled
  provenance: number[];
  metrics?: { accuracy: number; miou: number };
}

export function encodeSnapshot(spec: EncodeSpec): ArrayBuffer {
  const n = spec.labels.length;
  const posBytes = new Uint8Array(new Float32Array(spec.positions).buffer);
  const labBytes = new Uint8Array(n);
  for (let i = 0; i < n; i++) {
    const l = spec.labels[i]!;
    labBytes[i] = l === -1 ? 255 : l;
  }
  const provBytes = new Uint8Array(spec.provenance);
  const header: Record<string, unknown> = {
    session_id: spec.session_id,
    phase: spec.phase,
    round: spec.round,
    num_classes: spec.num_classes,
    n_points: n,
    clicks_total: spec.clicks_total,
    blocks: {
      positions: posBytes.length,
      labels: labBytes.length,
      provenance: provBytes.length,
    },
  };
  if (spec.metrics) header["metrics"] = spec.metrics;
  const headerBytes = new TextEncoder().encode(JSON.stringify(header));
  const total = 4 + headerBytes.length + posBytes.length + labBytes.length + provBytes.length;
  const out = new Uint8Array(total);
  new DataView(out.buffer).setUint32(0, headerBytes.length, true);
  let off = 4;
  out.set(headerBytes, off);
  off += headerBytes.length;
  out.set(posBytes, off);
  off += posBytes.length;
  out.set(labBytes, off);
  off += labBytes.length;
  out.set(provBytes, off);
  return out.buffer;
}
