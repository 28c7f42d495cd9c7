/** Screen-space point picking. */

export interface PickContext {
  /** column-major 4x4 combined view-projection matrix */
  viewProj: Float32Array | number[];
  width: number;
  height: number;
  /** pick radius in pixels (default 6) */
  radius?: number;
}

/**
 * Return the id of the point whose screen projection is nearest the cursor
 * within the pick radius, or null if none qualifies. Ties on screen distance
 * are broken by nearer depth, then by lower point id.
 */
export function pickPoint(
  screenX: number,
  screenY: number,
  ctx: PickContext,
  positions: Float32Array | number[],
): number | null {
  const m = ctx.viewProj;
  const radius = ctx.radius ?? 6;
  const r2 = radius * radius;
  const n = Math.floor(positions.length / 3);
  let best: { d2: number; depth: number; id: number } | null = null;
  for (let i = 0; i < n; i++) {
    const x = positions[3 * i]!;
    const y = positions[3 * i + 1]!;
    const z = positions[3 * i + 2]!;
    const cw = m[3]! * x + m[7]! * y + m[11]! * z + m[15]!;
    if (cw <= 0) continue; // behind the camera
    const cx = (m[0]! * x + m[4]! * y + m[8]! * z + m[12]!) / cw;
    const cy = (m[1]! * x + m[5]! * y + m[9]! * z + m[13]!) / cw;
    const cz = (m[2]! * x + m[6]! * y + m[10]! * z + m[14]!) / cw;
    if (cz < -1 || cz > 1) continue; // outside the clip volume
    const sx = (cx * 0.5 + 0.5) * ctx.width;
    const sy = (1 - (cy * 0.5 + 0.5)) * ctx.height;
    const dx = sx - screenX;
    const dy = sy - screenY;
    const d2 = dx * dx + dy * dy;
    if (d2 > r2) continue;
    if (
      best === null ||
      d2 < best.d2 ||
      (d2 === best.d2 && (cz < best.depth || (cz === best.depth && i < best.id)))
    ) {
      best = { d2, depth: cz, id: i };
    }
  }
  return best === null ? null : best.id;
}
