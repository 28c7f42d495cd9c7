import { RGB, UNLABELED } from "./types.js";

/** Mid-gray for points that have no label yet. */
export const UNLABELED_COLOR: RGB = [128, 128, 128];

function hsvToRgb(h: number, s: number, v: number): RGB {
  const i = Math.floor(h * 6);
  const f = h * 6 - i;
  const p = v * (1 - s);
  const q = v * (1 - f * s);
  const t = v * (1 - (1 - f) * s);
  let r: number, g: number, b: number;
  switch (i % 6) {
    case 0: [r, g, b] = [v, t, p]; break;
    case 1: [r, g, b] = [q, v, p]; break;
    case 2: [r, g, b] = [p, v, t]; break;
    case 3: [r, g, b] = [p, q, v]; break;
    case 4: [r, g, b] = [t, p, v]; break;
    default: [r, g, b] = [v, p, q]; break;
  }
  return [Math.round(r * 255), Math.round(g * 255), Math.round(b * 255)];
}

/**
 * Deterministic class palette: evenly spaced hues (hue = classId/numClasses,
 * s = 0.8, v = 0.95). UNLABELED maps to mid-gray.
 */
export function classColor(classId: number, numClasses: number): RGB {
  if (classId === UNLABELED) {
    return [...UNLABELED_COLOR] as RGB;
  }
  if (!Number.isInteger(classId) || classId < 0 || classId >= numClasses) {
    throw new RangeError(
      `class id ${classId} out of range for ${numClasses} classes`,
    );
  }
  return hsvToRgb(classId / numClasses, 0.8, 0.95);
}
