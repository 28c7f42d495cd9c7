import { describe, expect, it } from "vitest";
import { classColor, UNLABELED_COLOR } from "../src/colors.js";
import { UNLABELED } from "../src/types.js";

describe("classColor", () => {
  it("maps UNLABELED to mid-gray", () => {
    expect(classColor(UNLABELED, 3)).toEqual([128, 128, 128]);
    expect(UNLABELED_COLOR).toEqual([128, 128, 128]);
  });

  it("returns a fresh array for UNLABELED (no shared mutable state)", () => {
    const a = classColor(UNLABELED, 3);
    a[0] = 0;
    expect(classColor(UNLABELED, 3)).toEqual([128, 128, 128]);
  });

  it("class 0 is the hue-0 red tone at s=0.8, v=0.95", () => {
    // h=0, s=0.8, v=0.95 -> r=242, g=b=48
    expect(classColor(0, 3)).toEqual([242, 48, 48]);
  });

  it("produces distinct colors for all classes", () => {
    for (const numClasses of [2, 3, 6, 8]) {
      const seen = new Set<string>();
      for (let c = 0; c < numClasses; c++) {
        seen.add(classColor(c, numClasses).join(","));
      }
      expect(seen.size).toBe(numClasses);
    }
  });

  it("all channels stay within 0..255", () => {
    for (let c = 0; c < 12; c++) {
      for (const v of classColor(c, 12)) {
        expect(v).toBeGreaterThanOrEqual(0);
        expect(v).toBeLessThanOrEqual(255);
      }
    }
  });

  it("is deterministic", () => {
    expect(classColor(2, 5)).toEqual(classColor(2, 5));
  });

  it("rejects out-of-range ids", () => {
    expect(() => classColor(3, 3)).toThrow(RangeError);
    expect(() => classColor(-2, 3)).toThrow(RangeError);
    expect(() => classColor(1.5, 3)).toThrow(RangeError);
  });
});
