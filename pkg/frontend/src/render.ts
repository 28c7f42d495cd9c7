import * as THREE from "three";
import { classColor } from "./colors.js";
import { Snapshot } from "./types.js";

/**
 * three.js point-cloud view: orbiting perspective camera, one Points object
 * whose per-vertex colors come from the class palette.
 */
export class CloudRenderer {
  private readonly scene = new THREE.Scene();
  private readonly camera: THREE.PerspectiveCamera;
  private readonly renderer: THREE.WebGLRenderer;
  private points: THREE.Points | null = null;
  private geometry: THREE.BufferGeometry | null = null;
  private azimuth = 0.6;
  private elevation = 0.4;
  private distance = 3.0;
  private dragging = false;
  private lastX = 0;
  private lastY = 0;

  constructor(private readonly canvas: HTMLCanvasElement) {
    this.renderer = new THREE.WebGLRenderer({ canvas, antialias: true });
    this.camera = new THREE.PerspectiveCamera(
      50,
      canvas.clientWidth / Math.max(canvas.clientHeight, 1),
      0.01,
      100,
    );
    this.scene.background = new THREE.Color(0x14161a);
    this.updateCamera();

    canvas.addEventListener("pointerdown", (e) => {
      // orbit with the right button or shift-drag; plain clicks pick points
      if (e.button === 2 || e.shiftKey) {
        this.dragging = true;
        this.lastX = e.clientX;
        this.lastY = e.clientY;
      }
    });
    canvas.addEventListener("pointermove", (e) => {
      if (!this.dragging) return;
      this.azimuth -= (e.clientX - this.lastX) * 0.008;
      this.elevation = Math.min(
        1.5,
        Math.max(-1.5, this.elevation + (e.clientY - this.lastY) * 0.008),
      );
      this.lastX = e.clientX;
      this.lastY = e.clientY;
      this.updateCamera();
      this.draw();
    });
    const stop = () => {
      this.dragging = false;
    };
    canvas.addEventListener("pointerup", stop);
    canvas.addEventListener("pointerleave", stop);
    canvas.addEventListener("contextmenu", (e) => e.preventDefault());
    canvas.addEventListener("wheel", (e) => {
      e.preventDefault();
      this.distance = Math.min(
        10,
        Math.max(0.5, this.distance * (e.deltaY > 0 ? 1.1 : 0.9)),
      );
      this.updateCamera();
      this.draw();
    });
  }

  private updateCamera(): void {
    const ce = Math.cos(this.elevation);
    this.camera.position.set(
      this.distance * ce * Math.cos(this.azimuth),
      this.distance * Math.sin(this.elevation),
      this.distance * ce * Math.sin(this.azimuth),
    );
    this.camera.lookAt(0, 0, 0);
    this.camera.updateMatrixWorld();
  }

  /** Column-major combined view-projection matrix, for picking. */
  viewProjection(): Float32Array {
    const m = new THREE.Matrix4();
    m.multiplyMatrices(
      this.camera.projectionMatrix,
      this.camera.matrixWorldInverse,
    );
    return new Float32Array(m.elements);
  }

  viewportSize(): { width: number; height: number } {
    return { width: this.canvas.clientWidth, height: this.canvas.clientHeight };
  }

  resize(): void {
    const w = this.canvas.clientWidth;
    const h = Math.max(this.canvas.clientHeight, 1);
    this.camera.aspect = w / h;
    this.camera.updateProjectionMatrix();
    this.renderer.setSize(w, h, false);
    this.draw();
  }

  setSnapshot(snap: Snapshot): void {
    const colors = new Float32Array(snap.nPoints * 3);
    for (let i = 0; i < snap.nPoints; i++) {
      const [r, g, b] = classColor(snap.labels[i]!, snap.numClasses);
      colors[3 * i] = r / 255;
      colors[3 * i + 1] = g / 255;
      colors[3 * i + 2] = b / 255;
    }
    if (this.geometry === null || this.points === null) {
      this.geometry = new THREE.BufferGeometry();
      const material = new THREE.PointsMaterial({
        size: 0.02,
        vertexColors: true,
      });
      this.points = new THREE.Points(this.geometry, material);
      this.scene.add(this.points);
    }
    this.geometry.setAttribute(
      "position",
      new THREE.BufferAttribute(snap.positions, 3),
    );
    this.geometry.setAttribute("color", new THREE.BufferAttribute(colors, 3));
    this.geometry.computeBoundingSphere();
    this.draw();
  }

  draw(): void {
    this.renderer.render(this.scene, this.camera);
  }
}
