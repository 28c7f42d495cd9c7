import { ApiClient } from "./api.js";
import { classColor } from "./colors.js";
import { pickPoint } from "./pick.js";
import { CloudRenderer } from "./render.js";
import { SessionStore, StoreView } from "./state.js";
import { UNLABELED } from "./types.js";

const api = new ApiClient("");
const store = new SessionStore(api);

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (node === null) throw new Error(`missing element #${id}`);
  return node as T;
}

const canvas = el<HTMLCanvasElement>("viewport");
const renderer = new CloudRenderer(canvas);

const cloudSelect = el<HTMLSelectElement>("cloud-select");
const classCount = el<HTMLInputElement>("class-count");
const openBtn = el<HTMLButtonElement>("open-session");
const trainBtn = el<HTMLButtonElement>("train");
const finalizeBtn = el<HTMLButtonElement>("finalize");
const growToggle = el<HTMLInputElement>("grow-toggle");
const phaseLabel = el<HTMLSpanElement>("phase");
const clicksLabel = el<HTMLSpanElement>("clicks");
const roundLabel = el<HTMLSpanElement>("round");
const statusLabel = el<HTMLDivElement>("status");
const progressBar = el<HTMLProgressElement>("train-progress");
const palette = el<HTMLDivElement>("palette");

let activeClass = 0;
let eventsAbort: AbortController | null = null;

function rebuildPalette(numClasses: number): void {
  palette.replaceChildren();
  for (let c = 0; c < numClasses; c++) {
    const [r, g, b] = classColor(c, numClasses);
    const btn = document.createElement("button");
    btn.textContent = `${c + 1}`;
    btn.title = `class ${c} (key ${c + 1})`;
    btn.style.background = `rgb(${r},${g},${b})`;
    btn.className = c === activeClass ? "swatch active" : "swatch";
    btn.addEventListener("click", () => {
      activeClass = c;
      rebuildPalette(numClasses);
    });
    palette.appendChild(btn);
  }
}

function render(view: StoreView): void {
  phaseLabel.textContent = view.phase;
  clicksLabel.textContent = String(view.clicks);
  roundLabel.textContent = String(view.round);
  trainBtn.disabled =
    view.training || (view.phase !== "seeding" && view.phase !== "reviewing");
  finalizeBtn.disabled = view.phase !== "reviewing" || view.training;
  if (view.progress !== null && view.snapshot !== null) {
    progressBar.hidden = false;
    progressBar.value = view.progress.epoch + 1;
    statusLabel.textContent = `training: epoch ${view.progress.epoch} loss ${view.progress.loss.toFixed(4)}`;
  } else if (view.training) {
    progressBar.hidden = false;
    statusLabel.textContent = "training...";
  } else {
    progressBar.hidden = true;
    statusLabel.textContent = view.lastError ?? "";
  }
  if (view.snapshot !== null) {
    renderer.setSnapshot(view.snapshot);
    rebuildPalette(view.snapshot.numClasses);
  }
}

store.subscribe(render);

async function refreshClouds(): Promise<void> {
  const clouds = await api.listClouds();
  cloudSelect.replaceChildren();
  for (const c of clouds) {
    const opt = document.createElement("option");
    opt.value = c.cloud_id;
    opt.textContent = `${c.cloud_id} (${c.n_points} pts${c.has_ground_truth ? ", GT" : ""})`;
    cloudSelect.appendChild(opt);
  }
}

el<HTMLButtonElement>("gen-cloud").addEventListener("click", async () => {
  const family = el<HTMLSelectElement>("family-select").value;
  await api.addGeneratedCloud({ family, rng_seed: Date.now() % 100000 });
  await refreshClouds();
});

openBtn.addEventListener("click", async () => {
  if (cloudSelect.value === "") return;
  await store.open(cloudSelect.value, Number(classCount.value));
  eventsAbort?.abort();
  eventsAbort = new AbortController();
  const id = store.id;
  if (id !== null) {
    void api
      .events(id, (ev) => store.handleEvent(ev), eventsAbort.signal)
      .catch(() => {
        /* stream closed */
      });
  }
});

trainBtn.addEventListener("click", () => void store.startTraining());
finalizeBtn.addEventListener("click", () => void store.finalize());

canvas.addEventListener("click", (e) => {
  const view = store.view();
  if (view.snapshot === null || view.training || e.shiftKey) return;
  const rect = canvas.getBoundingClientRect();
  const id = pickPoint(
    e.clientX - rect.left,
    e.clientY - rect.top,
    { viewProj: renderer.viewProjection(), ...renderer.viewportSize() },
    view.snapshot.positions,
  );
  if (id === null) return;
  if (view.phase === "seeding") {
    store.placeSeed(id, activeClass);
  } else if (view.phase === "reviewing") {
    if (view.snapshot.labels[id] === activeClass) return; // no-op correction
    void store.correct(id, activeClass, growToggle.checked);
  }
});

document.addEventListener("keydown", (e) => {
  const n = Number(e.key);
  const snap = store.view().snapshot;
  if (snap !== null && Number.isInteger(n) && n >= 1 && n <= snap.numClasses) {
    activeClass = n - 1;
    rebuildPalette(snap.numClasses);
  }
});

window.addEventListener("resize", () => renderer.resize());

void refreshClouds();
renderer.resize();

export { store, renderer, activeClass, UNLABELED };
