/*
 * Layout editor: stamp a few thing instances on a pixel canvas, send the
 * sparse map to the completion service, and inspect the hallucinated dense
 * map, instance boundaries, and rendered image side by side. "Resample"
 * re-submits the same canvas under a fresh seed and collects the variants.
 */

import { ApiClient, ApiError, CompletionQueue } from "./api.js";
import { LayoutCanvas } from "./canvas.js";
import { base64ToBytes, bytesToBase64 } from "./png.js";
import { Taxonomy, TaxonomyClass, thingClasses } from "./types.js";

const SERVICE_URL = new URLSearchParams(location.search).get("service") ?? "http://127.0.0.1:8000";
const SCALE = 7;

type Tool = "rect" | "polygon" | "erase";

const el = <T extends HTMLElement>(id: string) => document.getElementById(id) as T;

const api = new ApiClient(SERVICE_URL);
const queue = new CompletionQueue();

let taxonomy: Taxonomy | null = null;
let layout = new LayoutCanvas(64, 64);
let selectedClass: TaxonomyClass | null = null;
let tool: Tool = "rect";
let dragStart: [number, number] | null = null;
let dragEnd: [number, number] | null = null;
let polygonPoints: [number, number][] = [];
let seed = 1;

function colorOf(classId: number): string {
  const cls = taxonomy?.classes.find((c) => c.id === classId);
  if (!cls) return "#202020";
  const [r, g, b] = cls.color;
  return `rgb(${r},${g},${b})`;
}

function showError(message: string | null): void {
  const banner = el<HTMLDivElement>("error-banner");
  banner.textContent = message ?? "";
  banner.style.display = message ? "block" : "none";
}

function setStatus(message: string): void {
  el<HTMLSpanElement>("status").textContent = message;
}

// -- canvas painting -----------------------------------------------------------

function pixelFromEvent(event: MouseEvent): [number, number] {
  const canvas = el<HTMLCanvasElement>("editor");
  const rect = canvas.getBoundingClientRect();
  const x = Math.floor(((event.clientX - rect.left) / rect.width) * layout.width);
  const y = Math.floor(((event.clientY - rect.top) / rect.height) * layout.height);
  return [
    Math.max(0, Math.min(layout.width - 1, x)),
    Math.max(0, Math.min(layout.height - 1, y)),
  ];
}

function redraw(): void {
  const canvas = el<HTMLCanvasElement>("editor");
  canvas.width = layout.width * SCALE;
  canvas.height = layout.height * SCALE;
  const ctx = canvas.getContext("2d")!;
  for (let y = 0; y < layout.height; y++) {
    for (let x = 0; x < layout.width; x++) {
      const value = layout.at(x, y);
      ctx.fillStyle = value === layout.unlabeledId ? ((x + y) % 2 ? "#1c1c22" : "#23232a") : colorOf(value);
      ctx.fillRect(x * SCALE, y * SCALE, SCALE, SCALE);
    }
  }
  if (dragStart && dragEnd) {
    const [x0, y0] = dragStart;
    const [x1, y1] = dragEnd;
    ctx.strokeStyle = tool === "erase" ? "#ff5555" : "#ffffff";
    ctx.lineWidth = 2;
    ctx.strokeRect(
      Math.min(x0, x1) * SCALE,
      Math.min(y0, y1) * SCALE,
      (Math.abs(x1 - x0) + 1) * SCALE,
      (Math.abs(y1 - y0) + 1) * SCALE,
    );
  }
  if (polygonPoints.length) {
    ctx.strokeStyle = "#ffffff";
    ctx.lineWidth = 2;
    ctx.beginPath();
    polygonPoints.forEach(([x, y], i) => {
      const cx = (x + 0.5) * SCALE;
      const cy = (y + 0.5) * SCALE;
      if (i === 0) ctx.moveTo(cx, cy);
      else ctx.lineTo(cx, cy);
      ctx.fillStyle = "#ffffff";
      ctx.fillRect(cx - 2, cy - 2, 4, 4);
    });
    ctx.stroke();
  }
  setStatus(`${layout.width}x${layout.height}, ${layout.labeledPixelCount()} labeled px, seed ${seed}`);
}

function applyRect(): void {
  if (!dragStart || !dragEnd) return;
  const [x0, y0] = dragStart;
  const [x1, y1] = dragEnd;
  const x = Math.min(x0, x1);
  const y = Math.min(y0, y1);
  const w = Math.abs(x1 - x0) + 1;
  const h = Math.abs(y1 - y0) + 1;
  if (tool === "erase") {
    layout.eraseRect(x, y, w, h);
  } else if (selectedClass) {
    layout.stampRect(selectedClass.id, x, y, w, h);
  }
}

function bindCanvas(): void {
  const canvas = el<HTMLCanvasElement>("editor");
  canvas.addEventListener("mousedown", (event) => {
    if (tool === "polygon") return;
    dragStart = pixelFromEvent(event);
    dragEnd = dragStart;
    redraw();
  });
  canvas.addEventListener("mousemove", (event) => {
    if (!dragStart) return;
    dragEnd = pixelFromEvent(event);
    redraw();
  });
  canvas.addEventListener("mouseup", (event) => {
    if (tool === "polygon") return;
    dragEnd = pixelFromEvent(event);
    applyRect();
    dragStart = dragEnd = null;
    redraw();
  });
  canvas.addEventListener("click", (event) => {
    if (tool !== "polygon") return;
    polygonPoints.push(pixelFromEvent(event));
    redraw();
  });
  canvas.addEventListener("dblclick", () => {
    if (tool !== "polygon" || polygonPoints.length < 3 || !selectedClass) return;
    layout.stampPolygon(selectedClass.id, polygonPoints);
    polygonPoints = [];
    redraw();
  });
}

// -- palette ----------------------------------------------------------------------

function buildPalette(): void {
  if (!taxonomy) return;
  const host = el<HTMLDivElement>("palette");
  host.innerHTML = "";
  // only thing classes are offered: sparse inputs never carry stuff labels
  for (const cls of thingClasses(taxonomy)) {
    const button = document.createElement("button");
    button.className = "class-chip";
    button.textContent = cls.name;
    button.style.borderColor = colorOf(cls.id);
    button.onclick = () => {
      selectedClass = cls;
      document.querySelectorAll(".class-chip").forEach((b) => b.classList.remove("selected"));
      button.classList.add("selected");
      if (tool === "erase") setTool("rect");
    };
    host.appendChild(button);
    if (!selectedClass) button.click();
  }
}

function setTool(next: Tool): void {
  tool = next;
  polygonPoints = [];
  document.querySelectorAll(".tool").forEach((b) => b.classList.remove("selected"));
  el<HTMLButtonElement>(`tool-${next}`).classList.add("selected");
  redraw();
}

// -- completion -----------------------------------------------------------------

function panelImage(id: string, pngB64: string | undefined): void {
  const img = el<HTMLImageElement>(id);
  if (pngB64) {
    img.src = `data:image/png;base64,${pngB64}`;
    img.style.display = "block";
  } else {
    img.style.display = "none";
  }
}

async function snapshotSparsePanel(): Promise<void> {
  const editor = el<HTMLCanvasElement>("editor");
  panelImage("panel-sparse", bytesToBase64(base64ToBytes(editor.toDataURL("image/png").split(",")[1])));
}

async function submitCompletion(freshSeed: boolean): Promise<void> {
  if (!taxonomy) return;
  if (freshSeed) seed = Math.floor(Math.random() * 2 ** 31);
  const requestSeed = seed;
  showError(null);
  setStatus("completing...");
  try {
    const png = await layout.toPng();
    const response = await queue.submit(() => api.complete(png, requestSeed, true));
    await snapshotSparsePanel();
    panelImage("panel-dense", response.dense_png_b64);
    panelImage("panel-boundary", response.boundary_png_b64);
    panelImage("panel-image", response.image_png_b64);
    if (freshSeed) {
      const thumb = document.createElement("img");
      thumb.className = "variant";
      thumb.title = `seed ${requestSeed}`;
      thumb.src = `data:image/png;base64,${response.image_png_b64 ?? response.dense_png_b64}`;
      el<HTMLDivElement>("variants").appendChild(thumb);
    }
  } catch (error) {
    // the canvas is untouched; just surface the service's message
    showError(error instanceof ApiError ? `${error.code}: ${error.message}` : String(error));
  }
  redraw();
}

// -- import/export -----------------------------------------------------------------

async function exportPng(): Promise<void> {
  const bytes = await layout.toPng();
  const blob = new Blob([bytes as unknown as BlobPart], { type: "image/png" });
  const link = document.createElement("a");
  link.href = URL.createObjectURL(blob);
  link.download = "sparse_labelmap.png";
  link.click();
  URL.revokeObjectURL(link.href);
}

async function importPng(file: File): Promise<void> {
  const bytes = new Uint8Array(await file.arrayBuffer());
  layout = await LayoutCanvas.fromPng(bytes, taxonomy?.unlabeled_id ?? 255);
  redraw();
}

// -- boot ---------------------------------------------------------------------------

async function boot(): Promise<void> {
  bindCanvas();
  el<HTMLButtonElement>("tool-rect").onclick = () => setTool("rect");
  el<HTMLButtonElement>("tool-polygon").onclick = () => setTool("polygon");
  el<HTMLButtonElement>("tool-erase").onclick = () => setTool("erase");
  el<HTMLButtonElement>("clear").onclick = () => {
    layout.clear();
    redraw();
  };
  el<HTMLButtonElement>("complete").onclick = () => void submitCompletion(false);
  el<HTMLButtonElement>("resample").onclick = () => void submitCompletion(true);
  el<HTMLButtonElement>("export").onclick = () => void exportPng();
  el<HTMLInputElement>("import").onchange = (event) => {
    const file = (event.target as HTMLInputElement).files?.[0];
    if (file) void importPng(file);
  };
  el<HTMLButtonElement>("resize").onclick = () => {
    const width = Number(el<HTMLInputElement>("canvas-width").value);
    const height = Number(el<HTMLInputElement>("canvas-height").value);
    layout = new LayoutCanvas(width, height, taxonomy?.unlabeled_id ?? 255);
    redraw();
  };

  try {
    taxonomy = await api.getTaxonomy();
    layout = new LayoutCanvas(layout.width, layout.height, taxonomy.unlabeled_id);
    buildPalette();
    setStatus(`connected to ${SERVICE_URL}`);
  } catch (error) {
    showError(`service unreachable at ${SERVICE_URL}: ${String(error)}`);
  }
  redraw();
}

void boot();
