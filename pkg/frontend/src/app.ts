import { EditServiceClient } from "./api.js";
import { PreviewCoalescer } from "./coalesce.js";
import { compositeLayers } from "./compositor.js";
import { parsePgm, pixelAt, type GrayImage } from "./pgm.js";
import { SceneSchemaError, validateScene } from "./schema.js";
import * as st from "./state.js";
import { LAYERS, grayToObjectId, type EditOpDoc, type LayerName, type SceneDoc } from "./types.js";

const SERVICE_URL =
  new URLSearchParams(location.search).get("service") ?? "http://127.0.0.1:8723";

const client = new EditServiceClient(SERVICE_URL);

let state = st.initialState();
let scene: SceneDoc | null = null;
let layerCache = new Map<LayerName, GrayImage>();
let instanceLayer: GrayImage | null = null;
let dragging = false;

const canvas = document.getElementById("view") as HTMLCanvasElement;
const ctx = canvas.getContext("2d")!;
const banner = document.getElementById("banner")!;
const objectList = document.getElementById("objects")!;
const undoButton = document.getElementById("undo") as HTMLButtonElement;
const zoomSlider = document.getElementById("zoom") as HTMLInputElement;
const yawDial = document.getElementById("yaw") as HTMLInputElement;
const zoomLabel = document.getElementById("zoom-label")!;
const yawLabel = document.getElementById("yaw-label")!;
const commitButton = document.getElementById("commit") as HTMLButtonElement;
const revisionLabel = document.getElementById("revision")!;
const fileInput = document.getElementById("scene-file") as HTMLInputElement;
const layerBoxes = new Map<LayerName, HTMLInputElement>();

const preview = new PreviewCoalescer(async () => {
  await refreshLayers();
}, 100);

function showError(message: string): void {
  banner.textContent = message;
  banner.classList.add("visible");
  setTimeout(() => banner.classList.remove("visible"), 4000);
}

function setStatus(): void {
  revisionLabel.textContent =
    state.sessionId === null ? "no session" : `revision ${state.revision}`;
  undoButton.disabled = !st.canUndo(state);
  const selected = state.selectedObjectId;
  commitButton.disabled = selected === null;
  zoomSlider.disabled = selected === null;
  yawDial.disabled = selected === null;
}

async function refreshLayers(): Promise<void> {
  if (state.sessionId === null) return;
  const wanted = [...state.layers];
  const fetched = new Map<LayerName, GrayImage>();
  for (const name of wanted) {
    const render = await client.renderLayer(state.sessionId, name, "pgm");
    fetched.set(name, parsePgm(render.bytes));
  }
  // instance is always kept fresh for hit-testing even when not displayed
  if (!fetched.has("instance")) {
    const render = await client.renderLayer(state.sessionId, "instance", "pgm");
    instanceLayer = parsePgm(render.bytes);
  } else {
    instanceLayer = fetched.get("instance")!;
  }
  layerCache = fetched;
  draw();
}

function draw(): void {
  if (scene === null) return;
  const { width, height } = scene.camera;
  canvas.width = width;
  canvas.height = height;
  const visible: Partial<Record<LayerName, GrayImage>> = {};
  for (const [name, img] of layerCache) visible[name] = img;
  const rgba = compositeLayers(width, height, visible, LAYERS);
  const buffer = new Uint8ClampedArray(rgba) as Uint8ClampedArray<ArrayBuffer>;
  ctx.putImageData(new ImageData(buffer, width, height), 0, 0);
  if (state.selectedObjectId !== null && state.draft !== null) {
    const [tx, ty] = state.draft.tgtCenter;
    ctx.strokeStyle = "#ff4455";
    ctx.lineWidth = 1;
    ctx.beginPath();
    ctx.moveTo(tx - 4, ty);
    ctx.lineTo(tx + 4, ty);
    ctx.moveTo(tx, ty - 4);
    ctx.lineTo(tx, ty + 4);
    ctx.stroke();
  }
}

function rebuildObjectList(): void {
  objectList.textContent = "";
  if (scene === null) return;
  for (const obj of scene.objects) {
    const li = document.createElement("li");
    li.textContent = `object ${obj.id} (mesh ${obj.mesh_index})`;
    li.dataset.id = String(obj.id);
    if (obj.id === state.selectedObjectId) li.classList.add("selected");
    li.addEventListener("click", () => selectObject(obj.id));
    objectList.appendChild(li);
  }
}

function selectObject(id: number): void {
  const obj = scene?.objects.find((o) => o.id === id);
  if (!obj) return;
  state = st.objectSelected(state, id, [obj.center_2d[0], obj.center_2d[1]]);
  zoomSlider.value = "1";
  yawDial.value = "0";
  zoomLabel.textContent = "1.00x";
  yawLabel.textContent = "0.0 deg";
  rebuildObjectList();
  setStatus();
  draw();
}

async function syncScene(): Promise<void> {
  if (state.sessionId === null) return;
  const doc = await client.getScene(state.sessionId);
  scene = doc;
  rebuildObjectList();
}

async function commitDraft(): Promise<void> {
  if (state.sessionId === null || state.selectedObjectId === null || state.draft === null) return;
  const selectedId = state.selectedObjectId;
  const obj = scene?.objects.find((o) => o.id === selectedId);
  if (!obj) return;
  const op: EditOpDoc = {
    object_id: selectedId,
    src_center: [obj.center_2d[0], obj.center_2d[1]],
    tgt_center: state.draft.tgtCenter,
    zoom_rho: state.draft.zoomRho,
    delta_ry: state.draft.deltaRy,
    kind: "move",
  };
  try {
    const result = await client.applyEdit(state.sessionId, op);
    state = st.editCommitted(state, result.revision);
    await syncScene();
    await refreshLayers();
  } catch (err) {
    // revert the draft to the committed center on rejection
    state = st.objectSelected(state, selectedId, [obj.center_2d[0], obj.center_2d[1]]);
    showError(`edit rejected: ${(err as Error).message}`);
  }
  setStatus();
}

fileInput.addEventListener("change", async () => {
  const file = fileInput.files?.[0];
  if (!file) return;
  let doc: SceneDoc;
  try {
    doc = validateScene(JSON.parse(await file.text()));
  } catch (err) {
    if (err instanceof SceneSchemaError) showError(`invalid scene at ${err.path}`);
    else showError(`not a scene file: ${(err as Error).message}`);
    return;
  }
  try {
    const res = await client.loadScene(doc);
    state = st.sessionLoaded(state, res.session_id);
    scene = doc;
    rebuildObjectList();
    await refreshLayers();
  } catch (err) {
    showError(`load failed: ${(err as Error).message}`);
  }
  setStatus();
});

canvas.addEventListener("pointerdown", (ev) => {
  const rect = canvas.getBoundingClientRect();
  const x = Math.floor(((ev.clientX - rect.left) / rect.width) * canvas.width);
  const y = Math.floor(((ev.clientY - rect.top) / rect.height) * canvas.height);
  if (instanceLayer) {
    const id = grayToObjectId(pixelAt(instanceLayer, x, y));
    if (id > 0) {
      selectObject(id);
      dragging = true;
      return;
    }
  }
  state = st.objectDeselected(state);
  rebuildObjectList();
  setStatus();
  draw();
});

canvas.addEventListener("pointermove", (ev) => {
  if (!dragging || state.selectedObjectId === null) return;
  const rect = canvas.getBoundingClientRect();
  const x = ((ev.clientX - rect.left) / rect.width) * canvas.width;
  const y = ((ev.clientY - rect.top) / rect.height) * canvas.height;
  state = st.draftUpdated(state, { tgtCenter: [x, y] });
  draw();
  preview.request();
});

canvas.addEventListener("pointerup", async () => {
  if (!dragging) return;
  dragging = false;
  await commitDraft();
});

zoomSlider.addEventListener("input", () => {
  if (state.selectedObjectId === null) return;
  const rho = Math.pow(2, Number(zoomSlider.value));
  state = st.draftUpdated(state, { zoomRho: rho });
  zoomLabel.textContent = `${rho.toFixed(2)}x`;
});

yawDial.addEventListener("input", () => {
  if (state.selectedObjectId === null) return;
  const deg = Number(yawDial.value);
  state = st.draftUpdated(state, { deltaRy: (deg * Math.PI) / 180 });
  yawLabel.textContent = `${deg.toFixed(1)} deg`;
});

commitButton.addEventListener("click", () => void commitDraft());

undoButton.addEventListener("click", async () => {
  if (state.sessionId === null) return;
  try {
    const res = await client.undo(state.sessionId);
    state = st.editReverted(state, res.revision);
    await syncScene();
    await refreshLayers();
  } catch (err) {
    showError(`undo failed: ${(err as Error).message}`);
  }
  setStatus();
});

for (const name of LAYERS) {
  const box = document.querySelector<HTMLInputElement>(`input[data-layer="${name}"]`);
  if (!box) continue;
  layerBoxes.set(name, box);
  box.checked = state.layers.has(name);
  box.addEventListener("change", async () => {
    state = st.layerToggled(state, name);
    await refreshLayers();
  });
}

setStatus();
