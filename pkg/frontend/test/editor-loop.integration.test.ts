/**
 * End-to-end editor loop against a live edit service:
 * load a sample scene, commit a zoom=2 move edit, verify the object's
 * instance-map pixel count strictly increases, undo, and verify the render
 * is byte-identical to the revision-0 render.
 *
 * Requires the Python package to be importable (spawns the service).
 */
import { spawn, type ChildProcess } from "node:child_process";
import { afterAll, beforeAll, describe, expect, it } from "vitest";
import { EditServiceClient } from "../src/api.js";
import { countPixels, parsePgm } from "../src/pgm.js";
import { validateScene } from "../src/schema.js";
import * as st from "../src/state.js";
import { instanceGray, type EditOpDoc, type SceneDoc } from "../src/types.js";

const PORT = 8741;
const BASE = `http://127.0.0.1:${PORT}`;

const SAMPLE_SCENE: SceneDoc = {
  version: "d3sdn-scene/1",
  camera: { fx: 80, fy: 80, cx: 32, cy: 32, width: 64, height: 64, near: 0.5 },
  mesh_lib: "builtin",
  objects: [
    {
      id: 1,
      mesh_index: 2,
      scale: [2.0, 2.0, 2.0],
      yaw: 0.7,
      center_2d: [30.0, 32.0],
      ray_distance: 11.0,
      bbox: [30.0, 32.0, 16.0, 9.0],
    },
    {
      id: 2,
      mesh_index: 5,
      scale: [1.8, 1.8, 1.8],
      yaw: 2.3,
      center_2d: [46.0, 28.0],
      ray_distance: 15.0,
      bbox: [46.0, 28.0, 12.0, 7.0],
    },
  ],
};

let service: ChildProcess;

async function waitForService(timeoutMs = 30000): Promise<void> {
  const deadline = Date.now() + timeoutMs;
  while (Date.now() < deadline) {
    try {
      const resp = await fetch(`${BASE}/api/scene/probe`);
      if (resp.status === 404) return;
    } catch {
      /* not up yet */
    }
    await new Promise((r) => setTimeout(r, 200));
  }
  throw new Error("edit service did not come up");
}

beforeAll(async () => {
  service = spawn(
    "python3",
    ["-m", "derender3d.cli", "serve", "--port", String(PORT)],
    { stdio: "ignore" },
  );
  await waitForService();
}, 40000);

afterAll(() => {
  service?.kill("SIGTERM");
});

describe("editor loop against the live service", () => {
  it("zoom edit grows the instance footprint and undo restores revision 0 bytes", async () => {
    const client = new EditServiceClient(BASE);
    const doc = validateScene(SAMPLE_SCENE);
    const loaded = await client.loadScene(doc);
    expect(loaded.revision).toBe(0);

    let state = st.sessionLoaded(st.initialState(), loaded.session_id);
    const sid = loaded.session_id;

    // revision-0 references
    const rev0Instance = await client.renderLayer(sid, "instance", "pgm");
    const rev0Silhouette = await client.renderLayer(sid, "silhouette", "pgm");
    expect(rev0Instance.revision).toBe(0);
    const before = countPixels(parsePgm(rev0Instance.bytes), instanceGray(1));
    expect(before).toBeGreaterThan(0);

    // user selects object 1 and zooms in 2x at a fixed center
    const target = doc.objects[0];
    state = st.objectSelected(state, 1, [target.center_2d[0], target.center_2d[1]]);
    state = st.draftUpdated(state, { zoomRho: 2.0 });
    const op: EditOpDoc = {
      object_id: 1,
      src_center: target.center_2d,
      tgt_center: state.draft!.tgtCenter,
      zoom_rho: state.draft!.zoomRho,
      delta_ry: state.draft!.deltaRy,
      kind: "move",
    };
    const edited = await client.applyEdit(sid, op);
    expect(edited.revision).toBe(1);
    expect(edited.changed_object).toBe(1);
    state = st.editCommitted(state, edited.revision);

    const after = await client.renderLayer(sid, "instance", "pgm");
    expect(after.revision).toBe(1);
    const grown = countPixels(parsePgm(after.bytes), instanceGray(1));
    expect(grown).toBeGreaterThan(before);

    // undo restores the revision-0 scene; the render must match byte-for-byte
    expect(st.canUndo(state)).toBe(true);
    const undone = await client.undo(sid);
    state = st.editReverted(state, undone.revision);
    expect(undone.revision).toBe(2);

    const restoredInstance = await client.renderLayer(sid, "instance", "pgm");
    const restoredSilhouette = await client.renderLayer(sid, "silhouette", "pgm");
    expect(Buffer.from(restoredInstance.bytes).equals(Buffer.from(rev0Instance.bytes))).toBe(true);
    expect(Buffer.from(restoredSilhouette.bytes).equals(Buffer.from(rev0Silhouette.bytes))).toBe(true);
  }, 60000);

  it("a quarter-turn rotation shifts the pose layer by six bins", async () => {
    const client = new EditServiceClient(BASE);
    const loaded = await client.loadScene(validateScene(SAMPLE_SCENE));
    const sid = loaded.session_id;
    const target = SAMPLE_SCENE.objects[0];

    const instance = parsePgm((await client.renderLayer(sid, "instance", "pgm")).bytes);
    const poseBefore = parsePgm((await client.renderLayer(sid, "pose", "pgm")).bytes);
    // sample a pixel owned by object 1
    let px = -1;
    let py = -1;
    for (let y = 0; y < instance.height && px < 0; y++) {
      for (let x = 0; x < instance.width; x++) {
        if (instance.pixels[y * instance.width + x] === instanceGray(1)) {
          px = x;
          py = y;
          break;
        }
      }
    }
    expect(px).toBeGreaterThanOrEqual(0);
    const grayBefore = poseBefore.pixels[py * poseBefore.width + px];
    const binBefore = grayBefore / 10 - 1;

    await client.applyEdit(sid, {
      object_id: 1,
      src_center: target.center_2d,
      tgt_center: target.center_2d,
      zoom_rho: 1.0,
      delta_ry: Math.PI / 2,
      kind: "move",
    });
    const poseAfter = parsePgm((await client.renderLayer(sid, "pose", "pgm")).bytes);
    const instAfter = parsePgm((await client.renderLayer(sid, "instance", "pgm")).bytes);
    // re-sample a pixel still owned by the object after rotation
    let qx = -1;
    let qy = -1;
    for (let y = 0; y < instAfter.height && qx < 0; y++) {
      for (let x = 0; x < instAfter.width; x++) {
        if (instAfter.pixels[y * instAfter.width + x] === instanceGray(1)) {
          qx = x;
          qy = y;
          break;
        }
      }
    }
    const binAfter = poseAfter.pixels[qy * poseAfter.width + qx] / 10 - 1;
    expect((binAfter - binBefore + 24) % 24).toBe(6); // 90 deg = 6 of 24 bins
  }, 30000);

  it("server rejects invalid edits and the state machine reverts the draft", async () => {
    const client = new EditServiceClient(BASE);
    const loaded = await client.loadScene(validateScene(SAMPLE_SCENE));
    const sid = loaded.session_id;

    let state = st.sessionLoaded(st.initialState(), sid);
    state = st.objectSelected(state, 1, [30, 32]);
    state = st.draftUpdated(state, { zoomRho: 1e6 });

    await expect(
      client.applyEdit(sid, {
        object_id: 1,
        src_center: [30, 32],
        tgt_center: [30, 32],
        zoom_rho: 1e6,
        delta_ry: 0,
        kind: "move",
      }),
    ).rejects.toThrow(/near plane/);

    // UI contract: rejection reverts the draft to the committed center
    state = st.objectSelected(state, 1, [30, 32]);
    expect(state.draft).toEqual({ tgtCenter: [30, 32], zoomRho: 1, deltaRy: 0 });
    const scene = await client.getScene(sid);
    expect(scene.revision).toBe(0);
  }, 30000);
});
