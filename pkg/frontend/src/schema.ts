import type { SceneDoc } from "./types.js";

export class SceneSchemaError extends Error {
  constructor(public readonly path: string, message: string) {
    super(`${path}: ${message}`);
  }
}

const SCENE_FORMAT = "d3sdn-scene/1";

function need(obj: Record<string, unknown>, key: string, where: string): unknown {
  if (!(key in obj)) throw new SceneSchemaError(`${where}.${key}`, "missing required field");
  return obj[key];
}

function needNumber(obj: Record<string, unknown>, key: string, where: string): number {
  const v = need(obj, key, where);
  if (typeof v !== "number" || !Number.isFinite(v)) {
    throw new SceneSchemaError(`${where}.${key}`, "must be a finite number");
  }
  return v;
}

function needVector(obj: Record<string, unknown>, key: string, where: string, n: number): number[] {
  const v = need(obj, key, where);
  if (!Array.isArray(v) || v.length !== n || v.some((x) => typeof x !== "number")) {
    throw new SceneSchemaError(`${where}.${key}`, `must be an array of ${n} numbers`);
  }
  return v as number[];
}

/** Client-side validation mirroring the scene file schema; throws
 * SceneSchemaError with the offending field path. */
export function validateScene(data: unknown): SceneDoc {
  if (typeof data !== "object" || data === null || Array.isArray(data)) {
    throw new SceneSchemaError("$", "scene document must be a JSON object");
  }
  const doc = data as Record<string, unknown>;
  const version = need(doc, "version", "$");
  if (version !== SCENE_FORMAT) {
    throw new SceneSchemaError("$.version", `unsupported format ${JSON.stringify(version)}`);
  }
  const cam = need(doc, "camera", "$");
  if (typeof cam !== "object" || cam === null) {
    throw new SceneSchemaError("$.camera", "must be an object");
  }
  const camObj = cam as Record<string, unknown>;
  for (const key of ["fx", "fy", "cx", "cy", "width", "height"]) {
    needNumber(camObj, key, "$.camera");
  }
  if (needNumber(camObj, "fx", "$.camera") <= 0 || needNumber(camObj, "fy", "$.camera") <= 0) {
    throw new SceneSchemaError("$.camera", "focal lengths must be positive");
  }
  const objects = need(doc, "objects", "$");
  if (!Array.isArray(objects)) {
    throw new SceneSchemaError("$.objects", "must be an array");
  }
  const seen = new Set<number>();
  objects.forEach((obj, i) => {
    const where = `$.objects[${i}]`;
    if (typeof obj !== "object" || obj === null) {
      throw new SceneSchemaError(where, "must be an object");
    }
    const rec = obj as Record<string, unknown>;
    const id = needNumber(rec, "id", where);
    if (id <= 0 || !Number.isInteger(id)) {
      throw new SceneSchemaError(`${where}.id`, "must be a positive integer");
    }
    if (seen.has(id)) throw new SceneSchemaError(`${where}.id`, `duplicate id ${id}`);
    seen.add(id);
    needNumber(rec, "mesh_index", where);
    needVector(rec, "scale", where, 3);
    needNumber(rec, "yaw", where);
    needVector(rec, "center_2d", where, 2);
    if (needNumber(rec, "ray_distance", where) <= 0) {
      throw new SceneSchemaError(`${where}.ray_distance`, "must be positive");
    }
    needVector(rec, "bbox", where, 4);
    if ("ffd" in rec) {
      const ffd = rec.ffd;
      if (!Array.isArray(ffd) || ffd.length !== 192) {
        throw new SceneSchemaError(`${where}.ffd`, "must be an array of 192 numbers");
      }
    }
  });
  return data as SceneDoc;
}
