export interface CameraDoc {
  fx: number;
  fy: number;
  cx: number;
  cy: number;
  width: number;
  height: number;
  near?: number;
}

export interface ObjectDoc {
  id: number;
  mesh_index: number;
  scale: [number, number, number];
  yaw: number;
  center_2d: [number, number];
  ray_distance: number;
  bbox: [number, number, number, number];
  ffd?: number[];
}

export interface SceneDoc {
  version: string;
  camera: CameraDoc;
  mesh_lib: string;
  objects: ObjectDoc[];
}

export interface EditOpDoc {
  object_id: number;
  src_center: [number, number];
  tgt_center: [number, number];
  zoom_rho: number;
  delta_ry: number;
  kind: "move" | "delete" | "duplicate";
}

export const LAYERS = ["silhouette", "instance", "normal", "pose"] as const;
export type LayerName = (typeof LAYERS)[number];

/** Gray value for an object id in the instance layer (matches the service). */
export const INSTANCE_GRAY_STEP = 10;

/** Gray value step per pose bin in the pose layer; background is 0. */
export const POSE_GRAY_STEP = 10;

export function instanceGray(objectId: number): number {
  return Math.min(objectId * INSTANCE_GRAY_STEP, 255);
}

export function grayToObjectId(gray: number): number {
  return Math.round(gray / INSTANCE_GRAY_STEP);
}
