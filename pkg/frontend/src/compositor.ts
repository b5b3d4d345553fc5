import type { GrayImage } from "./pgm.js";
import type { LayerName } from "./types.js";

/** Display tints per layer; grayscale values modulate these colors. */
const LAYER_TINTS: Record<LayerName, [number, number, number]> = {
  silhouette: [255, 255, 255],
  instance: [80, 160, 255],
  normal: [120, 255, 140],
  pose: [255, 170, 60],
};

/** Blend the selected server-rendered layers into one RGBA buffer.
 * Pure function of its inputs; no geometry is computed here. */
export function compositeLayers(
  width: number,
  height: number,
  layers: Partial<Record<LayerName, GrayImage>>,
  order: readonly LayerName[],
): Uint8ClampedArray {
  const out = new Uint8ClampedArray(width * height * 4);
  for (let i = 3; i < out.length; i += 4) out[i] = 255;
  let shown = 0;
  for (const name of order) {
    const img = layers[name];
    if (!img) continue;
    if (img.width !== width || img.height !== height) {
      throw new Error(`layer ${name} is ${img.width}x${img.height}, expected ${width}x${height}`);
    }
    shown++;
    const [tr, tg, tb] = LAYER_TINTS[name];
    for (let p = 0; p < width * height; p++) {
      const v = img.pixels[p] / 255;
      if (v === 0) continue;
      const o = p * 4;
      // additive blend scaled per layer count keeps multi-layer views readable
      out[o] = Math.min(255, out[o] + v * tr * 0.8);
      out[o + 1] = Math.min(255, out[o + 1] + v * tg * 0.8);
      out[o + 2] = Math.min(255, out[o + 2] + v * tb * 0.8);
    }
  }
  if (shown === 0) {
    // blank placeholder: dark checkerboard
    for (let y = 0; y < height; y++) {
      for (let x = 0; x < width; x++) {
        const o = (y * width + x) * 4;
        const dark = ((x >> 3) + (y >> 3)) % 2 === 0 ? 24 : 36;
        out[o] = out[o + 1] = out[o + 2] = dark;
      }
    }
  }
  return out;
}
