/** Minimal binary PGM (P5, 8-bit) parsing for layer pixel access. */

export interface GrayImage {
  width: number;
  height: number;
  pixels: Uint8Array;
}

export function parsePgm(data: Uint8Array): GrayImage {
  if (data[0] !== 0x50 || data[1] !== 0x35) {
    throw new Error("not a binary PGM (P5) image");
  }
  const fields: number[] = [];
  let pos = 2;
  while (fields.length < 3) {
    while (pos < data.length && isSpace(data[pos])) pos++;
    if (data[pos] === 0x23) {
      while (pos < data.length && data[pos] !== 0x0a) pos++;
      continue;
    }
    let start = pos;
    while (pos < data.length && !isSpace(data[pos])) pos++;
    fields.push(parseInt(textOf(data, start, pos), 10));
  }
  pos++; // single whitespace after maxval
  const [width, height, maxval] = fields;
  if (maxval !== 255) throw new Error("only 8-bit PGM is supported");
  const pixels = data.slice(pos, pos + width * height);
  if (pixels.length !== width * height) throw new Error("truncated PGM payload");
  return { width, height, pixels };
}

export function countPixels(img: GrayImage, value: number): number {
  let n = 0;
  for (let i = 0; i < img.pixels.length; i++) {
    if (img.pixels[i] === value) n++;
  }
  return n;
}

export function pixelAt(img: GrayImage, x: number, y: number): number {
  if (x < 0 || y < 0 || x >= img.width || y >= img.height) return 0;
  return img.pixels[y * img.width + x];
}

function isSpace(byte: number): boolean {
  return byte === 0x20 || byte === 0x09 || byte === 0x0a || byte === 0x0d;
}

function textOf(data: Uint8Array, start: number, end: number): string {
  let s = "";
  for (let i = start; i < end; i++) s += String.fromCharCode(data[i]);
  return s;
}
