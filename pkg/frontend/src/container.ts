/**
 * Binary grid container codec ("SEBG").
 *
 * Layout, little-endian: 4-byte magic "SEBG", u16 version (1), u16 dtype
 * (0 = float32 planes, 1 = uint32 bitfield), u32 height, u32 width,
 * u32 planes, then the planar row-major payload. Matches the format the
 * core CLI reads and writes, byte for byte.
 */

export const HEADER_SIZE = 20;
export const VERSION = 1;

export type DType = 'f32' | 'u32';

export interface GridContainer {
  dtype: DType;
  height: number;
  width: number;
  planes: number;
  data: Float32Array | Uint32Array;
}

const DTYPE_CODES: Record<DType, number> = { f32: 0, u32: 1 };

export function encodeContainer(grid: GridContainer): Buffer {
  const { dtype, height, width, planes, data } = grid;
  const expected = height * width * planes;
  if (data.length !== expected) {
    throw new Error(
      `container data length ${data.length} != height*width*planes = ${expected}`,
    );
  }
  if ((dtype === 'f32') !== (data instanceof Float32Array)) {
    throw new Error(`dtype ${dtype} does not match the typed array kind`);
  }
  const out = Buffer.alloc(HEADER_SIZE + data.byteLength);
  out.write('SEBG', 0, 'ascii');
  out.writeUInt16LE(VERSION, 4);
  out.writeUInt16LE(DTYPE_CODES[dtype], 6);
  out.writeUInt32LE(height, 8);
  out.writeUInt32LE(width, 12);
  out.writeUInt32LE(planes, 16);
  Buffer.from(data.buffer, data.byteOffset, data.byteLength).copy(out, HEADER_SIZE);
  return out;
}

export function decodeContainer(buf: Buffer): GridContainer {
  if (buf.length < HEADER_SIZE) {
    throw new Error(`container too short for header: ${buf.length} bytes`);
  }
  if (buf.toString('ascii', 0, 4) !== 'SEBG') {
    throw new Error('bad container magic at offset 0');
  }
  const version = buf.readUInt16LE(4);
  if (version !== VERSION) {
    throw new Error(`unsupported container version ${version} at offset 4`);
  }
  const code = buf.readUInt16LE(6);
  const height = buf.readUInt32LE(8);
  const width = buf.readUInt32LE(12);
  const planes = buf.readUInt32LE(16);
  const count = height * width * planes;
  const payload = buf.length - HEADER_SIZE;
  if (payload !== count * 4) {
    throw new Error(`payload has ${payload} bytes, expected ${count * 4}`);
  }
  // copy so the typed array is aligned and detached from the source buffer
  const bytes = new Uint8Array(buf.subarray(HEADER_SIZE));
  if (code === 0) {
    return { dtype: 'f32', height, width, planes, data: new Float32Array(bytes.buffer) };
  }
  if (code === 1) {
    return { dtype: 'u32', height, width, planes, data: new Uint32Array(bytes.buffer) };
  }
  throw new Error(`unknown dtype code ${code} at offset 6`);
}
