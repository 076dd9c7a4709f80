/**
 * Minimal MAT-file (level 5) reader covering what BCI recordings need:
 * numeric arrays (double/single/int*), cell arrays, struct arrays, char
 * arrays, and zlib-compressed elements. Matrices come back flattened in
 * MATLAB's column-major order together with their dimensions.
 */

import { inflateSync } from "node:zlib";

export const MI_INT8 = 1;
export const MI_UINT8 = 2;
export const MI_INT16 = 3;
export const MI_UINT16 = 4;
export const MI_INT32 = 5;
export const MI_UINT32 = 6;
export const MI_SINGLE = 7;
export const MI_DOUBLE = 9;
export const MI_INT64 = 12;
export const MI_UINT64 = 13;
export const MI_MATRIX = 14;
export const MI_COMPRESSED = 15;
export const MI_UTF8 = 16;

export const MX_CELL = 1;
export const MX_STRUCT = 2;
export const MX_OBJECT = 3;
export const MX_CHAR = 4;
export const MX_DOUBLE = 6;
export const MX_SINGLE = 7;
export const MX_INT8 = 8;
export const MX_UINT8 = 9;
export const MX_INT16 = 10;
export const MX_UINT16 = 11;
export const MX_INT32 = 12;
export const MX_UINT32 = 13;

export type MatValue =
  | { kind: "numeric"; dims: number[]; data: Float64Array }
  | { kind: "char"; dims: number[]; text: string }
  | { kind: "cell"; dims: number[]; items: (MatValue | null)[] }
  | { kind: "struct"; dims: number[]; fields: Record<string, (MatValue | null)[]> };

export class MatFormatError extends Error {}

class Cursor {
  constructor(public buf: Buffer, public offset = 0) {}

  remaining(): number {
    return this.buf.length - this.offset;
  }

  need(n: number, what: string): void {
    if (this.remaining() < n) {
      throw new MatFormatError(
        `truncated MAT data while reading ${what} at offset ${this.offset}`,
      );
    }
  }
}

interface RawElement {
  type: number;
  payload: Buffer;
}

/** One tagged data element; handles the small-element packing. */
function readElement(cur: Cursor): RawElement {
  cur.need(8, "element tag");
  const typeField = cur.buf.readUInt32LE(cur.offset);
  const small = typeField >>> 16;
  if (small !== 0) {
    const type = typeField & 0xffff;
    const size = small;
    const payload = cur.buf.subarray(cur.offset + 4, cur.offset + 4 + size);
    cur.offset += 8;
    return { type, payload: Buffer.from(payload) };
  }
  const type = typeField;
  const size = cur.buf.readUInt32LE(cur.offset + 4);
  cur.offset += 8;
  cur.need(size, "element payload");
  const payload = cur.buf.subarray(cur.offset, cur.offset + size);
  cur.offset += size;
  // payloads are padded to 8-byte boundaries (except inside compressed data)
  const pad = (8 - (size % 8)) % 8;
  cur.offset += Math.min(pad, cur.remaining());
  return { type, payload: Buffer.from(payload) };
}

function numericToFloat64(type: number, payload: Buffer, what: string): Float64Array {
  const view = new DataView(payload.buffer, payload.byteOffset, payload.byteLength);
  const read = (i: number): number => {
    switch (type) {
      case MI_INT8:
        return view.getInt8(i);
      case MI_UINT8:
        return view.getUint8(i);
      case MI_INT16:
        return view.getInt16(2 * i, true);
      case MI_UINT16:
        return view.getUint16(2 * i, true);
      case MI_INT32:
        return view.getInt32(4 * i, true);
      case MI_UINT32:
        return view.getUint32(4 * i, true);
      case MI_SINGLE:
        return view.getFloat32(4 * i, true);
      case MI_DOUBLE:
        return view.getFloat64(8 * i, true);
      case MI_INT64:
        return Number(view.getBigInt64(8 * i, true));
      case MI_UINT64:
        return Number(view.getBigUint64(8 * i, true));
      default:
        throw new MatFormatError(`unsupported numeric storage type ${type} in ${what}`);
    }
  };
  const bytesPer: Record<number, number> = {
    [MI_INT8]: 1, [MI_UINT8]: 1, [MI_INT16]: 2, [MI_UINT16]: 2,
    [MI_INT32]: 4, [MI_UINT32]: 4, [MI_SINGLE]: 4, [MI_DOUBLE]: 8,
    [MI_INT64]: 8, [MI_UINT64]: 8,
  };
  const width = bytesPer[type];
  if (!width) throw new MatFormatError(`unsupported numeric storage type ${type} in ${what}`);
  const count = Math.floor(payload.length / width);
  const out = new Float64Array(count);
  for (let i = 0; i < count; i++) out[i] = read(i);
  return out;
}

function parseMatrix(payload: Buffer): { name: string; value: MatValue | null } {
  if (payload.length === 0) return { name: "", value: null }; // empty cell slot
  const cur = new Cursor(payload);

  const flagsEl = readElement(cur);
  if (flagsEl.type !== MI_UINT32 || flagsEl.payload.length < 8) {
    throw new MatFormatError("matrix is missing its array-flags element");
  }
  const classId = flagsEl.payload.readUInt32LE(0) & 0xff;

  const dimsEl = readElement(cur);
  const dims = Array.from(numericToFloat64(dimsEl.type, dimsEl.payload, "dimensions"), Number);

  const nameEl = readElement(cur);
  const name = nameEl.payload.toString("utf-8").replace(/\0+$/, "");

  const total = dims.reduce((a, b) => a * b, 1);

  if (classId === MX_CELL) {
    const items: (MatValue | null)[] = [];
    for (let i = 0; i < total; i++) {
      const el = readElement(cur);
      if (el.type !== MI_MATRIX) {
        throw new MatFormatError(`cell item ${i} is not a matrix element`);
      }
      items.push(parseMatrix(el.payload).value);
    }
    return { name, value: { kind: "cell", dims, items } };
  }

  if (classId === MX_STRUCT || classId === MX_OBJECT) {
    if (classId === MX_OBJECT) readElement(cur); // class name, ignored
    const lenEl = readElement(cur);
    const fieldLen = Number(numericToFloat64(lenEl.type, lenEl.payload, "field length")[0]);
    const namesEl = readElement(cur);
    const fieldCount = fieldLen > 0 ? namesEl.payload.length / fieldLen : 0;
    const names: string[] = [];
    for (let i = 0; i < fieldCount; i++) {
      names.push(
        namesEl.payload
          .subarray(i * fieldLen, (i + 1) * fieldLen)
          .toString("utf-8")
          .replace(/\0+$/, ""),
      );
    }
    const fields: Record<string, (MatValue | null)[]> = {};
    for (const n of names) fields[n] = [];
    for (let e = 0; e < total; e++) {
      for (const n of names) {
        const el = readElement(cur);
        if (el.type !== MI_MATRIX) {
          throw new MatFormatError(`struct field ${n} is not a matrix element`);
        }
        fields[n].push(parseMatrix(el.payload).value);
      }
    }
    return { name, value: { kind: "struct", dims, fields } };
  }

  if (classId === MX_CHAR) {
    const el = readElement(cur);
    let text: string;
    if (el.type === MI_UTF8) {
      text = el.payload.toString("utf-8");
    } else {
      const codes = numericToFloat64(el.type, el.payload, "char data");
      text = String.fromCharCode(...Array.from(codes, Number));
    }
    return { name, value: { kind: "char", dims, text } };
  }

  // numeric classes: real part only (imaginary parts are not used here)
  const dataEl = readElement(cur);
  const data = numericToFloat64(dataEl.type, dataEl.payload, `numeric array ${name}`);
  if (data.length < total) {
    throw new MatFormatError(
      `numeric array ${name} declares ${total} values but stores ${data.length}`,
    );
  }
  return { name, value: { kind: "numeric", dims, data: data.subarray(0, total) } };
}

/** Parse a MAT 5 file into its top-level variables. */
export function readMat(buf: Buffer): Record<string, MatValue | null> {
  if (buf.length < 128) throw new MatFormatError("file shorter than the 128-byte MAT header");
  const endian = buf.toString("latin1", 126, 128);
  if (endian !== "IM") {
    throw new MatFormatError(`unsupported byte order marker ${JSON.stringify(endian)}`);
  }
  const version = buf.readUInt16LE(124);
  if (version !== 0x0100) {
    throw new MatFormatError(`unsupported MAT version 0x${version.toString(16)}`);
  }

  const vars: Record<string, MatValue | null> = {};
  const cur = new Cursor(buf, 128);
  while (cur.remaining() >= 8) {
    const el = readElement(cur);
    let type = el.type;
    let payload = el.payload;
    if (type === MI_COMPRESSED) {
      const inner = new Cursor(inflateSync(payload));
      const unpacked = readElement(inner);
      type = unpacked.type;
      payload = unpacked.payload;
    }
    if (type !== MI_MATRIX) {
      continue; // skip unknown top-level elements
    }
    const { name, value } = parseMatrix(payload);
    if (name) vars[name] = value;
  }
  return vars;
}

/** Column-major (r, c) accessor for a 2-D numeric value. */
export function at(value: MatValue, row: number, col: number): number {
  if (value.kind !== "numeric") throw new MatFormatError("expected a numeric array");
  const rows = value.dims[0];
  return value.data[row + col * rows];
}

export function asVector(value: MatValue | null): number[] {
  if (!value || value.kind !== "numeric") return [];
  return Array.from(value.data, Number);
}

export function asScalar(value: MatValue | null, what: string): number {
  if (!value || value.kind !== "numeric" || value.data.length < 1) {
    throw new MatFormatError(`expected a numeric scalar for ${what}`);
  }
  return Number(value.data[0]);
}
