/**
 * Waveforms and gradients cross the service boundary as base64-encoded
 * little-endian float64, so every value survives bit-for-bit. JavaScript
 * typed arrays use the platform byte order, which is little-endian on every
 * runtime Node supports.
 */

export function encodeFloat64(values: Float64Array): string {
  const view = Buffer.from(values.buffer, values.byteOffset, values.byteLength);
  return view.toString('base64');
}

export function decodeFloat64(payload: string): Float64Array {
  const buf = Buffer.from(payload, 'base64');
  if (buf.byteLength % 8 !== 0) {
    throw new Error(`array payload has ${buf.byteLength} bytes, not a multiple of 8`);
  }
  // copy so the result does not alias Buffer pool memory
  const out = new Float64Array(buf.byteLength / 8);
  for (let i = 0; i < out.length; i++) {
    out[i] = buf.readDoubleLE(i * 8);
  }
  return out;
}
