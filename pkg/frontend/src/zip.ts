/** Reader for the service's frame archives.
 *
 * The server always writes uncompressed (stored) ZIP entries, which makes a
 * full ZIP library unnecessary: walk the central directory, check the method,
 * slice the bytes out.
 */

const EOCD_SIG = 0x06054b50;
const CENTRAL_SIG = 0x02014b50;
const LOCAL_SIG = 0x04034b50;

export function readStoredZip(bytes: Uint8Array): Map<string, Uint8Array> {
  const view = new DataView(bytes.buffer, bytes.byteOffset, bytes.byteLength);

  // The end-of-central-directory record sits in the last 64 KiB (comment tail).
  let eocd = -1;
  const floor = Math.max(0, bytes.length - 65558);
  for (let pos = bytes.length - 22; pos >= floor; pos--) {
    if (view.getUint32(pos, true) === EOCD_SIG) {
      eocd = pos;
      break;
    }
  }
  if (eocd < 0) throw new Error("zip: no end-of-central-directory record");

  const entryCount = view.getUint16(eocd + 10, true);
  let pos = view.getUint32(eocd + 16, true);
  const entries = new Map<string, Uint8Array>();
  const decoder = new TextDecoder();

  for (let i = 0; i < entryCount; i++) {
    if (view.getUint32(pos, true) !== CENTRAL_SIG) {
      throw new Error("zip: corrupt central directory");
    }
    const method = view.getUint16(pos + 10, true);
    const size = view.getUint32(pos + 20, true);
    const nameLen = view.getUint16(pos + 28, true);
    const extraLen = view.getUint16(pos + 30, true);
    const commentLen = view.getUint16(pos + 32, true);
    const localOffset = view.getUint32(pos + 42, true);
    const name = decoder.decode(bytes.subarray(pos + 46, pos + 46 + nameLen));
    if (method !== 0) throw new Error(`zip: entry ${name} is compressed, expected stored`);

    if (view.getUint32(localOffset, true) !== LOCAL_SIG) {
      throw new Error(`zip: bad local header for ${name}`);
    }
    const localNameLen = view.getUint16(localOffset + 26, true);
    const localExtraLen = view.getUint16(localOffset + 28, true);
    const dataStart = localOffset + 30 + localNameLen + localExtraLen;
    entries.set(name, bytes.subarray(dataStart, dataStart + size));

    pos += 46 + nameLen + extraLen + commentLen;
  }
  return entries;
}
