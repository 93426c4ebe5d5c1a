/** Fixture audio for typed questions.
 *
 * The server's mock transcriber reads a marker out of the PCM payload:
 * "HALLFX1:" then "key\x1flang\x1ftext" in UTF-8, a NUL, then zero padding.
 * Wrapping the visitor's typed text this way lets the browser skip the
 * microphone entirely while still uploading a genuine WAV.
 */

const MAGIC = "HALLFX1:";
const FIELD_SEP = "\x1f";
const SAMPLE_RATE = 16000;
const MAX_DURATION_S = 60;

/** PCM16 payload carrying the fixture record, at least one second long. */
export function buildFixturePayload(key: string, lang: string, text: string): Uint8Array<ArrayBuffer> {
  if (!key) throw new Error("fixture key must be nonempty");
  if (key.includes(FIELD_SEP) || key.includes("\x00")) {
    throw new Error("fixture key contains reserved separator bytes");
  }
  const body = [key, lang, text].join(FIELD_SEP);
  const encoded = new TextEncoder().encode(MAGIC + body);
  let headerLen = encoded.length + 1; // NUL terminator
  if (headerLen % 2) headerLen += 1; // keep whole 16-bit samples

  // Grow the clip to fit long questions; the server caps clips at 60 s.
  const sampleCount = Math.max(SAMPLE_RATE, Math.ceil(headerLen / 2));
  if (sampleCount > MAX_DURATION_S * SAMPLE_RATE) {
    throw new Error("question too long for a fixture clip");
  }
  const payload = new Uint8Array(sampleCount * 2);
  payload.set(encoded, 0);
  return payload;
}

/** Wrap little-endian PCM16 bytes in a minimal mono WAV container. */
export function encodeWavFromPcm(pcm: Uint8Array, sampleRateHz: number): Uint8Array<ArrayBuffer> {
  const buffer = new ArrayBuffer(44 + pcm.length);
  const view = new DataView(buffer);
  const writeStr = (off: number, str: string) => {
    for (let i = 0; i < str.length; i++) view.setUint8(off + i, str.charCodeAt(i));
  };
  writeStr(0, "RIFF");
  view.setUint32(4, 36 + pcm.length, true);
  writeStr(8, "WAVEfmt ");
  view.setUint32(16, 16, true);
  view.setUint16(20, 1, true); // PCM
  view.setUint16(22, 1, true); // mono
  view.setUint32(24, sampleRateHz, true);
  view.setUint32(28, sampleRateHz * 2, true);
  view.setUint16(32, 2, true);
  view.setUint16(34, 16, true);
  writeStr(36, "data");
  view.setUint32(40, pcm.length, true);
  new Uint8Array(buffer).set(pcm, 44);
  return new Uint8Array(buffer);
}

export function fixtureWav(key: string, lang: string, text: string): Uint8Array<ArrayBuffer> {
  return encodeWavFromPcm(buildFixturePayload(key, lang, text), SAMPLE_RATE);
}
