import type { Manifest } from "./types.js";
import { readStoredZip } from "./zip.js";
import { decodePpm, type DecodedFrame } from "./ppm.js";

export interface FrameArchive {
  manifest: Manifest;
  frames: DecodedFrame[];
}

/** Unpack a prophecy video archive into decoded frames ready for a canvas. */
export function loadFrameArchive(bytes: Uint8Array): FrameArchive {
  const entries = readStoredZip(bytes);
  const manifestBytes = entries.get("manifest.json");
  if (!manifestBytes) throw new Error("frame archive: manifest.json missing");
  const manifest = JSON.parse(new TextDecoder().decode(manifestBytes)) as Manifest;

  const frameNames = [...entries.keys()].filter((n) => n !== "manifest.json").sort();
  const frames = frameNames.map((name) => {
    const frame = decodePpm(entries.get(name)!);
    if (frame.width !== manifest.width || frame.height !== manifest.height) {
      throw new Error(`frame archive: ${name} is ${frame.width}x${frame.height}, manifest says ${manifest.width}x${manifest.height}`);
    }
    return frame;
  });
  if (frames.length !== manifest.frame_count) {
    throw new Error(`frame archive: ${frames.length} frames, manifest says ${manifest.frame_count}`);
  }
  return { manifest, frames };
}
