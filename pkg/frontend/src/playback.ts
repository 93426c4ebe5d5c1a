import type { DecodedFrame } from "./ppm.js";

export interface PlaybackHooks {
  /** Monotonic clock in milliseconds. */
  now(): number;
  /** Schedule the next tick (requestAnimationFrame in the browser). */
  schedule(cb: () => void): void;
}

function defaultHooks(): PlaybackHooks {
  const raf = typeof requestAnimationFrame === "function"
    ? (cb: () => void) => requestAnimationFrame(() => cb())
    : (cb: () => void) => setTimeout(cb, 16);
  return { now: () => performance.now(), schedule: raf };
}

/** Play frames at a fixed rate, resolving with the elapsed milliseconds.
 *
 * The frame index is derived from wall time, not from tick counting, so a
 * slow or bursty scheduler drops frames instead of stretching the video.
 */
export function playFrames(
  frames: readonly DecodedFrame[],
  fps: number,
  draw: (frame: DecodedFrame, index: number) => void,
  hooks: Partial<PlaybackHooks> = {},
): Promise<number> {
  const { now, schedule } = { ...defaultHooks(), ...hooks };
  if (frames.length === 0 || fps <= 0) return Promise.resolve(0);

  return new Promise((resolve) => {
    const start = now();
    let drawn = -1;
    const tick = () => {
      const elapsed = now() - start;
      const index = Math.floor((elapsed / 1000) * fps);
      if (index >= frames.length) {
        resolve(elapsed);
        return;
      }
      if (index !== drawn) {
        draw(frames[index]!, index);
        drawn = index;
      }
      schedule(tick);
    };
    draw(frames[0]!, 0);
    drawn = 0;
    schedule(tick);
  });
}
