import { ApiError, HallApi } from "./api.js";
import { fixtureWav } from "./wav.js";
import { loadFrameArchive } from "./frames.js";
import { playFrames, type PlaybackHooks } from "./playback.js";
import { OracleViewModel, type WallCard } from "./viewModel.js";
import type { DecodedFrame } from "./ppm.js";
import type { SessionStateName } from "./types.js";

export interface DriverOptions {
  /** Cards to request for the waiting wall. */
  wallSize?: number;
  /** Upper bound on the poll sleep, in seconds. */
  maxPollIntervalS?: number;
  sleep?: (ms: number) => Promise<void>;
  onSessionChange?: (id: string) => void;
  onUpdate?: (model: OracleViewModel) => void;
}

export interface ViewingResult {
  elapsedMs: number;
  archiveId: string | null;
  prophecyText: string;
}

const SETTLED: ReadonlySet<SessionStateName> = new Set(["ready", "viewing", "completed", "failed"]);

function defaultSleep(ms: number): Promise<void> {
  return new Promise((resolve) => setTimeout(resolve, ms));
}

/** Drives one visitor's journey against the service.
 *
 * The driver owns sequencing (ask, poll, view, archive refresh) while the
 * view model owns derived presentation state. Every request is gated on the
 * phase, so a well-behaved UI built on top of this never draws a 409.
 */
export class SessionDriver {
  private wallSeed: number;

  constructor(
    readonly api: HallApi,
    readonly model: OracleViewModel,
    private readonly opts: DriverOptions = {},
  ) {
    this.wallSeed = Math.floor(Math.random() * 1_000_000);
  }

  /** Resume the stored session if the server still knows it, else start fresh. */
  async start(storedId?: string | null): Promise<void> {
    if (storedId) {
      try {
        const poll = await this.api.status(storedId);
        this.model.beginSession(storedId);
        this.model.applyStatus(poll.body, Date.now());
        this.notify();
        return;
      } catch (err) {
        if (!(err instanceof ApiError && err.status === 404)) throw err;
      }
    }
    await this.freshSession();
  }

  private async freshSession(): Promise<void> {
    const id = await this.api.createSession();
    this.model.beginSession(id);
    const poll = await this.api.status(id);
    this.model.applyStatus(poll.body, Date.now());
    this.opts.onSessionChange?.(id);
    this.notify();
  }

  /** Submit the typed question as fixture audio.
   *
   * Returns false without touching the network when asking is not allowed,
   * which is what keeps a double press from ever reaching the server.
   */
  async askFixtureText(text: string, seed?: number): Promise<boolean> {
    if (!this.model.canAsk()) return false;
    const trimmed = text.trim();
    if (!trimmed) {
      this.model.askRejected("type a question first");
      this.notify();
      return false;
    }
    const id = this.model.sessionId!;
    this.model.askStarted();
    let wav: Uint8Array<ArrayBuffer>;
    try {
      wav = fixtureWav("web", "en", trimmed);
    } catch (err) {
      this.model.askRejected((err as Error).message);
      this.notify();
      return false;
    }
    try {
      const body = await this.api.submitQuestion(id, wav, seed);
      this.model.applyStatus(body, Date.now());
      this.notify();
      return true;
    } catch (err) {
      if (err instanceof ApiError && err.status >= 400 && err.status < 500) {
        this.model.askRejected(`${err.code}: ${err.message}`);
        this.notify();
        return false;
      }
      throw err;
    }
  }

  /** Poll until the session leaves the pipeline, refreshing the wall while
   * the veil is down. Respects the server's Retry-After hint. */
  async pollUntilSettled(): Promise<SessionStateName> {
    const sleep = this.opts.sleep ?? defaultSleep;
    const maxS = this.opts.maxPollIntervalS ?? 5;
    let wallLoaded = false;
    for (;;) {
      const id = this.model.sessionId!;
      const poll = await this.api.status(id);
      this.model.applyStatus(poll.body, Date.now());
      this.notify();
      if (SETTLED.has(poll.body.state)) return poll.body.state;
      if (!wallLoaded && this.model.phase === "concealed") {
        await this.refreshWall();
        wallLoaded = true;
      }
      const hintS = poll.retryAfterS ?? 1;
      await sleep(Math.min(hintS, maxS) * 1000);
    }
  }

  /** Pull a fresh sample of past prophecies for the waiting wall.
   *
   * A card whose video cannot be fetched or decoded keeps its text; the
   * wall must never go blank because one blob is missing.
   */
  async refreshWall(seed?: number): Promise<WallCard[]> {
    if (seed !== undefined) this.wallSeed = seed;
    const n = this.opts.wallSize ?? 8;
    const entries = await this.api.sampleArchive(n, this.wallSeed);
    const cards: WallCard[] = await Promise.all(
      entries.map(async (entry): Promise<WallCard> => {
        try {
          const { bytes } = await this.api.archiveVideo(entry.id);
          return { entry, video: loadFrameArchive(bytes) };
        } catch {
          return { entry, video: null };
        }
      }),
    );
    this.model.setWall(cards);
    this.notify();
    return cards;
  }

  /** Reveal: tell the server viewing started, play every frame, confirm
   * viewing finished, then hand the visitor a fresh session.
   *
   * A 409 on the way in means our picture of the session is stale, so
   * re-poll, re-derive the phase, and return null instead of playing.
   */
  async viewProphecy(
    draw: (frame: DecodedFrame, index: number) => void,
    playbackHooks: Partial<PlaybackHooks> = {},
  ): Promise<ViewingResult | null> {
    if (this.model.phase !== "prophecy_ready") return null;
    const id = this.model.sessionId!;
    if (this.model.state !== "viewing") {
      // After a reload mid-reveal the server is already in viewing.
      try {
        const body = await this.api.view(id);
        this.model.applyStatus(body, Date.now());
      } catch (err) {
        if (err instanceof ApiError && err.status === 409) {
          const poll = await this.api.status(id);
          this.model.applyStatus(poll.body, Date.now());
          this.notify();
          return null;
        }
        throw err;
      }
    }
    const { bytes } = await this.api.fetchProphecy(id);
    const { manifest, frames } = loadFrameArchive(bytes);
    this.model.viewingStarted();
    this.notify();
    const elapsedMs = await playFrames(frames, manifest.fps, draw, playbackHooks);
    const viewed = await this.api.finishViewing(id);
    await this.freshSession();
    return { elapsedMs, archiveId: viewed.archive_id, prophecyText: viewed.prophecy_text };
  }

  private notify(): void {
    this.opts.onUpdate?.(this.model);
  }
}
