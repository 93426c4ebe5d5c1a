import type { ArchiveEntry, StatusResponse } from "./types.js";
import type { FrameArchive } from "./frames.js";

/** What the visitor is looking at. The first three mirror the server's veil;
 * the last one exists only in the client, while frames are on screen. */
export type Phase = "medium_visible" | "concealed" | "prophecy_ready" | "viewing_video";

export interface WallCard {
  entry: ArchiveEntry;
  /** Null when the video could not be fetched or decoded; render text only. */
  video: FrameArchive | null;
}

/** Client-side session model.
 *
 * Everything here is re-derivable from the latest status response plus two
 * local facts the server cannot know: that an ask is in flight, and that the
 * visitor pressed play. Reload safety depends on that property.
 */
export class OracleViewModel {
  sessionId: string | null = null;
  askError: string | null = null;
  failure: { stage: string; reason: string } | null = null;
  wall: WallCard[] = [];

  private latest: StatusResponse | null = null;
  private etaAnchorMs = 0;
  private askInFlight = false;
  private playing = false;

  beginSession(id: string): void {
    this.sessionId = id;
    this.latest = null;
    this.askError = null;
    this.failure = null;
    this.askInFlight = false;
    this.playing = false;
  }

  applyStatus(body: StatusResponse, nowMs: number): void {
    if (body.session_id !== this.sessionId) return;
    this.latest = body;
    this.etaAnchorMs = nowMs;
    this.failure = body.state === "failed" ? (body.error ?? { stage: "unknown", reason: "unknown" }) : null;
    if (body.state !== "viewing") this.playing = false;
    if (body.state !== "awaiting_question") this.askInFlight = false;
  }

  get phase(): Phase {
    if (this.latest === null) return "medium_visible";
    if (this.playing && this.latest.state === "viewing") return "viewing_video";
    return this.latest.veil;
  }

  get state(): StatusResponse["state"] | null {
    return this.latest?.state ?? null;
  }

  get progress(): number {
    return this.latest?.progress ?? 0;
  }

  /** Seconds left before the reveal, counted down locally between polls. */
  displayEta(nowMs: number): number {
    if (this.latest === null) return 0;
    const elapsed = (nowMs - this.etaAnchorMs) / 1000;
    return Math.max(0, this.latest.eta_s - elapsed);
  }

  canAsk(): boolean {
    if (this.sessionId === null || this.askInFlight) return false;
    return this.latest === null || this.latest.state === "awaiting_question";
  }

  /** Call before sending the question so a double press sends nothing. */
  askStarted(): void {
    this.askInFlight = true;
    this.askError = null;
  }

  /** The server refused the question (bad audio, too long). Session is still
   * waiting, so the visitor may edit and retry. */
  askRejected(message: string): void {
    this.askInFlight = false;
    this.askError = message;
  }

  viewingStarted(): void {
    this.playing = true;
  }

  setWall(cards: WallCard[]): void {
    this.wall = cards;
  }
}
