/** Wire types mirroring the service's public JSON responses. */

export type SessionStateName =
  | "awaiting_question"
  | "transcribing"
  | "generating_text"
  | "generating_video"
  | "ready"
  | "viewing"
  | "completed"
  | "failed";

export type VeilName = "medium_visible" | "concealed" | "prophecy_ready";

export interface StatusResponse {
  session_id: string;
  state: SessionStateName;
  veil: VeilName;
  eta_s: number;
  progress: number;
  error?: { stage: string; reason: string };
}

export interface ViewedResponse {
  archive_id: string | null;
  prophecy_text: string;
  state: SessionStateName;
  veil: VeilName;
}

export interface ArchiveEntry {
  id: string;
  prophecy_text: string;
  video_ref: string;
  created_at: string;
}

export interface Manifest {
  duration_s: number;
  fps: number;
  frame_count: number;
  width: number;
  height: number;
  prophecy_digest: string;
}
