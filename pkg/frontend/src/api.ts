import type { ArchiveEntry, StatusResponse, ViewedResponse } from "./types.js";

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly code: string,
    message: string,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

export interface StatusPoll {
  body: StatusResponse;
  retryAfterS: number | null;
}

export interface VideoBytes {
  bytes: Uint8Array;
  digest: string;
}

/** Thin fetch wrapper around the oracle service's public HTTP surface. */
export class HallApi {
  /** Running tally of 409 responses. A correct client never triggers one. */
  conflictCount = 0;

  constructor(readonly baseUrl: string = "") {}

  async createSession(): Promise<string> {
    const body = await this.json<{ session_id: string }>(
      await this.send("POST", "/v1/sessions"),
    );
    return body.session_id;
  }

  async submitQuestion(id: string, wav: Uint8Array<ArrayBuffer>, seed?: number): Promise<StatusResponse> {
    const query = seed === undefined ? "" : `?seed=${seed}`;
    const res = await this.send("POST", `/v1/sessions/${id}/question${query}`, {
      body: wav,
      headers: { "content-type": "audio/wav" },
    });
    return this.json<StatusResponse>(res);
  }

  async status(id: string): Promise<StatusPoll> {
    const res = await this.send("GET", `/v1/sessions/${id}`);
    const header = res.headers.get("retry-after");
    const retryAfterS = header === null ? null : Number(header);
    return { body: await this.json<StatusResponse>(res), retryAfterS };
  }

  async view(id: string): Promise<StatusResponse> {
    return this.json(await this.send("POST", `/v1/sessions/${id}/view`));
  }

  async fetchProphecy(id: string): Promise<VideoBytes> {
    return this.videoBytes(await this.send("GET", `/v1/sessions/${id}/prophecy`));
  }

  async finishViewing(id: string): Promise<ViewedResponse> {
    return this.json(await this.send("POST", `/v1/sessions/${id}/viewed`));
  }

  async sampleArchive(n: number, seed: number): Promise<ArchiveEntry[]> {
    const body = await this.json<{ entries: ArchiveEntry[] }>(
      await this.send("GET", `/v1/archive/sample?n=${n}&seed=${seed}`),
    );
    return body.entries;
  }

  async archiveVideo(id: string): Promise<VideoBytes> {
    return this.videoBytes(await this.send("GET", `/v1/archive/${id}/video`));
  }

  async healthz(): Promise<boolean> {
    try {
      const res = await fetch(`${this.baseUrl}/healthz`);
      return res.ok;
    } catch {
      return false;
    }
  }

  private async send(method: string, path: string, init: RequestInit = {}): Promise<Response> {
    const res = await fetch(`${this.baseUrl}${path}`, { method, ...init });
    if (res.ok) return res;
    if (res.status === 409) this.conflictCount++;
    let code = "http_error";
    let message = `unexpected HTTP ${res.status}`;
    try {
      const body = (await res.json()) as { code?: string; message?: string };
      if (body.code) code = body.code;
      if (body.message) message = body.message;
    } catch {
      // non-JSON error body, keep the generic message
    }
    throw new ApiError(res.status, code, message);
  }

  private async json<T>(res: Response): Promise<T> {
    return (await res.json()) as T;
  }

  private async videoBytes(res: Response): Promise<VideoBytes> {
    const digest = res.headers.get("x-blob-digest") ?? "";
    return { bytes: new Uint8Array(await res.arrayBuffer()), digest };
  }
}
