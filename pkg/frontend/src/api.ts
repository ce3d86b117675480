/** Typed client for the annotation service; the UI's only data source. */

import type { AnnotationRecord, EventsResponse, MatchSummary } from "./types";

/** A write based on a stale revision; the caller should reload and retry. */
export class ConflictError extends Error {
  constructor(message: string) {
    super(message);
    this.name = "ConflictError";
  }
}

/** The server rejected the annotation values (e.g. start >= end). */
export class RejectedError extends Error {
  constructor(message: string) {
    super(message);
    this.name = "RejectedError";
  }
}

async function errorMessage(response: Response): Promise<string> {
  try {
    const body = (await response.json()) as { error?: string };
    return body.error ?? response.statusText;
  } catch {
    return response.statusText;
  }
}

export class ApiClient {
  constructor(private readonly baseUrl: string = "") {}

  private url(path: string): string {
    return `${this.baseUrl}${path}`;
  }

  async listMatches(): Promise<MatchSummary[]> {
    const response = await fetch(this.url("/api/matches"));
    if (!response.ok) {
      throw new Error(await errorMessage(response));
    }
    return (await response.json()) as MatchSummary[];
  }

  async listEvents(matchId: string, half: number): Promise<EventsResponse> {
    const response = await fetch(
      this.url(`/api/matches/${encodeURIComponent(matchId)}/halves/${half}/events`),
    );
    if (!response.ok) {
      throw new Error(await errorMessage(response));
    }
    return (await response.json()) as EventsResponse;
  }

  /**
   * Upsert one annotation. `revision` is the revision the edit was based on
   * (0 for a fresh event); a stale value raises ConflictError.
   */
  async putAnnotation(
    matchId: string,
    half: number,
    eventId: string,
    passStartS: number | null,
    passEndS: number | null,
    revision: number,
    operatorId: string,
  ): Promise<AnnotationRecord> {
    const response = await fetch(
      this.url(
        `/api/matches/${encodeURIComponent(matchId)}/halves/${half}` +
          `/events/${encodeURIComponent(eventId)}/annotation`,
      ),
      {
        method: "PUT",
        headers: {
          "Content-Type": "application/json",
          "X-Operator-Id": operatorId,
        },
        body: JSON.stringify({
          pass_start_s: passStartS,
          pass_end_s: passEndS,
          revision,
        }),
      },
    );
    if (response.status === 409) {
      throw new ConflictError(await errorMessage(response));
    }
    if (response.status === 422) {
      throw new RejectedError(await errorMessage(response));
    }
    if (!response.ok) {
      throw new Error(await errorMessage(response));
    }
    return (await response.json()) as AnnotationRecord;
  }

  videoUrl(matchId: string, half: number): string {
    return this.url(`/api/matches/${encodeURIComponent(matchId)}/halves/${half}/video`);
  }

  exportUrl(matchId: string, half: number): string {
    return this.url(
      `/api/matches/${encodeURIComponent(matchId)}/halves/${half}/annotations.csv`,
    );
  }
}
