/** Pure UI logic, kept free of the DOM so it is directly testable. */

import type { EventItem } from "./types";

/** Seconds the player rewinds ahead of a selected event. */
export const SEEK_REWIND_S = 2.0;

/** Where the player should land for an event (server hint wins if present). */
export function seekTarget(event: EventItem): number {
  if (event.seek_to_s !== undefined && event.seek_to_s !== null) {
    return Math.max(0, event.seek_to_s);
  }
  const base = event.reference_start_s ?? event.annotation?.pass_start_s ?? 0;
  return Math.max(0, base - SEEK_REWIND_S);
}

/** One video frame in seconds; fps comes from the match manifest. */
export function frameStepS(fps: number): number {
  if (!Number.isFinite(fps) || fps < 1) {
    throw new Error(`invalid fps: ${fps}`);
  }
  return 1 / fps;
}

/** Same rule the server enforces: both times present implies start < end. */
export function validatePair(
  startS: number | null,
  endS: number | null,
): string | null {
  for (const value of [startS, endS]) {
    if (value !== null && (!Number.isFinite(value) || value < 0)) {
      return "times must be non-negative numbers";
    }
  }
  if (startS !== null && endS !== null && startS >= endS) {
    return "pass start must be earlier than pass end";
  }
  return null;
}

/** Times render in seconds with two decimals everywhere. */
export function formatTime(seconds: number | null | undefined): string {
  if (seconds === null || seconds === undefined) {
    return "—";
  }
  return seconds.toFixed(2);
}

export interface EventRow {
  eventId: string;
  referenceLabel: string;
  startLabel: string;
  endLabel: string;
  annotated: boolean;
  revision: number;
  seekToS: number;
}

/** Flatten an API event into the table row the UI renders. */
export function toRow(event: EventItem): EventRow {
  const annotation = event.annotation;
  const annotated =
    annotation !== null &&
    annotation.pass_start_s !== null &&
    annotation.pass_end_s !== null;
  return {
    eventId: event.event_id,
    referenceLabel: formatTime(event.reference_start_s),
    startLabel: formatTime(annotation?.pass_start_s),
    endLabel: formatTime(annotation?.pass_end_s),
    annotated,
    revision: annotation?.revision ?? 0,
    seekToS: seekTarget(event),
  };
}

/** Clamp a playback time into a half's duration. */
export function clampTime(time: number, durationS: number): number {
  if (!Number.isFinite(time)) {
    return 0;
  }
  return Math.min(Math.max(time, 0), Math.max(durationS, 0));
}

/** Capture a playback time for tagging: hundredth-of-a-second precision. */
export function captureTime(currentTime: number): number {
  return Math.round(currentTime * 100) / 100;
}
