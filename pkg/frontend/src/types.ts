/** Payload shapes of the annotation service API. */

export interface HalfSummary {
  half: number;
  fps: number;
  frame_count: number;
  duration_s: number;
  has_video: boolean;
  event_count: number;
}

export interface MatchSummary {
  match_id: string;
  halves: HalfSummary[];
}

export interface AnnotationRecord {
  match_id: string;
  half: number;
  event_id: string;
  pass_start_s: number | null;
  pass_end_s: number | null;
  operator_id: string;
  updated_at: string;
  revision: number;
}

export interface EventItem {
  event_id: string;
  reference_start_s: number | null;
  reference_end_s: number | null;
  seek_to_s: number;
  annotation: AnnotationRecord | null;
}

export interface EventsResponse {
  events: EventItem[];
}
