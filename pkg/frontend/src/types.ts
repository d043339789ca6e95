/** Wire types of the teaching service JSON contract. */

export interface SessionConfig {
  generic_words?: number;
  topics?: number;
  specific_words?: number;
  gibbs_sweeps?: number;
  bootstrap_views?: number;
  unknown_threshold?: number;
  seed?: number;
}

export interface CreateSessionResponse {
  session_id: string;
  config: Record<string, unknown>;
}

export interface OcdEntry {
  category: string;
  ocd: number;
}

export interface ClassifyResponse {
  label: string;
  per_category_ocd: OcdEntry[];
  margin: number | null;
  object_ref: string;
  points: [number, number, number][];
}

export interface TeachResponse {
  name: string;
  instances: number;
  known_categories: number;
  bootstrapped: boolean;
}

export interface CorrectResponse {
  name: string;
  instances: number;
}

export interface CategoryCard {
  name: string;
  instances: number;
}

export interface StateResponse {
  session_id: string;
  bootstrapped: boolean;
  categories: CategoryCard[];
  accuracy: number | null;
  events: number;
}

export interface EventEntry {
  seq: number;
  kind: string;
  [key: string]: unknown;
}

export interface EventsResponse {
  events: EventEntry[];
}

export interface ServiceErrorBody {
  code: string;
  message: string;
  detail?: unknown;
}
