// Explorer state machine, kept free of DOM concerns so it can be replayed
// in tests: query form validation, the breadcrumb trail of visited views
// (back-navigation restores cached responses without refetching), and a
// request sequence number that discards stale responses.

import {
  AmbiguousCandidate,
  ApiClient,
  ApiError,
  RecommendQuery,
  RecommendResponse,
} from "./api.js";

export interface QueryFormState {
  doi: string;
  title: string;
  issn: string;
  year: string;
  k: number;
}

export interface ViewSnapshot {
  /** what was asked (form query or a followed cluster) */
  source: { kind: "form"; query: RecommendQuery } | { kind: "cluster"; cluster: number };
  response: RecommendResponse;
}

export type SubmitOutcome =
  | { kind: "ok"; view: ViewSnapshot }
  | { kind: "not_found"; message: string }
  | { kind: "ambiguous"; message: string; candidates: AmbiguousCandidate[] }
  | { kind: "error"; message: string }
  | { kind: "stale" };

export const MIN_K = 1;
export const MAX_K = 50;

export function emptyForm(): QueryFormState {
  return { doi: "", title: "", issn: "", year: "", k: 10 };
}

export function canSubmit(form: QueryFormState): boolean {
  const hasSubject = form.doi.trim() !== "" || form.title.trim() !== "";
  return hasSubject && form.k >= MIN_K && form.k <= MAX_K;
}

export class ExplorerState {
  form: QueryFormState = emptyForm();
  current: ViewSnapshot | null = null;
  /** previously visited views, oldest first; grows only by navigation */
  readonly trail: ViewSnapshot[] = [];
  private seq = 0;

  constructor(private api: ApiClient) {}

  get breadcrumbLabels(): string[] {
    return this.trail.map((view) => view.response.label);
  }

  private async guarded(work: Promise<RecommendResponse>): Promise<RecommendResponse | null> {
    const ticket = ++this.seq;
    const response = await work;
    if (ticket !== this.seq) {
      return null; // a newer request superseded this one
    }
    return response;
  }

  private async run(
    source: ViewSnapshot["source"],
    work: Promise<RecommendResponse>,
    pushCurrent: boolean,
  ): Promise<SubmitOutcome> {
    let response: RecommendResponse | null;
    try {
      response = await this.guarded(work);
    } catch (error) {
      if (error instanceof ApiError && error.status === 404) {
        return { kind: "not_found", message: error.message };
      }
      if (error instanceof ApiError && error.status === 409) {
        return { kind: "ambiguous", message: error.message, candidates: error.candidates };
      }
      return { kind: "error", message: error instanceof Error ? error.message : String(error) };
    }
    if (response === null) {
      return { kind: "stale" };
    }
    if (pushCurrent && this.current !== null) {
      this.trail.push(this.current);
    }
    this.current = { source, response };
    return { kind: "ok", view: this.current };
  }

  /** Submit the query form; on success the view replaces the current one
   * and the previous view joins the breadcrumb trail. */
  submit(): Promise<SubmitOutcome> {
    if (!canSubmit(this.form)) {
      return Promise.resolve({ kind: "error", message: "query needs a DOI or a title" });
    }
    const query: RecommendQuery = {
      doi: this.form.doi.trim() || undefined,
      title: this.form.title.trim() || undefined,
      issn: this.form.issn.trim() || undefined,
      year: this.form.year.trim() || undefined,
      k: this.form.k,
    };
    return this.run({ kind: "form", query }, this.api.recommend(query), true);
  }

  /** Follow a rendered recommendation (or an ambiguity candidate): the
   * clicked cluster becomes the next query. */
  follow(cluster: number): Promise<SubmitOutcome> {
    return this.run(
      { kind: "cluster", cluster },
      this.api.recommendCluster(cluster, this.form.k),
      true,
    );
  }

  /** Step back one view without refetching; false at the trail's start. */
  back(): boolean {
    const previous = this.trail.pop();
    if (previous === undefined) {
      return false;
    }
    this.seq++; // invalidate any in-flight request
    this.current = previous;
    return true;
  }

  /** Seed the form from a journal shown in the map or rankings view. */
  seedFromJournal(key: string, title?: string): void {
    if (/^\d{4}-\d{3}[\dX]$/.test(key)) {
      this.form.issn = key;
      this.form.title = title ?? "";
    } else {
      this.form.issn = "";
      this.form.title = title ?? key;
    }
    this.form.doi = "";
  }
}
