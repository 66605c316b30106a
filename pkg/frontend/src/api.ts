/** Thin typed client for the scalebranch HTTP service. */

export interface WireLatent {
  subvectors: number[][];
}

export interface ModelInfo {
  name: string;
  stage: number;
  resolution: [number, number];
  subvector_dims: number[];
  has_encoder: boolean;
}

export interface Rendered {
  latent: WireLatent;
  image_png_b64: string;
}

export interface SweepResponse {
  base: WireLatent;
  values: number[];
  frames: Rendered[];
}

export interface EditRequestConfig {
  steps?: number;
  step_size?: number;
  restarts?: number;
  edge_weight?: number;
  init?: string;
}

export interface EditRequestBody {
  model: string;
  color?: number[][][];
  mask?: number[][];
  edge?: number[][];
  init_latent?: WireLatent;
  seed?: number;
  config?: EditRequestConfig;
}

export interface EditResult extends Rendered {
  loss: number;
  trace: number[];
  init_kind: string;
}

export interface JobTicket {
  id: string;
  status: "queued" | "running" | "done" | "failed";
  progress: number;
  result?: EditResult;
  error?: string;
}

export class ApiError extends Error {
  constructor(public status: number, detail: string) {
    super(detail);
  }
}

export class ApiClient {
  constructor(public baseUrl: string = "/api") {}

  private async req<T>(path: string, body?: unknown): Promise<T> {
    const res = await fetch(this.baseUrl + path, {
      method: body === undefined ? "GET" : "POST",
      headers: body === undefined ? undefined : { "content-type": "application/json" },
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    if (!res.ok) {
      let detail = res.statusText;
      try {
        detail = JSON.stringify((await res.json()).detail);
      } catch {
        /* non-JSON error body */
      }
      throw new ApiError(res.status, `${path}: ${detail}`);
    }
    return res.json() as Promise<T>;
  }

  async health(): Promise<{ status: string; models: number }> {
    return this.req("/healthz");
  }

  async listModels(): Promise<ModelInfo[]> {
    const body = await this.req<{ models: ModelInfo[] }>("/models");
    return body.models;
  }

  async generate(model: string, latent: WireLatent): Promise<Rendered> {
    return this.req("/generate", { model, latent });
  }

  async generateSeed(model: string, seed: number): Promise<Rendered> {
    return this.req("/generate", { model, seed });
  }

  /**
   * Candidate grid for the coarse-to-fine loop: sub-vectors below
   * `prefix.length` are pinned, the one at that scale varies, finer ones
   * are zero-fed by the server.
   */
  async candidates(
    model: string,
    prefix: number[][],
    count: number,
    seed: number,
  ): Promise<Rendered[]> {
    const body = await this.req<{ candidates: Rendered[] }>("/candidates", {
      model,
      prefix,
      count,
      seed,
    });
    return body.candidates;
  }

  async fuse(
    model: string,
    a: WireLatent,
    b: WireLatent,
    takeFromA: number[],
  ): Promise<Rendered> {
    return this.req("/fuse", { model, a, b, take_from_a: takeFromA });
  }

  async sweep(
    model: string,
    latent: WireLatent,
    subvector: number,
    values: number[],
  ): Promise<SweepResponse> {
    return this.req("/sweep", { model, latent, subvector, values });
  }

  async submitEdit(body: EditRequestBody): Promise<{ job_id: string; status: string }> {
    return this.req("/edit", body);
  }

  async getJob(id: string): Promise<JobTicket> {
    return this.req(`/jobs/${id}`);
  }

  /** Poll a job ticket until it is done or failed; throws on failure. */
  async pollJob(
    id: string,
    intervalMs = 250,
    timeoutMs = 120_000,
    onProgress?: (t: JobTicket) => void,
  ): Promise<EditResult> {
    const deadline = Date.now() + timeoutMs;
    while (Date.now() < deadline) {
      const ticket = await this.getJob(id);
      onProgress?.(ticket);
      if (ticket.status === "done") return ticket.result!;
      if (ticket.status === "failed") throw new ApiError(500, ticket.error ?? "job failed");
      await new Promise((r) => setTimeout(r, intervalMs));
    }
    throw new ApiError(408, `job ${id} still running after ${timeoutMs} ms`);
  }
}
