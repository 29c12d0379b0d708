import { bytesToBase64 } from "./png.js";
import type { CompleteResponse, ResampleRequest, Taxonomy, Variant } from "./types.js";

export class ApiError extends Error {
  readonly code: string;
  readonly status: number;

  constructor(status: number, code: string, message: string) {
    super(message);
    this.code = code;
    this.status = status;
  }
}

async function throwFromResponse(response: Response): Promise<never> {
  let code = "http_error";
  let message = `HTTP ${response.status}`;
  try {
    const body = await response.json();
    if (body.code) code = body.code;
    if (body.message) message = body.message;
  } catch {
    // non-JSON error body; keep the status line
  }
  throw new ApiError(response.status, code, message);
}

export class ApiClient {
  readonly baseUrl: string;

  constructor(baseUrl: string) {
    this.baseUrl = baseUrl.replace(/\/$/, "");
  }

  async getTaxonomy(): Promise<Taxonomy> {
    const response = await fetch(`${this.baseUrl}/taxonomy`);
    if (!response.ok) await throwFromResponse(response);
    return response.json();
  }

  async complete(sparsePng: Uint8Array, seed?: number, returnImage = true): Promise<CompleteResponse> {
    const response = await fetch(`${this.baseUrl}/complete`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({
        sparse_png_b64: bytesToBase64(sparsePng),
        seed,
        return_image: returnImage,
      }),
    });
    if (!response.ok) await throwFromResponse(response);
    return response.json();
  }

  async resample(request: ResampleRequest): Promise<Variant[]> {
    const response = await fetch(`${this.baseUrl}/resample`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(request),
    });
    if (!response.ok) await throwFromResponse(response);
    return response.json();
  }
}

/**
 * Keeps at most one completion request in flight; a submit issued while one
 * is running is queued (latest wins) and fired when the active one settles.
 */
export class CompletionQueue {
  private active: Promise<unknown> | null = null;
  private pending: (() => Promise<unknown>) | null = null;

  submit<T>(task: () => Promise<T>): Promise<T> {
    if (this.active) {
      return new Promise<T>((resolve, reject) => {
        this.pending = () => task().then(resolve, reject);
      });
    }
    const run = task();
    this.active = run.catch(() => undefined).then(() => {
      this.active = null;
      const next = this.pending;
      this.pending = null;
      if (next) this.submit(next);
    });
    return run;
  }

  get busy(): boolean {
    return this.active !== null;
  }
}
