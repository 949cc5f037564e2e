import { DeformRequestPayload, MeshData } from "./types.js";

export class ServiceError extends Error {
  constructor(public status: number, message: string) {
    super(message);
  }
}

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

/** Thin client over the deformation service HTTP API. */
export class ServiceClient {
  constructor(
    private baseUrl: string,
    private fetchImpl: FetchLike = (url, init) => fetch(url, init),
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const response = await this.fetchImpl(`${this.baseUrl}${path}`, init);
    if (!response.ok) {
      let detail = response.statusText;
      try {
        const body = await response.json();
        detail = body.detail ?? body.error ?? detail;
      } catch {
        // non-JSON error body; keep the status text
      }
      throw new ServiceError(response.status, `${response.status}: ${detail}`);
    }
    return (await response.json()) as T;
  }

  health(): Promise<{ status: string }> {
    return this.request("/health");
  }

  poses(): Promise<string[]> {
    return this.request("/poses");
  }

  mesh(id: string): Promise<MeshData> {
    return this.request(`/mesh/${encodeURIComponent(id)}`);
  }

  encode(poseId: string): Promise<{ z: number[] }> {
    return this.request("/encode", {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ poseId }),
    });
  }

  deform(payload: DeformRequestPayload): Promise<{ vertices: number[][] }> {
    return this.request("/deform", {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(payload),
    });
  }
}
