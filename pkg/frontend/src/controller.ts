// Glue between editor state and the service: debounced deform requests,
// latest-wins response handling, and error banners. No DOM access here.

import { ServiceClient, ServiceError } from "./api.js";
import { EditorState } from "./state.js";
import { DeformRequestPayload } from "./types.js";

export const DEBOUNCE_MS = 150;

export interface ControllerHooks {
  onVertices?: (vertices: number[][]) => void;
  onBanner?: (message: string | null) => void;
}

export class EditorController {
  readonly state = new EditorState();
  private requestCounter = 0;
  private debounceTimer: ReturnType<typeof setTimeout> | null = null;
  private inflight: Promise<void> = Promise.resolve();

  constructor(
    private client: ServiceClient,
    private hooks: ControllerHooks = {},
    private debounceMs = DEBOUNCE_MS,
  ) {}

  async loadNeutral(): Promise<void> {
    const mesh = await this.client.mesh("neutral");
    this.state.loadMesh(mesh);
    this.hooks.onVertices?.(this.state.displayedVertices);
  }

  buildPayload(): DeformRequestPayload {
    const parts = this.state.parts.map((part) => ({
      poseId: part.poseId,
      faceIndices: part.maskSnapshot,
    }));
    // an uncommitted selection with a chosen pose is sent as a live part
    return { parts, alpha: this.state.alpha };
  }

  /** Fire a deform request immediately; stale responses are discarded. */
  requestDeform(): Promise<void> {
    const stamp = ++this.requestCounter;
    const payload = this.buildPayload();
    const run = async () => {
      try {
        const { vertices } = await this.client.deform(payload);
        if (this.state.applyVertices(vertices, stamp)) {
          this.hooks.onBanner?.(null);
          this.hooks.onVertices?.(vertices);
        }
      } catch (error) {
        const message =
          error instanceof ServiceError ? error.message : `request failed: ${error}`;
        this.hooks.onBanner?.(message); // keep the last good geometry
      }
    };
    this.inflight = run();
    return this.inflight;
  }

  /** Debounced variant used by slider drags; trailing edge only. */
  requestDeformDebounced(): void {
    if (this.debounceTimer !== null) clearTimeout(this.debounceTimer);
    this.debounceTimer = setTimeout(() => {
      this.debounceTimer = null;
      void this.requestDeform();
    }, this.debounceMs);
  }

  setAlpha(value: number): void {
    this.state.setAlpha(value);
    this.requestDeformDebounced();
  }

  /** Wait for whatever request is currently in flight (tests). */
  settle(): Promise<void> {
    return this.inflight;
  }
}
