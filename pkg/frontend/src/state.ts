// Editor state, kept free of DOM and WebGL so a headless session can drive
// the full paint -> deform -> display loop in tests.

import { EditorPart, MeshData } from "./types.js";

export class EditorState {
  mesh: MeshData | null = null;
  /** vertices currently on screen; swapped in place by deform responses */
  displayedVertices: number[][] = [];
  selection = new Set<number>();
  parts: EditorPart[] = [];
  alpha = 1.0;
  /** monotonically increasing stamp of the last applied server response */
  lastResponseStamp = 0;

  get faceCount(): number {
    return this.mesh ? this.mesh.faces.length : 0;
  }

  loadMesh(mesh: MeshData): void {
    this.mesh = mesh;
    this.displayedVertices = mesh.vertices.map((v) => [...v]);
    this.selection.clear();
    this.parts = [];
    this.lastResponseStamp = 0;
  }

  setAlpha(value: number): void {
    this.alpha = Math.min(1, Math.max(0, value));
  }

  toggleFace(index: number): void {
    if (index < 0 || index >= this.faceCount) return;
    if (this.selection.has(index)) {
      this.selection.delete(index);
    } else {
      this.selection.add(index);
    }
  }

  paintFaces(indices: Iterable<number>, erase = false): void {
    for (const index of indices) {
      if (index < 0 || index >= this.faceCount) continue;
      if (erase) {
        this.selection.delete(index);
      } else {
        this.selection.add(index);
      }
    }
  }

  selectAll(): void {
    for (let i = 0; i < this.faceCount; i++) this.selection.add(i);
  }

  clearSelection(): void {
    this.selection.clear();
  }

  /** Snapshot the current selection as a part bound to a pose. */
  commitPart(poseId: string): EditorPart {
    const part = {
      poseId,
      maskSnapshot: [...this.selection].sort((a, b) => a - b),
    };
    this.parts.push(part);
    return part;
  }

  removePart(index: number): void {
    this.parts.splice(index, 1);
  }

  /** Apply a deform response unless a newer one was already applied. */
  applyVertices(vertices: number[][], stamp: number): boolean {
    if (stamp <= this.lastResponseStamp) return false; // stale, discard
    this.lastResponseStamp = stamp;
    this.displayedVertices = vertices;
    return true;
  }

  resetToNeutral(): void {
    if (this.mesh) {
      this.displayedVertices = this.mesh.vertices.map((v) => [...v]);
    }
  }
}
