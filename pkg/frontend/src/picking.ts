// Ray-triangle picking (Moller-Trumbore) and brush growth over the face
// graph; pure math so headless tests can exercise it with explicit rays.

import { MeshData } from "./types.js";

export type Vec3 = [number, number, number];

const EPS = 1e-12;

function sub(a: Vec3, b: Vec3): Vec3 {
  return [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
}

function cross(a: Vec3, b: Vec3): Vec3 {
  return [
    a[1] * b[2] - a[2] * b[1],
    a[2] * b[0] - a[0] * b[2],
    a[0] * b[1] - a[1] * b[0],
  ];
}

function dot(a: Vec3, b: Vec3): number {
  return a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
}

export function rayTriangle(
  origin: Vec3,
  direction: Vec3,
  a: Vec3,
  b: Vec3,
  c: Vec3,
): number | null {
  const e1 = sub(b, a);
  const e2 = sub(c, a);
  const p = cross(direction, e2);
  const det = dot(e1, p);
  if (Math.abs(det) < EPS) return null; // parallel
  const inv = 1.0 / det;
  const s = sub(origin, a);
  const u = dot(s, p) * inv;
  if (u < -EPS || u > 1 + EPS) return null;
  const q = cross(s, e1);
  const v = dot(direction, q) * inv;
  if (v < -EPS || u + v > 1 + EPS) return null;
  const t = dot(e2, q) * inv;
  return t > EPS ? t : null;
}

/** Index of the nearest face hit by the ray, or null on a miss. */
export function pickFace(
  mesh: MeshData,
  vertices: number[][],
  origin: Vec3,
  direction: Vec3,
): number | null {
  let best: number | null = null;
  let bestT = Infinity;
  for (let f = 0; f < mesh.faces.length; f++) {
    const [i, j, k] = mesh.faces[f];
    const t = rayTriangle(
      origin,
      direction,
      vertices[i] as Vec3,
      vertices[j] as Vec3,
      vertices[k] as Vec3,
    );
    if (t !== null && t < bestT) {
      bestT = t;
      best = f;
    }
  }
  return best;
}

/** Edge-sharing neighbour lists, built once per mesh for brush growth. */
export function faceAdjacency(mesh: MeshData): number[][] {
  const edgeToFaces = new Map<string, number[]>();
  mesh.faces.forEach((face, f) => {
    for (let e = 0; e < 3; e++) {
      const u = face[e];
      const w = face[(e + 1) % 3];
      const key = u < w ? `${u}:${w}` : `${w}:${u}`;
      const members = edgeToFaces.get(key);
      if (members) {
        members.push(f);
      } else {
        edgeToFaces.set(key, [f]);
      }
    }
  });
  const neighbours: number[][] = mesh.faces.map(() => []);
  for (const members of edgeToFaces.values()) {
    for (const f of members) {
      for (const g of members) {
        if (g !== f) neighbours[f].push(g);
      }
    }
  }
  return neighbours;
}

/** Faces within `radius` hops of the seed face (BFS over shared edges). */
export function growBrush(
  seed: number,
  radius: number,
  neighbours: number[][],
): number[] {
  const out = [seed];
  const depth = new Map<number, number>([[seed, 0]]);
  let frontier = [seed];
  for (let d = 1; d <= radius; d++) {
    const next: number[] = [];
    for (const f of frontier) {
      for (const g of neighbours[f]) {
        if (!depth.has(g)) {
          depth.set(g, d);
          next.push(g);
          out.push(g);
        }
      }
    }
    frontier = next;
  }
  return out;
}
