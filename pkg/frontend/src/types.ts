export interface MeshData {
  vertices: number[][];
  faces: number[][];
}

export interface DeformPartPayload {
  poseId: string;
  faceIndices: number[];
}

export interface DeformRequestPayload {
  parts: DeformPartPayload[];
  alpha: number;
}

/** A pose assigned to a painted region; the mask is snapshotted when the
 * part is committed so later painting does not mutate it. */
export interface EditorPart {
  poseId: string;
  maskSnapshot: number[];
}
