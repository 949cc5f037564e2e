// Mask import/export in the engine's JSON schema: {name, faceIndices}.

export interface MaskJson {
  name: string;
  faceIndices: number[];
}

export function exportMask(name: string, selection: Set<number>): string {
  const faceIndices = [...selection].sort((a, b) => a - b);
  return JSON.stringify({ name, faceIndices });
}

export function importMask(text: string, faceCount: number): { name: string; selection: Set<number> } {
  const parsed = JSON.parse(text) as MaskJson;
  if (!Array.isArray(parsed.faceIndices)) {
    throw new Error("mask JSON needs a faceIndices array");
  }
  const selection = new Set<number>();
  for (const index of parsed.faceIndices) {
    if (!Number.isInteger(index) || index < 0 || index >= faceCount) {
      throw new Error(`face index ${index} out of range [0, ${faceCount})`);
    }
    selection.add(index);
  }
  return { name: parsed.name ?? "mask", selection };
}
