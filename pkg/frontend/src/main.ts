import { ServiceClient } from "./api.js";
import { EditorController } from "./controller.js";
import { exportMask, importMask } from "./mask.js";
import { faceAdjacency, growBrush, pickFace } from "./picking.js";
import { Viewport } from "./renderer.js";

const SERVICE_URL =
  new URLSearchParams(location.search).get("service") ?? "http://127.0.0.1:8089";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

async function boot(): Promise<void> {
  const canvas = el<HTMLCanvasElement>("viewport");
  const viewport = new Viewport(canvas);
  const banner = el<HTMLDivElement>("banner");
  const client = new ServiceClient(SERVICE_URL);
  const controller = new EditorController(client, {
    onVertices: (vertices) => viewport.updateVertices(vertices),
    onBanner: (message) => {
      banner.textContent = message ?? "";
      banner.style.display = message ? "block" : "none";
    },
  });
  const state = controller.state;

  await controller.loadNeutral();
  viewport.setMesh(state.mesh!);
  const neighbours = faceAdjacency(state.mesh!);

  const poseSelect = el<HTMLSelectElement>("pose");
  for (const id of await client.poses()) {
    const option = document.createElement("option");
    option.value = id;
    option.textContent = id;
    poseSelect.appendChild(option);
  }

  const alphaSlider = el<HTMLInputElement>("alpha");
  const alphaValue = el<HTMLSpanElement>("alpha-value");
  alphaSlider.addEventListener("input", () => {
    alphaValue.textContent = Number(alphaSlider.value).toFixed(2);
    controller.setAlpha(Number(alphaSlider.value));
  });

  const brushRadius = el<HTMLInputElement>("brush");
  let erasing = false;
  el<HTMLButtonElement>("mode-paint").addEventListener("click", () => (erasing = false));
  el<HTMLButtonElement>("mode-erase").addEventListener("click", () => (erasing = true));

  let dragging = false;
  const paintAt = (event: PointerEvent) => {
    const { origin, direction } = viewport.rayFromPointer(event);
    const hit = pickFace(state.mesh!, state.displayedVertices, origin, direction);
    if (hit === null) return; // misses are ignored
    const brush = growBrush(hit, Number(brushRadius.value), neighbours);
    if (brush.length === 1 && !dragging) {
      state.toggleFace(hit); // single click toggles membership
    } else {
      state.paintFaces(brush, erasing);
    }
    viewport.updateSelection(state.selection);
  };
  canvas.addEventListener("pointerdown", (event) => {
    dragging = false;
    paintAt(event);
    dragging = true;
  });
  canvas.addEventListener("pointermove", (event) => {
    if (dragging && event.buttons) paintAt(event);
  });
  canvas.addEventListener("pointerup", () => (dragging = false));

  el<HTMLButtonElement>("select-all").addEventListener("click", () => {
    state.selectAll();
    viewport.updateSelection(state.selection);
  });
  el<HTMLButtonElement>("clear").addEventListener("click", () => {
    state.clearSelection();
    viewport.updateSelection(state.selection);
  });

  el<HTMLButtonElement>("add-part").addEventListener("click", () => {
    if (!poseSelect.value || state.selection.size === 0) return;
    state.commitPart(poseSelect.value);
    refreshParts();
    void controller.requestDeform();
  });

  const partList = el<HTMLUListElement>("parts");
  const refreshParts = () => {
    partList.innerHTML = "";
    state.parts.forEach((part, index) => {
      const item = document.createElement("li");
      item.textContent = `${part.poseId} (${part.maskSnapshot.length} faces) `;
      const remove = document.createElement("button");
      remove.textContent = "remove";
      remove.addEventListener("click", () => {
        state.removePart(index);
        refreshParts();
        void controller.requestDeform();
      });
      item.appendChild(remove);
      partList.appendChild(item);
    });
  };

  el<HTMLButtonElement>("export-mask").addEventListener("click", () => {
    const blob = new Blob([exportMask("viewer-mask", state.selection)], {
      type: "application/json",
    });
    const link = document.createElement("a");
    link.href = URL.createObjectURL(blob);
    link.download = "mask.json";
    link.click();
    URL.revokeObjectURL(link.href);
  });

  el<HTMLInputElement>("import-mask").addEventListener("change", async (event) => {
    const file = (event.target as HTMLInputElement).files?.[0];
    if (!file) return;
    const { selection } = importMask(await file.text(), state.faceCount);
    state.selection = selection;
    viewport.updateSelection(state.selection);
  });

  el<HTMLButtonElement>("reset").addEventListener("click", () => {
    state.parts = [];
    refreshParts();
    state.resetToNeutral();
    viewport.updateVertices(state.displayedVertices);
  });

  window.addEventListener("resize", () => viewport.resize());
}

boot().catch((error) => {
  const banner = document.getElementById("banner");
  if (banner) {
    banner.textContent = `failed to start: ${error}`;
    (banner as HTMLElement).style.display = "block";
  }
  console.error(error);
});
