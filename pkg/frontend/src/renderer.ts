// three.js rendering: non-indexed geometry so each face can carry its own
// selection overlay color; vertex updates swap positions in place.

import * as THREE from "three";
import { MeshData } from "./types.js";

const BASE_COLOR = new THREE.Color(0x7f9fc4);
const SELECTED_COLOR = new THREE.Color(0xd14b4b);

export class Viewport {
  private renderer: THREE.WebGLRenderer;
  private scene = new THREE.Scene();
  camera: THREE.PerspectiveCamera;
  private geometry: THREE.BufferGeometry | null = null;
  private surface: THREE.Mesh | null = null;
  private faces: number[][] = [];

  constructor(private canvas: HTMLCanvasElement) {
    this.renderer = new THREE.WebGLRenderer({ canvas, antialias: true });
    this.camera = new THREE.PerspectiveCamera(40, 1, 0.01, 100);
    this.camera.position.set(2, -4.5, 2.5);
    this.camera.up.set(0, 0, 1);
    this.scene.background = new THREE.Color(0x14171c);
    const key = new THREE.DirectionalLight(0xffffff, 2.0);
    key.position.set(2, -3, 4);
    this.scene.add(key);
    this.scene.add(new THREE.AmbientLight(0xffffff, 0.45));
    this.resize();
  }

  setMesh(mesh: MeshData): void {
    if (this.surface) {
      this.scene.remove(this.surface);
      this.geometry?.dispose();
    }
    this.faces = mesh.faces;
    const m = mesh.faces.length;
    const positions = new Float32Array(m * 9);
    const colors = new Float32Array(m * 9);
    this.geometry = new THREE.BufferGeometry();
    this.geometry.setAttribute("position", new THREE.BufferAttribute(positions, 3));
    this.geometry.setAttribute("color", new THREE.BufferAttribute(colors, 3));
    const material = new THREE.MeshLambertMaterial({
      vertexColors: true,
      side: THREE.DoubleSide,
    });
    this.surface = new THREE.Mesh(this.geometry, material);
    this.scene.add(this.surface);
    this.updateVertices(mesh.vertices);
    this.updateSelection(new Set());
    const center = mesh.vertices
      .reduce((acc, v) => [acc[0] + v[0], acc[1] + v[1], acc[2] + v[2]], [0, 0, 0])
      .map((x) => x / mesh.vertices.length);
    this.camera.lookAt(new THREE.Vector3(center[0], center[1], center[2]));
  }

  /** Swap vertex positions in place; face indices never change. */
  updateVertices(vertices: number[][]): void {
    if (!this.geometry) return;
    const attr = this.geometry.getAttribute("position") as THREE.BufferAttribute;
    const array = attr.array as Float32Array;
    this.faces.forEach((face, f) => {
      for (let corner = 0; corner < 3; corner++) {
        const v = vertices[face[corner]];
        array[f * 9 + corner * 3] = v[0];
        array[f * 9 + corner * 3 + 1] = v[1];
        array[f * 9 + corner * 3 + 2] = v[2];
      }
    });
    attr.needsUpdate = true;
    this.geometry.computeVertexNormals();
    this.render();
  }

  updateSelection(selection: Set<number>): void {
    if (!this.geometry) return;
    const attr = this.geometry.getAttribute("color") as THREE.BufferAttribute;
    const array = attr.array as Float32Array;
    for (let f = 0; f < this.faces.length; f++) {
      const color = selection.has(f) ? SELECTED_COLOR : BASE_COLOR;
      for (let corner = 0; corner < 3; corner++) {
        array[f * 9 + corner * 3] = color.r;
        array[f * 9 + corner * 3 + 1] = color.g;
        array[f * 9 + corner * 3 + 2] = color.b;
      }
    }
    attr.needsUpdate = true;
    this.render();
  }

  /** Ray through a canvas pixel, for the pure-math face picker. */
  rayFromPointer(event: PointerEvent): { origin: [number, number, number]; direction: [number, number, number] } {
    const rect = this.canvas.getBoundingClientRect();
    const ndc = new THREE.Vector2(
      ((event.clientX - rect.left) / rect.width) * 2 - 1,
      -((event.clientY - rect.top) / rect.height) * 2 + 1,
    );
    const raycaster = new THREE.Raycaster();
    raycaster.setFromCamera(ndc, this.camera);
    const o = raycaster.ray.origin;
    const d = raycaster.ray.direction;
    return { origin: [o.x, o.y, o.z], direction: [d.x, d.y, d.z] };
  }

  resize(): void {
    const width = this.canvas.clientWidth || 900;
    const height = this.canvas.clientHeight || 600;
    this.renderer.setSize(width, height, false);
    this.camera.aspect = width / height;
    this.camera.updateProjectionMatrix();
    this.render();
  }

  render(): void {
    this.renderer.render(this.scene, this.camera);
  }
}
