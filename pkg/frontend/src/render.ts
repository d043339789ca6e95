/** Canvas point-sprite rendering with drag-to-rotate.
 * Projection is a pure function so tests can check the math headlessly. */

export type Vec3 = [number, number, number];

export interface Projected {
  x: number;
  y: number;
  depth: number;
}

/** Rotate by yaw about +y then pitch about +x, centered on the centroid,
 * then orthographically project and fit into width x height. */
export function projectPoints(points: Vec3[], yaw: number, pitch: number,
                              width: number, height: number): Projected[] {
  if (points.length === 0) return [];
  const c = centroid(points);
  const cy = Math.cos(yaw), sy = Math.sin(yaw);
  const cp = Math.cos(pitch), sp = Math.sin(pitch);

  const rotated = points.map(([x, y, z]): Vec3 => {
    const dx = x - c[0], dy = y - c[1], dz = z - c[2];
    const rx = cy * dx + sy * dz;
    const rz = -sy * dx + cy * dz;
    const ry = cp * dy - sp * rz;
    const rz2 = sp * dy + cp * rz;
    return [rx, ry, rz2];
  });

  let extent = 0;
  for (const [x, y] of rotated) {
    extent = Math.max(extent, Math.abs(x), Math.abs(y));
  }
  const scale = extent > 0 ? 0.45 * Math.min(width, height) / extent : 1;
  return rotated.map(([x, y, z]) => ({
    x: width / 2 + x * scale,
    y: height / 2 - y * scale,
    depth: z,
  }));
}

export function centroid(points: Vec3[]): Vec3 {
  let sx = 0, sy = 0, sz = 0;
  for (const [x, y, z] of points) {
    sx += x; sy += y; sz += z;
  }
  const n = points.length;
  return [sx / n, sy / n, sz / n];
}

export class PointCloudView {
  private points: Vec3[] = [];
  private yaw = 0.6;
  private pitch = 0.4;
  private dragging = false;
  private lastX = 0;
  private lastY = 0;

  constructor(private readonly canvas: HTMLCanvasElement) {
    canvas.addEventListener("mousedown", (e) => {
      this.dragging = true;
      this.lastX = e.clientX;
      this.lastY = e.clientY;
    });
    canvas.addEventListener("mousemove", (e) => {
      if (!this.dragging) return;
      this.yaw += (e.clientX - this.lastX) * 0.01;
      this.pitch += (e.clientY - this.lastY) * 0.01;
      this.lastX = e.clientX;
      this.lastY = e.clientY;
      this.draw();
    });
    for (const evt of ["mouseup", "mouseleave"] as const) {
      canvas.addEventListener(evt, () => {
        this.dragging = false;
      });
    }
  }

  setPoints(points: Vec3[]): void {
    this.points = points;
    this.draw();
  }

  draw(): void {
    const ctx = this.canvas.getContext("2d");
    if (!ctx) return;
    const { width, height } = this.canvas;
    ctx.clearRect(0, 0, width, height);
    ctx.fillStyle = "#10131a";
    ctx.fillRect(0, 0, width, height);
    const projected = projectPoints(this.points, this.yaw, this.pitch,
      width, height);
    if (projected.length === 0) return;
    let minD = Infinity, maxD = -Infinity;
    for (const p of projected) {
      minD = Math.min(minD, p.depth);
      maxD = Math.max(maxD, p.depth);
    }
    const span = maxD - minD || 1;
    for (const p of projected.sort((a, b) => a.depth - b.depth)) {
      const t = (p.depth - minD) / span;
      const shade = Math.round(120 + 120 * t);
      ctx.fillStyle = `rgb(${Math.round(shade * 0.55)}, ${shade}, ${Math.round(140 + 90 * t)})`;
      ctx.fillRect(p.x - 1, p.y - 1, 2.4, 2.4);
    }
  }
}
