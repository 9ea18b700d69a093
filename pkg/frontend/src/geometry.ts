/** Zoom/pan transform between image coordinates and canvas pixels. */

export interface Point {
  x: number;
  y: number;
}

export class ViewTransform {
  constructor(
    public scale = 1,
    public offsetX = 0,
    public offsetY = 0,
  ) {}

  imageToCanvas(p: Point): Point {
    return {
      x: p.x * this.scale + this.offsetX,
      y: p.y * this.scale + this.offsetY,
    };
  }

  canvasToImage(p: Point): Point {
    return {
      x: (p.x - this.offsetX) / this.scale,
      y: (p.y - this.offsetY) / this.scale,
    };
  }

  /** Zoom by a factor keeping the given canvas point fixed. */
  zoomAt(canvasPoint: Point, factor: number, minScale = 0.1, maxScale = 40): void {
    const next = Math.min(maxScale, Math.max(minScale, this.scale * factor));
    const effective = next / this.scale;
    this.offsetX = canvasPoint.x - (canvasPoint.x - this.offsetX) * effective;
    this.offsetY = canvasPoint.y - (canvasPoint.y - this.offsetY) * effective;
    this.scale = next;
  }

  panBy(dx: number, dy: number): void {
    this.offsetX += dx;
    this.offsetY += dy;
  }

  /** Fit an image of the given size into a canvas, centered. */
  fit(imageW: number, imageH: number, canvasW: number, canvasH: number): void {
    this.scale = Math.min(canvasW / imageW, canvasH / imageH);
    this.offsetX = (canvasW - imageW * this.scale) / 2;
    this.offsetY = (canvasH - imageH * this.scale) / 2;
  }
}

export function boxSideCanvasPx(
  t: ViewTransform,
  bbox: [number, number, number, number],
): { w: number; h: number } {
  return {
    w: (bbox[2] - bbox[0]) * t.scale,
    h: (bbox[3] - bbox[1]) * t.scale,
  };
}
