/** Zoom/pan transform between image coordinates and canvas pixels. */
export class ViewTransform {
    scale;
    offsetX;
    offsetY;
    constructor(scale = 1, offsetX = 0, offsetY = 0) {
        this.scale = scale;
        this.offsetX = offsetX;
        this.offsetY = offsetY;
    }
    imageToCanvas(p) {
        return {
            x: p.x * this.scale + this.offsetX,
            y: p.y * this.scale + this.offsetY,
        };
    }
    canvasToImage(p) {
        return {
            x: (p.x - this.offsetX) / this.scale,
            y: (p.y - this.offsetY) / this.scale,
        };
    }
    /** Zoom by a factor keeping the given canvas point fixed. */
    zoomAt(canvasPoint, factor, minScale = 0.1, maxScale = 40) {
        const next = Math.min(maxScale, Math.max(minScale, this.scale * factor));
        const effective = next / this.scale;
        this.offsetX = canvasPoint.x - (canvasPoint.x - this.offsetX) * effective;
        this.offsetY = canvasPoint.y - (canvasPoint.y - this.offsetY) * effective;
        this.scale = next;
    }
    panBy(dx, dy) {
        this.offsetX += dx;
        this.offsetY += dy;
    }
    /** Fit an image of the given size into a canvas, centered. */
    fit(imageW, imageH, canvasW, canvasH) {
        this.scale = Math.min(canvasW / imageW, canvasH / imageH);
        this.offsetX = (canvasW - imageW * this.scale) / 2;
        this.offsetY = (canvasH - imageH * this.scale) / 2;
    }
}
export function boxSideCanvasPx(t, bbox) {
    return {
        w: (bbox[2] - bbox[0]) * t.scale,
        h: (bbox[3] - bbox[1]) * t.scale,
    };
}
//# sourceMappingURL=geometry.js.map