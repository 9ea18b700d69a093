import assert from "node:assert/strict";
import { test } from "node:test";

import { ViewTransform } from "../src/geometry.js";

test("image/canvas round trip stays within half a pixel", () => {
  const t = new ViewTransform();
  t.fit(128, 128, 900, 700);
  t.zoomAt({ x: 333, y: 217 }, 1.7);
  t.zoomAt({ x: 120, y: 440 }, 2.3);
  t.panBy(37.5, -12.25);
  t.zoomAt({ x: 500, y: 300 }, 1 / 1.9);
  for (const p of [
    { x: 0, y: 0 },
    { x: 127.5, y: 127.5 },
    { x: 3.25, y: 99.75 },
    { x: 64, y: 64 },
  ]) {
    const back = t.canvasToImage(t.imageToCanvas(p));
    assert.ok(Math.abs(back.x - p.x) < 0.5, `x drift ${back.x} vs ${p.x}`);
    assert.ok(Math.abs(back.y - p.y) < 0.5, `y drift ${back.y} vs ${p.y}`);
  }
});

test("zoomAt keeps the anchor point fixed", () => {
  const t = new ViewTransform(1, 0, 0);
  const anchor = { x: 200, y: 150 };
  const before = t.canvasToImage(anchor);
  t.zoomAt(anchor, 2.5);
  const after = t.canvasToImage(anchor);
  assert.ok(Math.abs(before.x - after.x) < 1e-9);
  assert.ok(Math.abs(before.y - after.y) < 1e-9);
});

test("fit centers the image", () => {
  const t = new ViewTransform();
  t.fit(100, 50, 200, 200);
  assert.equal(t.scale, 2);
  assert.equal(t.offsetX, 0);
  assert.equal(t.offsetY, 50);
});
