/*
 * The editor's document model: a grid of class ids with an unlabeled
 * sentinel, edited by stamping filled rectangles or polygons. Serialization
 * goes straight to the service's sparse-labelmap PNG, so what the canvas
 * holds is exactly what the model will see.
 */

import { decodeGrayPng, encodeGrayPng } from "./png.js";

export type Point = [number, number]; // [x, y]

export class LayoutCanvas {
  readonly width: number;
  readonly height: number;
  readonly unlabeledId: number;
  readonly data: Uint8Array;

  constructor(width: number, height: number, unlabeledId = 255) {
    if (width < 1 || height < 1) throw new Error(`bad canvas size ${width}x${height}`);
    if (unlabeledId < 0 || unlabeledId > 255) throw new Error("unlabeled id must fit a byte");
    this.width = width;
    this.height = height;
    this.unlabeledId = unlabeledId;
    this.data = new Uint8Array(width * height).fill(unlabeledId);
  }

  at(x: number, y: number): number {
    return this.data[y * this.width + x];
  }

  private put(x: number, y: number, classId: number): void {
    if (x >= 0 && x < this.width && y >= 0 && y < this.height) {
      this.data[y * this.width + x] = classId;
    }
  }

  stampRect(classId: number, x: number, y: number, w: number, h: number): void {
    this.checkClassId(classId);
    for (let yy = y; yy < y + h; yy++) {
      for (let xx = x; xx < x + w; xx++) {
        this.put(xx, yy, classId);
      }
    }
  }

  /** Even-odd scanline fill; vertices are pixel coordinates. */
  stampPolygon(classId: number, points: Point[]): void {
    this.checkClassId(classId);
    if (points.length < 3) throw new Error("polygon needs at least 3 vertices");
    const ys = points.map((p) => p[1]);
    const y0 = Math.max(0, Math.floor(Math.min(...ys)));
    const y1 = Math.min(this.height - 1, Math.ceil(Math.max(...ys)));
    for (let y = y0; y <= y1; y++) {
      const scanY = y + 0.5;
      const crossings: number[] = [];
      for (let i = 0; i < points.length; i++) {
        const [ax, ay] = points[i];
        const [bx, by] = points[(i + 1) % points.length];
        if (ay <= scanY === by <= scanY) continue; // edge does not straddle the scanline
        crossings.push(ax + ((scanY - ay) / (by - ay)) * (bx - ax));
      }
      crossings.sort((a, b) => a - b);
      for (let i = 0; i + 1 < crossings.length; i += 2) {
        const xStart = Math.max(0, Math.ceil(crossings[i] - 0.5));
        const xEnd = Math.min(this.width - 1, Math.floor(crossings[i + 1] - 0.5));
        for (let x = xStart; x <= xEnd; x++) this.put(x, y, classId);
      }
    }
  }

  eraseRect(x: number, y: number, w: number, h: number): void {
    for (let yy = y; yy < y + h; yy++) {
      for (let xx = x; xx < x + w; xx++) {
        this.put(xx, yy, this.unlabeledId);
      }
    }
  }

  clear(): void {
    this.data.fill(this.unlabeledId);
  }

  isEmpty(): boolean {
    return this.data.every((v) => v === this.unlabeledId);
  }

  labeledPixelCount(): number {
    let n = 0;
    for (const v of this.data) if (v !== this.unlabeledId) n++;
    return n;
  }

  equals(other: LayoutCanvas): boolean {
    return (
      this.width === other.width &&
      this.height === other.height &&
      this.data.every((v, i) => v === other.data[i])
    );
  }

  /** Serialize to the service's sparse-labelmap PNG (255 = unlabeled). */
  async toPng(): Promise<Uint8Array> {
    const fileData = new Uint8Array(this.data.length);
    for (let i = 0; i < this.data.length; i++) {
      fileData[i] = this.data[i] === this.unlabeledId ? 255 : this.data[i];
    }
    return encodeGrayPng({ width: this.width, height: this.height, data: fileData });
  }

  static async fromPng(bytes: Uint8Array, unlabeledId = 255): Promise<LayoutCanvas> {
    const image = await decodeGrayPng(bytes);
    const canvas = new LayoutCanvas(image.width, image.height, unlabeledId);
    for (let i = 0; i < image.data.length; i++) {
      canvas.data[i] = image.data[i] === 255 ? unlabeledId : image.data[i];
    }
    return canvas;
  }

  private checkClassId(classId: number): void {
    if (classId < 0 || classId > 255 || classId === this.unlabeledId) {
      throw new Error(`class id ${classId} cannot be stamped`);
    }
  }
}
