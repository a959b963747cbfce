/** Canvas drawing. Kept thin: all decisions live in the view model. */

import type { IodBar, ViewModel } from "./viewmodel";
import type { Polygon } from "./types";

const COLORS = {
  background: "#10151c",
  overlay: "#41d67c",
  overlayAccepted: "#a0ffc8",
  board: "#5ab2ff",
  bar: "#e0a93c",
  barDimmed: "#4a4337",
  text: "#e8ecf2",
  gaugeAccept: "#41d67c",
  gaugeMiss: "#d65341"
};

function drawPolygon(
  ctx: CanvasRenderingContext2D,
  polygon: Polygon,
  scale: number,
  color: string,
  lineWidth: number
): void {
  ctx.beginPath();
  polygon.forEach(([x, y], i) => {
    if (i === 0) {
      ctx.moveTo(x * scale, y * scale);
    } else {
      ctx.lineTo(x * scale, y * scale);
    }
  });
  ctx.closePath();
  ctx.strokeStyle = color;
  ctx.lineWidth = lineWidth;
  ctx.stroke();
}

export function drawScene(
  canvas: HTMLCanvasElement,
  vm: ViewModel,
  imageSize: [number, number]
): void {
  const ctx = canvas.getContext("2d");
  if (!ctx) {
    return;
  }
  const scale = canvas.width / imageSize[0];
  ctx.fillStyle = COLORS.background;
  ctx.fillRect(0, 0, canvas.width, canvas.height);

  if (vm.overlayPolygon) {
    drawPolygon(
      ctx,
      vm.overlayPolygon,
      scale,
      vm.jaccardAccepted ? COLORS.overlayAccepted : COLORS.overlay,
      3
    );
  }
  if (vm.boardPolygon) {
    drawPolygon(ctx, vm.boardPolygon, scale, COLORS.board, 2);
  }
  if (vm.instruction) {
    ctx.fillStyle = COLORS.text;
    ctx.font = "16px sans-serif";
    ctx.textAlign = "center";
    ctx.fillText(vm.instruction, canvas.width / 2, canvas.height / 2);
  }
}

export function drawIodBars(canvas: HTMLCanvasElement, bars: IodBar[]): void {
  const ctx = canvas.getContext("2d");
  if (!ctx) {
    return;
  }
  ctx.fillStyle = COLORS.background;
  ctx.fillRect(0, 0, canvas.width, canvas.height);
  const slot = canvas.width / bars.length;
  const chartH = canvas.height - 18;
  ctx.font = "11px sans-serif";
  ctx.textAlign = "center";
  bars.forEach((bar, i) => {
    const h = Math.max(2, bar.relative * (chartH - 4));
    ctx.fillStyle = bar.dimmed ? COLORS.barDimmed : COLORS.bar;
    ctx.fillRect(i * slot + 3, chartH - h, slot - 6, h);
    ctx.fillStyle = COLORS.text;
    ctx.fillText(bar.name, i * slot + slot / 2, canvas.height - 5);
  });
}

export function drawJaccardGauge(
  canvas: HTMLCanvasElement,
  jaccard: number | null,
  accepted: boolean
): void {
  const ctx = canvas.getContext("2d");
  if (!ctx) {
    return;
  }
  ctx.fillStyle = COLORS.background;
  ctx.fillRect(0, 0, canvas.width, canvas.height);
  const value = jaccard ?? 0;
  ctx.fillStyle = accepted ? COLORS.gaugeAccept : COLORS.gaugeMiss;
  ctx.fillRect(0, 0, value * canvas.width, canvas.height - 14);
  // accept-threshold tick at 0.8
  ctx.fillStyle = COLORS.text;
  ctx.fillRect(0.8 * canvas.width - 1, 0, 2, canvas.height - 14);
  ctx.font = "11px sans-serif";
  ctx.textAlign = "left";
  ctx.fillText(
    jaccard === null ? "jaccard: –" : `jaccard: ${jaccard.toFixed(2)}`,
    2,
    canvas.height - 3
  );
}
