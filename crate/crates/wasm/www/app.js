import init, { tail_curve, simulate_once, knockoff_select } from "./pkg/knockoff_wasm.js";

const $ = (id) => document.getElementById(id);
const num = (id) => Number($(id).value);

function report(el, text, isError = false) {
  el.textContent = text;
  el.classList.toggle("err", isError);
}

function axes(ctx, w, h, pad) {
  ctx.clearRect(0, 0, w, h);
  ctx.strokeStyle = "#999";
  ctx.beginPath();
  ctx.moveTo(pad, pad);
  ctx.lineTo(pad, h - pad);
  ctx.lineTo(w - pad, h - pad);
  ctx.stroke();
}

function plotStatistics(w, signals, threshold) {
  const canvas = $("sim-plot");
  const ctx = canvas.getContext("2d");
  const { width, height } = canvas;
  const pad = 20;
  axes(ctx, width, height, pad);
  const max = Math.max(1e-9, ...w.map(Math.abs));
  const mid = height / 2;
  const barW = (width - 2 * pad) / w.length;
  const scale = (height / 2 - pad) / max;
  const isSignal = new Set(signals);
  w.forEach((v, j) => {
    ctx.fillStyle = isSignal.has(j) ? "#d62728" : "#1f77b4";
    const y = v >= 0 ? mid - v * scale : mid;
    ctx.fillRect(pad + j * barW, y, Math.max(1, barW - 1), Math.abs(v) * scale);
  });
  ctx.strokeStyle = "#444";
  ctx.beginPath();
  ctx.moveTo(pad, mid);
  ctx.lineTo(width - pad, mid);
  ctx.stroke();
  if (threshold !== null) {
    ctx.strokeStyle = "#2ca02c";
    ctx.setLineDash([5, 4]);
    for (const t of [threshold, -threshold]) {
      ctx.beginPath();
      ctx.moveTo(pad, mid - t * scale);
      ctx.lineTo(width - pad, mid - t * scale);
      ctx.stroke();
    }
    ctx.setLineDash([]);
  }
}

function runSimulation() {
  const out = $("sim-out");
  report(out, "running...");
  setTimeout(() => {
    try {
      const started = performance.now();
      const r = JSON.parse(simulate_once(
        num("sim-n"), num("sim-p"), num("sim-rho"), num("sim-setting"),
        $("sim-stat").value, num("sim-q"), num("sim-k"), BigInt(num("sim-seed")),
      ));
      plotStatistics(r.w, r.signals, r.threshold);
      const ms = (performance.now() - started).toFixed(0);
      report(out,
        `threshold ${r.threshold === null ? "none (nothing selected)" : r.threshold.toFixed(4)}\n` +
        `selected ${r.selected}, FDP ${r.fdp.toFixed(3)}` +
        (r.power === null ? "" : `, power ${r.power.toFixed(3)}`) +
        `\nred bars: planted signals, dashed: +/- threshold (${ms} ms)`);
    } catch (e) {
      report(out, String(e), true);
    }
  }, 10);
}

function runSelection() {
  const out = $("sel-out");
  try {
    const w = Float64Array.from($("sel-w").value.split(/[\s,]+/).filter(Boolean).map(Number));
    if (w.some(Number.isNaN)) throw new Error("statistics must be numbers");
    const r = JSON.parse(knockoff_select(w, num("sel-q"), $("sel-plus").checked));
    report(out, r.threshold === null
      ? "no threshold qualifies; nothing selected"
      : `threshold ${r.threshold}\nselected (0-based): ${r.selected.join(", ")}`);
  } catch (e) {
    report(out, String(e), true);
  }
}

function runTail() {
  const canvas = $("tail-plot");
  const ctx = canvas.getContext("2d");
  const { width, height } = canvas;
  const pad = 20;
  try {
    const tMax = num("tail-t");
    const ys = tail_curve(num("tail-s1"), num("tail-s2"), num("tail-c"), tMax, 120);
    axes(ctx, width, height, pad);
    const yMax = Math.max(...ys);
    ctx.strokeStyle = "#1f77b4";
    ctx.beginPath();
    ys.forEach((y, k) => {
      const px = pad + (k / (ys.length - 1)) * (width - 2 * pad);
      const py = height - pad - (y / yMax) * (height - 2 * pad);
      k === 0 ? ctx.moveTo(px, py) : ctx.lineTo(px, py);
    });
    ctx.stroke();
    ctx.fillStyle = "#222";
    ctx.fillText(`P(0) = ${ys[0].toFixed(4)}`, pad + 8, pad + 12);
    ctx.fillText(`t = ${tMax}`, width - pad - 40, height - 5);
  } catch (e) {
    axes(ctx, width, height, pad);
    ctx.fillStyle = "#b00";
    ctx.fillText(String(e), pad + 8, pad + 12);
  }
}

init().then(() => {
  $("status").textContent = "";
  $("sim-run").onclick = runSimulation;
  $("sel-run").onclick = runSelection;
  $("tail-run").onclick = runTail;
  runTail();
}).catch((e) => report($("status"), `failed to load the module: ${e}`, true));
