import init, { sheet_slice, loop_traces, group_summary } from "./pkg/twisted_ep_wasm.js";

const $ = (id) => document.getElementById(id);
const num = (id) => parseFloat($(id).value);
const COLORS = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"];

function plot(canvas, xs, series, yRange) {
  const ctx = canvas.getContext("2d");
  const { width: w, height: h } = canvas;
  const pad = 36;
  ctx.clearRect(0, 0, w, h);
  const [x0, x1] = [xs[0], xs[xs.length - 1]];
  const [y0, y1] = yRange;
  const px = (x) => pad + ((x - x0) / (x1 - x0)) * (w - 2 * pad);
  const py = (y) => h - pad - ((y - y0) / (y1 - y0)) * (h - 2 * pad);
  ctx.strokeStyle = "#999";
  ctx.strokeRect(pad, pad, w - 2 * pad, h - 2 * pad);
  ctx.fillStyle = "#555";
  ctx.fillText(x0.toPrecision(3), pad, h - pad + 14);
  ctx.fillText(x1.toPrecision(3), w - pad - 20, h - pad + 14);
  ctx.fillText(y1.toPrecision(3), 2, pad + 4);
  ctx.fillText(y0.toPrecision(3), 2, h - pad);
  series.forEach((ys, s) => {
    ctx.strokeStyle = COLORS[s % COLORS.length];
    ctx.beginPath();
    let pen = false;
    ys.forEach((y, i) => {
      if (y === null || !isFinite(y)) { pen = false; return; }
      pen ? ctx.lineTo(px(xs[i]), py(y)) : ctx.moveTo(px(xs[i]), py(y));
      pen = true;
    });
    ctx.stroke();
  });
}

function guard(msgId, f) {
  $(msgId).textContent = "";
  $(msgId).className = "";
  try {
    f();
  } catch (e) {
    $(msgId).textContent = String(e);
    $(msgId).className = "err";
  }
}

function drawSlice() {
  guard("s-msg", () => {
    const scales = new Float64Array($("s-scales").value.split(",").map(Number));
    const r = JSON.parse(sheet_slice(scales, num("s-j"), num("s-y"), num("s-x0"), num("s-x1"), 400));
    const series = [];
    for (let s = 0; s < r.sheets; s++) series.push(r.energies.map((e) => (e ? e[s] : null)));
    const all = series.flat().filter((v) => v !== null);
    plot($("s-canvas"), r.x, series, [Math.min(...all), Math.max(...all)]);
    $("s-msg").textContent = `${r.sheets} sheets; gaps mark the masked neighbourhood of the exceptional point and the branch cut.`;
  });
}

function runLoop() {
  $("l-msg").textContent = "running…";
  setTimeout(() => guard("l-msg", () => {
    const t0 = performance.now();
    const r = JSON.parse(loop_traces(new Float64Array([1, 1, 2]), 1, num("l-rx"), num("l-ry"), num("l-T"),
      $("l-mod").value, num("l-steps"), $("l-cw").checked));
    const k = Math.min(8, Math.max(1, num("l-k"))) - 1;
    const series = [0, 1, 2, 3, 4, 5, 6, 7].map((j) => r.traces[k].map((row) => row[j]));
    plot($("l-canvas"), r.times, series, [0, 1]);
    const secs = ((performance.now() - t0) / 1000).toFixed(1);
    $("l-msg").textContent = `permutation ${r.cycles ?? "(not bijective)"}, min final fidelity ` +
      `${r.min_fidelity.toFixed(4)}, ${secs} s. Curves: fidelity of ψ(t) from ψ${k + 1} with each ψj.`;
  }), 10);
}

function closeGroup() {
  guard("g-out", () => {
    const r = JSON.parse(group_summary($("g-gens").value, 8));
    const rows = r.transfer_table.map((row, k) =>
      `ψ${k + 1}: ` + row.map((c, j) => (c.length ? `→ψ${j + 1} [${c.join(",")}]` : "")).filter(Boolean).join("  "));
    $("g-out").textContent = `order ${r.order}, ${r.abelian ? "abelian" : "non-abelian"}, ${r.parity}\n\n` + rows.join("\n");
  });
}

await init();
$("s-go").onclick = drawSlice;
$("l-go").onclick = runLoop;
$("g-go").onclick = closeGroup;
drawSlice();
closeGroup();
