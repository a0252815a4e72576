import init, { cycleFixedPoint, restore, residualCurves } from "./pkg/mrf_contract_web.js";

const $ = (id) => document.getElementById(id);
const num = (id) => Number($(id).value);

function guard(outId, f) {
  try {
    f();
  } catch (e) {
    $(outId).innerHTML = `<p class="error">${e.message ?? e}</p>`;
  }
}

function runCycle() {
  guard("cycle-out", () => {
    const v = cycleFixedPoint(num("cycle-p"), $("cycle-repulsive").checked, $("cycle-map").value);
    const n = 5;
    let rows = "<tr><th>vertex</th><th>belief(1)</th><th>belief(2)</th><th>label</th></tr>";
    for (let i = 0; i < n; i++) {
      rows += `<tr><td>${i + 1}</td><td>${v[2 * i].toFixed(6)}</td><td>${v[2 * i + 1].toFixed(6)}</td><td>${v[2 * n + i]}</td></tr>`;
    }
    $("cycle-out").innerHTML = `<table>${rows}</table>`;
  });
}

function paint(canvas, w, h, pixels) {
  canvas.width = w;
  canvas.height = h;
  canvas.style.width = `${3 * w}px`;
  const ctx = canvas.getContext("2d");
  const img = ctx.createImageData(w, h);
  for (let i = 0; i < w * h; i++) {
    img.data.set([pixels[i], pixels[i], pixels[i], 255], 4 * i);
  }
  ctx.putImageData(img, 0, 0);
}

function runRestore() {
  guard("rest-out", () => {
    const t0 = performance.now();
    const r = restore(num("rest-size"), num("rest-sigma"), num("rest-lambda"), num("rest-cap"), 0.001,
      num("rest-iter"), $("rest-map").value, 7n);
    const ms = performance.now() - t0;
    const [w, h] = [r.width(), r.height()];
    paint($("rest-clean"), w, h, r.clean());
    paint($("rest-noisy"), w, h, r.noisy());
    paint($("rest-restored"), w, h, r.restored());
    $("rest-out").textContent =
      `clean, noisy, restored. RMSE noisy ${r.rmseNoisy().toFixed(3)}, restored ${r.rmseRestored().toFixed(3)} (${ms.toFixed(0)} ms)`;
    r.free();
  });
}

function runCurves() {
  guard("curve-out", () => {
    const iters = num("curve-iter");
    const c = residualCurves(num("curve-p"), iters, BigInt(num("curve-seed")));
    const series = [c.slice(0, iters), c.slice(iters)];
    const canvas = $("curve-plot");
    const ctx = canvas.getContext("2d");
    ctx.clearRect(0, 0, canvas.width, canvas.height);
    const logs = series.flat().filter((v) => v > 0).map(Math.log10);
    const [lo, hi] = [Math.min(...logs), Math.max(...logs)];
    const x = (i) => 40 + (i / (iters - 1)) * (canvas.width - 50);
    const y = (v) => 10 + ((hi - Math.log10(v)) / (hi - lo || 1)) * (canvas.height - 30);
    ctx.fillStyle = "#222";
    ctx.fillText(`1e${hi.toFixed(0)}`, 2, 14);
    ctx.fillText(`1e${lo.toFixed(0)}`, 2, canvas.height - 20);
    ctx.fillText("iteration", canvas.width - 60, canvas.height - 4);
    ["#1f77b4", "#d62728"].forEach((color, s) => {
      ctx.strokeStyle = color;
      ctx.beginPath();
      let started = false;
      series[s].forEach((v, i) => {
        if (v <= 0) return;
        if (started) ctx.lineTo(x(i), y(v));
        else ctx.moveTo(x(i), y(v));
        started = true;
      });
      ctx.stroke();
    });
    $("curve-out").innerHTML =
      '<span style="color:#1f77b4">T</span> and <span style="color:#d62728">S</span> residuals, log scale; both fall at least as fast as (1 - p)<sup>k</sup>.';
  });
}

await init();
$("cycle-run").onclick = runCycle;
$("rest-run").onclick = runRestore;
$("curve-run").onclick = runCurves;
runCycle();
runCurves();
