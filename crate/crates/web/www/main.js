import init, { Demo } from "./pkg/entangled_web.js";

const SIZE = 96;
const LABELS = ["Entangled-D", "Entangled-S", "S_in", "S_out", "S", "M", "V", "C"];
const $ = (id) => document.getElementById(id);

let demo;

function paint(id, rgba) {
  const c = $(id);
  c.width = SIZE;
  c.height = SIZE;
  const img = new ImageData(new Uint8ClampedArray(rgba), SIZE, SIZE);
  c.getContext("2d").putImageData(img, 0, 0);
}

function drawCurve(values, alpha) {
  const c = $("curve");
  const g = c.getContext("2d");
  const pad = 24;
  const w = c.width - 2 * pad;
  const h = c.height - 2 * pad;
  const x = (a) => pad + a * w;
  const y = (v) => pad + (1 - v) * h;
  g.clearRect(0, 0, c.width, c.height);
  g.strokeStyle = "#bbb";
  g.strokeRect(pad, pad, w, h);
  g.fillStyle = "#666";
  g.fillText("0", pad - 4, c.height - 8);
  g.fillText("1", pad + w - 4, c.height - 8);
  g.fillText("alpha", pad + w / 2 - 12, c.height - 8);
  g.strokeStyle = "#1565c0";
  g.lineWidth = 2;
  g.beginPath();
  values.forEach((v, i) => {
    const a = i / (values.length - 1);
    i ? g.lineTo(x(a), y(v)) : g.moveTo(x(a), y(v));
  });
  g.stroke();
  const i = Math.round(alpha * (values.length - 1));
  g.fillStyle = "#c62828";
  g.beginPath();
  g.arc(x(alpha), y(values[i]), 4, 0, 2 * Math.PI);
  g.fill();
}

function showOutputs() {
  for (const o of document.querySelectorAll("output")) {
    o.textContent = $(o.htmlFor).value;
  }
}

function rescore() {
  const alpha = Number($("alpha").value);
  const s = demo.score(alpha);
  $("scores").innerHTML = LABELS.map((l, i) => `<tr><td>${l}</td><td>${s[i].toFixed(4)}</td></tr>`).join("");
  drawCurve(demo.alpha_curve(101), alpha);
}

function remerge() {
  paint("merged", demo.merge_preview(Number($("feather").value)));
}

function reedit() {
  demo.set_edit(Number($("removal").value), Number($("noise").value));
  paint("unlearned", demo.unlearned_rgba());
  rescore();
  remerge();
}

function rebuild() {
  if (demo) demo.free();
  demo = new Demo(SIZE, Number($("seed").value) >>> 0);
  paint("original", demo.original_rgba());
  paint("mask", demo.mask_rgba());
  reedit();
}

function guard(f) {
  return () => {
    showOutputs();
    try {
      f();
      $("status").textContent = "";
    } catch (e) {
      $("status").textContent = String(e);
    }
  };
}

await init();
$("seed").addEventListener("change", guard(rebuild));
$("removal").addEventListener("input", guard(reedit));
$("noise").addEventListener("input", guard(reedit));
$("alpha").addEventListener("input", guard(rescore));
$("feather").addEventListener("input", guard(remerge));
guard(rebuild)();
