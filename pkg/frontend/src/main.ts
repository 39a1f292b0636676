/** DOM wiring: one view model, one render pass per update. */

import { SessionClient, freshIdempotencyKey } from "./client.js";
import { drawHistogram, drawPhasePlane, drawSeries } from "./charts.js";
import { Intervention, PARAM_RANGES, STRATEGIES } from "./protocol.js";
import {
  ViewModel, applyAck, applyConnection, applySnapshotMessage,
  applyStreamMessage, controlsEnabled, initialModel,
} from "./viewmodel.js";

const httpBase = window.location.origin;
const wsBase = httpBase.replace(/^http/, "ws");
const client = new SessionClient(
  httpBase, wsBase,
  (url) => new WebSocket(url),
  (url, init) => fetch(url, init),
);

let vm: ViewModel = initialModel();
let sessionId: string | null = null;

const $ = (id: string) => document.getElementById(id)!;

function render(): void {
  const banner = $("banner");
  banner.textContent = vm.banner ?? "";
  banner.style.display = vm.banner ? "block" : "none";
  $("status").textContent =
    `session ${sessionId ?? "-"} | ${vm.connection} | mode ${vm.mode}` +
    ` | step ${Math.max(vm.step, 0)} | rewires ${vm.rewiresTotal}` +
    (vm.stopReason ? ` | stopped: ${vm.stopReason}` : "");
  const enabled = controlsEnabled(vm);
  document.querySelectorAll<HTMLButtonElement | HTMLInputElement>(".ctl")
    .forEach((el) => { el.disabled = !enabled; });
  drawSeries($("series") as HTMLCanvasElement, vm.series);
  drawPhasePlane($("phase") as HTMLCanvasElement, vm);
  drawHistogram($("hist") as HTMLCanvasElement, vm.hist);
  const feed = $("feed");
  feed.innerHTML = "";
  for (const event of vm.events) {
    const li = document.createElement("li");
    li.textContent = `step ${event.effectiveStep}: ${event.summary}`;
    feed.appendChild(li);
  }
}

function update(next: ViewModel): void {
  vm = next;
  render();
}

$("connect").addEventListener("click", () => {
  sessionId = ($("session-id") as HTMLInputElement).value.trim();
  if (!sessionId) return;
  update(initialModel());
  client.connect(sessionId, {
    onMessage: (msg, first) =>
      update(first ? applySnapshotMessage(vm, msg) : applyStreamMessage(vm, msg)),
    onState: (state) => update(applyConnection(vm, state)),
  });
});

for (const action of ["pause", "resume"] as const) {
  $(action).addEventListener("click", async () => {
    if (sessionId) await client.control(sessionId, action);
  });
}
$("step").addEventListener("click", async () => {
  if (!sessionId) return;
  const n = parseInt(($("step-n") as HTMLInputElement).value, 10) || 1;
  await client.control(sessionId, "step_n", n);
});

let inflight = false;

async function sendIntervention(iv: Intervention, summary: string): Promise<void> {
  if (!sessionId || inflight) return; // double clicks collapse to one event
  inflight = true;
  try {
    const key = freshIdempotencyKey();
    const ack = await client.intervene(sessionId, iv, key);
    if (ack.ok && ack.effective_step !== undefined) {
      update(applyAck(vm, iv.kind, summary, ack.effective_step));
    } else {
      update({ ...vm, banner: ack.error ?? "intervention rejected" });
    }
  } finally {
    inflight = false;
  }
}

$("apply-strategy").addEventListener("click", () => {
  const strategy = ($("strategy") as HTMLSelectElement).value as
    (typeof STRATEGIES)[number];
  const kH = parseInt(($("k-h") as HTMLInputElement).value, 10) || 0;
  void sendIntervention(
    { kind: "set_strategy", strategy, k_h: kH },
    `strategy -> ${strategy} (k_h=${kH})`,
  );
});

for (const name of ["p", "q", "alpha"] as const) {
  const slider = $(`slider-${name}`) as HTMLInputElement;
  const label = $(`label-${name}`);
  slider.min = String(PARAM_RANGES[name][0]);
  slider.max = String(PARAM_RANGES[name][1]);
  slider.step = "0.005";
  slider.addEventListener("input", () => {
    label.textContent = `${name} = ${slider.value}`;
  });
  $(`apply-${name}`).addEventListener("click", () => {
    const value = parseFloat(slider.value);
    void sendIntervention(
      { kind: "set_param", name, value },
      `${name} -> ${value}`,
    );
  });
}

render();
