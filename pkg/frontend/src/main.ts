import { ApiClient } from "./api";
import type { EditRequestBody, ModelInfo } from "./api";
import { applySelection, backTo, currentScale, resetLoop } from "./coarseToFine";
import { isEmptyCanvas, toEditConstraints } from "./editCanvas";
import { FUSE_PRESETS, takeList } from "./fusion";
import { emptySession, loadSession, saveSession } from "./state";
import type { Patch, SessionState, Stroke, Tool } from "./state";

const GRID_COUNT = 9;
const CANVAS_SCALE = 8;

type PanelName = "compose" | "fuse" | "edit";

export interface AppOptions {
  baseUrl?: string;
  storage?: Storage;
  gridCount?: number;
}

class CancelledError extends Error {}

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  cls?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (cls) node.className = cls;
  if (text !== undefined) node.textContent = text;
  return node;
}

function pngSrc(b64: string): string {
  return "data:image/png;base64," + b64;
}

function hexToRgb(hex: string): [number, number, number] {
  const v = parseInt(hex.replace("#", ""), 16);
  return [((v >> 16) & 255) / 255, ((v >> 8) & 255) / 255, (v & 255) / 255];
}

/**
 * Decode a base64 PNG and return its center-half crop as [0,1] RGB rows,
 * or null where no real 2D context exists (headless DOM).
 */
async function decodePngRegion(
  b64: string,
  size: [number, number],
): Promise<number[][][] | null> {
  const [h, w] = size;
  const scratch = document.createElement("canvas");
  scratch.width = w;
  scratch.height = h;
  const ctx = scratch.getContext("2d");
  if (ctx === null) return null;
  const img = new Image();
  await new Promise<void>((resolve, reject) => {
    img.onload = () => resolve();
    img.onerror = () => reject(new Error("could not decode result image"));
    img.src = pngSrc(b64);
  });
  ctx.drawImage(img, 0, 0, w, h);
  const x0 = Math.floor(w / 4);
  const y0 = Math.floor(h / 4);
  const data = ctx.getImageData(x0, y0, Math.floor(w / 2), Math.floor(h / 2));
  const pixels: number[][][] = [];
  for (let y = 0; y < data.height; y++) {
    const row: number[][] = [];
    for (let x = 0; x < data.width; x++) {
      const o = 4 * (y * data.width + x);
      row.push([data.data[o] / 255, data.data[o + 1] / 255, data.data[o + 2] / 255]);
    }
    pixels.push(row);
  }
  return pixels;
}

export class StudioApp {
  api: ApiClient;
  state: SessionState;
  model: ModelInfo | null = null;
  models: ModelInfo[] = [];
  storage: Storage;
  gridCount: number;
  editConfig = { steps: 80, restarts: 1, init: "encoder" };

  root: HTMLElement;
  els!: {
    modelSelect: HTMLSelectElement;
    status: HTMLSpanElement;
    tabs: Record<PanelName, HTMLButtonElement>;
    panels: Record<PanelName, HTMLDivElement>;
    scaleLabel: HTMLSpanElement;
    chips: HTMLDivElement;
    grid: HTMLDivElement;
    redraw: HTMLButtonElement;
    finalBox: HTMLDivElement;
    fuseSeeds: { a: HTMLInputElement; b: HTMLInputElement };
    fuseSlots: { a: HTMLImageElement; b: HTMLImageElement };
    fuseToggles: HTMLDivElement;
    fuseResult: HTMLImageElement;
    toolButtons: Record<Tool, HTMLButtonElement>;
    colorInput: HTMLInputElement;
    radiusInput: HTMLInputElement;
    canvas: HTMLCanvasElement;
    runBtn: HTMLButtonElement;
    cancelBtn: HTMLButtonElement;
    undoBtn: HTMLButtonElement;
    clearBtn: HTMLButtonElement;
    editResult: HTMLImageElement;
    lossLabel: HTMLSpanElement;
    historyStrip: HTMLDivElement;
  };

  private pending: Promise<unknown> = Promise.resolve();
  private gridToken = 0;
  private editGeneration = 0;
  private editBusy = false;
  private activeTool: Tool = "brush";
  private drawing: Stroke | null = null;

  constructor(root: HTMLElement, opts: AppOptions = {}) {
    this.root = root;
    this.api = new ApiClient(opts.baseUrl ?? "/api");
    this.storage = opts.storage ?? localStorage;
    this.gridCount = opts.gridCount ?? GRID_COUNT;
    this.state = loadSession(this.storage) ?? emptySession();
    this.state.edit.patches ??= [];
    this.buildDom();
  }

  // ------------------------------------------------------------------ setup

  async start(): Promise<void> {
    this.models = await this.api.listModels();
    this.els.modelSelect.replaceChildren(
      ...this.models.map((m) => {
        const opt = el("option", undefined, `${m.name} (${m.resolution.join("x")})`);
        opt.value = m.name;
        return opt;
      }),
    );
    const restored = this.state.model !== null &&
      this.models.some((m) => m.name === this.state.model);
    if (restored) {
      this.els.modelSelect.value = this.state.model!;
      this.model = this.models.find((m) => m.name === this.state.model)!;
      this.restorePanels();
      this.setStatus("session restored");
    } else if (this.models.length > 0) {
      await this.setModel(this.models[0].name);
    } else {
      this.setStatus("no models served");
    }
  }

  /** Select a model and start an empty session against it. */
  async setModel(name: string): Promise<void> {
    this.model = this.models.find((m) => m.name === name) ?? null;
    if (this.model === null) throw new Error(`unknown model ${name}`);
    this.els.modelSelect.value = name;
    this.state = emptySession();
    this.state.model = name;
    this.state.coarse = resetLoop(Math.floor(Math.random() * 1e9));
    this.state.fusion.takeFromA = Array(this.model.subvector_dims.length).fill(true);
    this.persist();
    this.renderCompose();
    this.renderFusion();
    this.renderEdit();
    await this.loadGrid();
  }

  persist(): void {
    saveSession(this.state, this.storage);
  }

  setStatus(text: string): void {
    this.els.status.textContent = text;
  }

  whenIdle(): Promise<void> {
    const wait = async (): Promise<void> => {
      let last;
      do {
        last = this.pending;
        await last;
      } while (last !== this.pending);
    };
    return wait();
  }

  private track<T>(p: Promise<T>): Promise<T> {
    const settled = p.catch((err) => this.setStatus(String(err)));
    this.pending = this.pending.then(() => settled);
    return p;
  }

  // ------------------------------------------------------- coarse-to-fine

  get branches(): number {
    return this.model?.subvector_dims.length ?? 0;
  }

  async loadGrid(seed?: number): Promise<void> {
    if (this.model === null) return;
    if (this.state.coarse.final !== null) {
      this.renderCompose();
      return;
    }
    if (seed !== undefined) this.state.coarse.gridSeed = seed;
    const token = ++this.gridToken;
    const scale = currentScale(this.state.coarse);
    this.setStatus(`sampling scale ${scale}…`);
    const cands = await this.api.candidates(
      this.model.name,
      this.state.coarse.prefix,
      this.gridCount,
      this.state.coarse.gridSeed + 1000 * scale,
    );
    if (token !== this.gridToken) return; // a newer request superseded this one
    this.state.coarse.grid = cands;
    this.persist();
    this.renderCompose();
    this.setStatus("");
  }

  async choose(index: number): Promise<void> {
    const grid = this.state.coarse.grid;
    if (this.model === null || grid === null || index >= grid.length) return;
    this.state.coarse = applySelection(this.state.coarse, grid[index], this.branches);
    this.persist();
    this.renderCompose();
    if (this.state.coarse.final === null) {
      await this.loadGrid();
    }
  }

  async goBack(scale: number): Promise<void> {
    this.state.coarse = backTo(this.state.coarse, scale);
    this.persist();
    this.renderCompose();
    await this.loadGrid();
  }

  private renderCompose(): void {
    const c = this.state.coarse;
    const scale = currentScale(c);
    this.els.scaleLabel.textContent =
      c.final !== null
        ? "complete — every sub-vector locked"
        : `choosing scale ${scale} of ${this.branches}`;

    this.els.chips.replaceChildren(
      ...c.prefix.map((_, t) => {
        const chip = el("button", "chip", `scale ${t} ✕`);
        chip.title = "reopen this scale";
        chip.addEventListener("click", () => void this.track(this.goBack(t)));
        return chip;
      }),
    );

    this.els.grid.replaceChildren(
      ...(c.grid ?? []).map((cand, i) => {
        const cell = el("div", "cand");
        const img = el("img");
        img.src = pngSrc(cand.image_png_b64);
        img.alt = `candidate ${i}`;
        cell.append(img, el("div", "cand-label", String(i)));
        cell.addEventListener("click", () => void this.track(this.choose(i)));
        return cell;
      }),
    );

    this.els.finalBox.replaceChildren();
    if (c.final !== null) {
      const img = el("img", "final-image");
      img.src = pngSrc(c.final.image_png_b64);
      const again = el("button", undefined, "start over");
      again.addEventListener("click", () => {
        this.state.coarse = resetLoop(Math.floor(Math.random() * 1e9));
        this.persist();
        this.renderCompose();
        void this.track(this.loadGrid());
      });
      this.els.finalBox.append(img, again);
    }
  }

  // --------------------------------------------------------------- fusion

  async sampleFuseSlot(slot: "a" | "b", seed: number): Promise<void> {
    if (this.model === null) return;
    this.state.fusion[slot] = await this.api.generateSeed(this.model.name, seed);
    this.state.fusion.result = null;
    this.persist();
    this.renderFusion();
    await this.runFuse();
  }

  async toggleFuse(t: number): Promise<void> {
    this.state.fusion.takeFromA[t] = !this.state.fusion.takeFromA[t];
    this.persist();
    this.renderFusion();
    await this.runFuse();
  }

  async applyFusePreset(index: number): Promise<void> {
    this.state.fusion.takeFromA = FUSE_PRESETS[index].toggles(this.branches);
    this.persist();
    this.renderFusion();
    await this.runFuse();
  }

  async runFuse(): Promise<void> {
    const f = this.state.fusion;
    if (this.model === null || f.a === null || f.b === null) return;
    f.result = await this.api.fuse(
      this.model.name,
      f.a.latent,
      f.b.latent,
      takeList(f.takeFromA),
    );
    this.persist();
    this.renderFusion();
  }

  private renderFusion(): void {
    const f = this.state.fusion;
    this.els.fuseSlots.a.src = f.a ? pngSrc(f.a.image_png_b64) : "";
    this.els.fuseSlots.b.src = f.b ? pngSrc(f.b.image_png_b64) : "";
    this.els.fuseToggles.replaceChildren(
      ...f.takeFromA.map((fromA, t) => {
        const btn = el("button", fromA ? "toggle from-a" : "toggle from-b");
        btn.textContent = `z${t}: ${fromA ? "A" : "B"}`;
        btn.addEventListener("click", () => void this.track(this.toggleFuse(t)));
        return btn;
      }),
    );
    this.els.fuseResult.src = f.result ? pngSrc(f.result.image_png_b64) : "";
  }

  // ----------------------------------------------------------------- edit

  get canvasSize(): [number, number] {
    return this.model?.resolution ?? [32, 32];
  }

  addStroke(stroke: Stroke): void {
    this.state.edit.strokes.push(stroke);
    this.persist();
    this.renderEdit();
  }

  addPatch(patch: Patch): void {
    this.state.edit.patches.push(patch);
    this.persist();
    this.renderEdit();
  }

  /** Undo the latest stroke; once strokes are gone, start popping patches. */
  undoStroke(): void {
    if (this.state.edit.strokes.length > 0) this.state.edit.strokes.pop();
    else this.state.edit.patches.pop();
    this.persist();
    this.renderEdit();
  }

  clearStrokes(): void {
    this.state.edit.strokes = [];
    this.state.edit.patches = [];
    this.persist();
    this.renderEdit();
  }

  /**
   * Patch-paste tool: lift the center crop out of the latest result (edit
   * result, else the composed final) and pin it as color constraints at the
   * same position.  Decoding the PNG needs a real 2D context, so this is a
   * no-op in headless DOMs; tests feed pixels straight into addPatch.
   */
  async pasteFromResult(): Promise<void> {
    const source =
      this.state.edit.history.at(-1)?.image_png_b64 ??
      this.state.coarse.final?.image_png_b64;
    if (source === undefined) {
      this.setStatus("nothing to paste from yet — compose or edit first");
      return;
    }
    const pixels = await decodePngRegion(source, this.canvasSize);
    if (pixels === null) {
      this.setStatus("patch paste needs canvas support");
      return;
    }
    const [h, w] = this.canvasSize;
    this.addPatch({ x: Math.floor(w / 4), y: Math.floor(h / 4), pixels });
  }

  cancelEdit(): void {
    if (this.editBusy) {
      this.editGeneration++;
      this.editBusy = false;
      this.setStatus("edit cancelled; showing last completed result");
      this.renderEdit();
    }
  }

  async runEdit(): Promise<void> {
    const [h, w] = this.canvasSize;
    if (this.model === null || this.editBusy) return;
    const constraints = toEditConstraints(this.state.edit.strokes, h, w, this.state.edit.patches);
    if (constraints === null) return;
    const generation = ++this.editGeneration;
    this.editBusy = true;
    this.renderEdit();
    try {
      const body: EditRequestBody = {
        model: this.model.name,
        ...constraints,
        seed: Math.floor(Math.random() * 1e9),
        config: this.editConfig,
      };
      const ticket = await this.api.submitEdit(body);
      const result = await this.api.pollJob(ticket.job_id, 250, 300_000, () => {
        if (generation !== this.editGeneration) throw new CancelledError("cancelled");
        this.setStatus(`optimizing… job ${ticket.job_id}`);
      });
      this.state.edit.history.push({
        latent: result.latent,
        image_png_b64: result.image_png_b64,
        loss: result.loss,
        trace: result.trace,
        init_kind: result.init_kind,
      });
      this.persist();
      this.setStatus(`done — final loss ${result.loss.toExponential(2)}`);
    } catch (err) {
      if (!(err instanceof CancelledError)) throw err;
    } finally {
      if (generation === this.editGeneration) this.editBusy = false;
      this.renderEdit();
    }
  }

  private renderEdit(): void {
    const [h, w] = this.canvasSize;
    this.els.canvas.width = w * CANVAS_SCALE;
    this.els.canvas.height = h * CANVAS_SCALE;
    this.redrawCanvas();
    this.els.runBtn.disabled =
      this.editBusy || isEmptyCanvas(this.state.edit.strokes, h, w, this.state.edit.patches);
    this.els.cancelBtn.disabled = !this.editBusy;
    (Object.keys(this.els.toolButtons) as Tool[]).forEach((tool) => {
      this.els.toolButtons[tool].classList.toggle("active", tool === this.activeTool);
    });
    const last = this.state.edit.history.at(-1);
    this.els.editResult.src = last ? pngSrc(last.image_png_b64) : "";
    this.els.lossLabel.textContent = last ? `loss ${last.loss.toExponential(3)}` : "";
    this.els.historyStrip.replaceChildren(
      ...this.state.edit.history.map((entry, i) => {
        const img = el("img", "history-thumb");
        img.src = pngSrc(entry.image_png_b64);
        img.title = `edit ${i}: loss ${entry.loss.toExponential(2)} (${entry.init_kind} init)`;
        return img;
      }),
    );
  }

  private redrawCanvas(): void {
    const ctx = this.els.canvas.getContext("2d");
    if (ctx === null) return; // headless DOM: state still holds the strokes
    ctx.fillStyle = "#202020";
    ctx.fillRect(0, 0, this.els.canvas.width, this.els.canvas.height);
    for (const patch of this.state.edit.patches) {
      patch.pixels.forEach((row, dy) => {
        row.forEach(([r, g, b], dx) => {
          ctx.fillStyle = `rgb(${Math.round(r * 255)},${Math.round(g * 255)},${Math.round(b * 255)})`;
          ctx.fillRect((patch.x + dx) * CANVAS_SCALE, (patch.y + dy) * CANVAS_SCALE,
                       CANVAS_SCALE, CANVAS_SCALE);
        });
      });
    }
    ctx.lineCap = "round";
    ctx.lineJoin = "round";
    for (const stroke of this.state.edit.strokes) {
      const [r, g, b] = stroke.color;
      ctx.strokeStyle =
        stroke.tool === "brush"
          ? `rgb(${Math.round(r * 255)},${Math.round(g * 255)},${Math.round(b * 255)})`
          : stroke.tool === "eraser"
            ? "#202020"
            : "#f5f5f5";
      ctx.lineWidth = stroke.radius * 2 * CANVAS_SCALE;
      ctx.beginPath();
      stroke.points.forEach((p, i) => {
        const x = p.x * CANVAS_SCALE;
        const y = p.y * CANVAS_SCALE;
        if (i === 0) ctx.moveTo(x, y);
        else ctx.lineTo(x, y);
      });
      ctx.stroke();
    }
  }

  // ------------------------------------------------------------------ DOM

  private buildDom(): void {
    const header = el("header");
    const title = el("h1", undefined, "scalebranch studio");
    const modelSelect = el("select");
    modelSelect.addEventListener("change", () =>
      void this.track(this.setModel(modelSelect.value)),
    );
    const status = el("span", "status");
    const reset = el("button", undefined, "new session");
    reset.addEventListener("click", () => {
      if (this.model) void this.track(this.setModel(this.model.name));
    });
    header.append(title, modelSelect, reset, status);

    const nav = el("nav");
    const tabs = {} as Record<PanelName, HTMLButtonElement>;
    const panels = {} as Record<PanelName, HTMLDivElement>;
    (["compose", "fuse", "edit"] as PanelName[]).forEach((name) => {
      tabs[name] = el("button", "tab", name);
      tabs[name].addEventListener("click", () => this.showPanel(name));
      nav.appendChild(tabs[name]);
      panels[name] = el("div", `panel panel-${name}`);
    });

    // compose panel
    const scaleLabel = el("span", "scale-label");
    const redraw = el("button", undefined, "redraw");
    redraw.addEventListener("click", () =>
      void this.track(this.loadGrid(Math.floor(Math.random() * 1e9))),
    );
    const chips = el("div", "chips");
    const grid = el("div", "cand-grid");
    const finalBox = el("div", "final-box");
    panels.compose.append(scaleLabel, redraw, chips, grid, finalBox);

    // fuse panel
    const fuseSeeds = { a: el("input"), b: el("input") };
    const fuseSlots = { a: el("img", "slot"), b: el("img", "slot") };
    const fuseToggles = el("div", "fuse-toggles");
    const fuseResult = el("img", "fuse-result");
    (["a", "b"] as const).forEach((slot) => {
      fuseSeeds[slot].type = "number";
      fuseSeeds[slot].value = slot === "a" ? "1" : "2";
      const btn = el("button", undefined, `sample ${slot.toUpperCase()}`);
      btn.addEventListener("click", () =>
        void this.track(this.sampleFuseSlot(slot, Number(fuseSeeds[slot].value))),
      );
      const box = el("div", "fuse-slot");
      box.append(fuseSeeds[slot], btn, fuseSlots[slot]);
      panels.fuse.appendChild(box);
    });
    const presetRow = el("div", "presets");
    FUSE_PRESETS.forEach((preset, i) => {
      const btn = el("button", undefined, preset.name);
      btn.addEventListener("click", () => void this.track(this.applyFusePreset(i)));
      presetRow.appendChild(btn);
    });
    panels.fuse.append(fuseToggles, presetRow, fuseResult);

    // edit panel
    const toolRow = el("div", "tools");
    const toolButtons = {} as Record<Tool, HTMLButtonElement>;
    (["brush", "eraser", "edge"] as Tool[]).forEach((tool) => {
      toolButtons[tool] = el("button", "tool", tool);
      toolButtons[tool].addEventListener("click", () => {
        this.activeTool = tool;
        this.renderEdit();
      });
      toolRow.appendChild(toolButtons[tool]);
    });
    const pasteBtn = el("button", "tool", "paste patch");
    pasteBtn.addEventListener("click", () => void this.track(this.pasteFromResult()));
    toolRow.appendChild(pasteBtn);
    const colorInput = el("input");
    colorInput.type = "color";
    colorInput.value = "#d83a2a";
    const radiusInput = el("input");
    radiusInput.type = "range";
    radiusInput.min = "1";
    radiusInput.max = "8";
    radiusInput.value = "3";
    toolRow.append(colorInput, radiusInput);

    const canvas = el("canvas", "edit-canvas");
    this.wireCanvas(canvas, colorInput, radiusInput);

    const runBtn = el("button", "run", "Run");
    runBtn.addEventListener("click", () => void this.track(this.runEdit()));
    const cancelBtn = el("button", undefined, "Cancel");
    cancelBtn.addEventListener("click", () => this.cancelEdit());
    const undoBtn = el("button", undefined, "Undo");
    undoBtn.addEventListener("click", () => this.undoStroke());
    const clearBtn = el("button", undefined, "Clear");
    clearBtn.addEventListener("click", () => this.clearStrokes());
    const editResult = el("img", "edit-result");
    const lossLabel = el("span", "loss");
    const historyStrip = el("div", "history");
    panels.edit.append(
      toolRow, canvas, el("div", "edit-actions"), runBtn, cancelBtn, undoBtn, clearBtn,
      editResult, lossLabel, historyStrip,
    );

    this.root.replaceChildren(header, nav, panels.compose, panels.fuse, panels.edit);
    this.els = {
      modelSelect, status, tabs, panels, scaleLabel, chips, grid, redraw, finalBox,
      fuseSeeds, fuseSlots, fuseToggles, fuseResult, toolButtons, colorInput,
      radiusInput, canvas, runBtn, cancelBtn, undoBtn, clearBtn, editResult,
      lossLabel, historyStrip,
    };
    this.showPanel("compose");
  }

  showPanel(name: PanelName): void {
    (["compose", "fuse", "edit"] as PanelName[]).forEach((p) => {
      this.els.panels[p].classList.toggle("hidden", p !== name);
      this.els.tabs[p].classList.toggle("active", p === name);
    });
  }

  private wireCanvas(
    canvas: HTMLCanvasElement,
    colorInput: HTMLInputElement,
    radiusInput: HTMLInputElement,
  ): void {
    const toImage = (ev: MouseEvent): { x: number; y: number } => {
      const rect = canvas.getBoundingClientRect();
      const sx = canvas.width / Math.max(1, rect.width);
      const sy = canvas.height / Math.max(1, rect.height);
      return {
        x: ((ev.clientX - rect.left) * sx) / CANVAS_SCALE,
        y: ((ev.clientY - rect.top) * sy) / CANVAS_SCALE,
      };
    };
    canvas.addEventListener("mousedown", (ev) => {
      this.drawing = {
        tool: this.activeTool,
        color: hexToRgb(colorInput.value),
        radius: Number(radiusInput.value),
        points: [toImage(ev)],
      };
    });
    canvas.addEventListener("mousemove", (ev) => {
      if (this.drawing === null) return;
      this.drawing.points.push(toImage(ev));
      this.redrawPreview();
    });
    const finish = () => {
      if (this.drawing === null) return;
      this.addStroke(this.drawing);
      this.drawing = null;
    };
    canvas.addEventListener("mouseup", finish);
    canvas.addEventListener("mouseleave", finish);
  }

  private redrawPreview(): void {
    // strokes-in-progress share the same renderer; the uncommitted stroke
    // is drawn by temporarily including it
    if (this.drawing === null) return;
    this.state.edit.strokes.push(this.drawing);
    this.redrawCanvas();
    this.state.edit.strokes.pop();
  }

  private restorePanels(): void {
    if (this.model === null) return;
    if (this.state.fusion.takeFromA.length !== this.branches) {
      this.state.fusion.takeFromA = Array(this.branches).fill(true);
    }
    this.renderCompose();
    this.renderFusion();
    this.renderEdit();
    if (this.state.coarse.grid === null && this.state.coarse.final === null) {
      void this.track(this.loadGrid());
    }
  }
}

/** Mount the studio and connect to the service. */
export async function initApp(root: HTMLElement, opts: AppOptions = {}): Promise<StudioApp> {
  const app = new StudioApp(root, opts);
  await app.start();
  return app;
}

// auto-mount when loaded as the page entry point (vite dev/build)
const mount = document.getElementById("app");
if (mount !== null && !mount.hasAttribute("data-no-automount")) {
  initApp(mount).catch((err) => {
    mount.textContent = `failed to reach the service: ${err}`;
  });
}
