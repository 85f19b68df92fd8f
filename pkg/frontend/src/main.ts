import { ApiClient, fetchTransport } from './api.js';
import { EditorController, type FrameRenderer } from './controller.js';
import { rasterToGray } from './raster.js';
import { SliderPanelState } from './state.js';
import { showToast } from './toast.js';
import type { Point, RasterPayload } from './types.js';
import { drawWireframe } from './wireframe.js';

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

function makeRenderer(): FrameRenderer {
  const wire = el<HTMLCanvasElement>('wireframe');
  const rasterCanvas = el<HTMLCanvasElement>('raster');
  const toasts = el<HTMLDivElement>('toasts');
  const wireCtx = wire.getContext('2d')!;
  const rasterCtx = rasterCanvas.getContext('2d')!;
  return {
    drawFrame(points: Point[], raster?: RasterPayload) {
      drawWireframe(wireCtx, points, wire.width, wire.height);
      if (raster) {
        const gray = rasterToGray(raster);
        const image = new ImageData(gray.pixels, gray.width, gray.height);
        rasterCanvas.width = gray.width;
        rasterCanvas.height = gray.height;
        rasterCtx.putImageData(image, 0, 0);
        rasterCanvas.style.display = 'block';
      }
    },
    toast(message: string) {
      showToast(toasts, message);
    },
  };
}

function buildSliders(controller: EditorController, panel: HTMLElement): void {
  const state = controller.state;
  panel.replaceChildren();
  for (let i = 0; i < state.k; i++) {
    const row = document.createElement('div');
    row.className = 'slider-row';
    const label = document.createElement('label');
    label.textContent = `p${i + 1}`;
    const input = document.createElement('input');
    input.type = 'range';
    const { min, max } = state.ranges[i];
    input.min = String(min);
    input.max = String(max);
    input.step = String((max - min) / 400);
    input.value = String(state.values[i]);
    input.dataset.index = String(i);
    const readout = document.createElement('span');
    readout.textContent = '0.000';
    input.addEventListener('input', () => {
      const value = Number(input.value);
      readout.textContent = value.toFixed(3);
      controller.onSliderChange(i, value);
    });
    row.append(label, input, readout);
    if (!state.visibility[i]) row.classList.add('hidden-slider');
    panel.appendChild(row);
  }
}

function syncSliders(state: SliderPanelState, panel: HTMLElement): void {
  panel.querySelectorAll<HTMLInputElement>('input[type=range]').forEach((input) => {
    const i = Number(input.dataset.index);
    input.value = String(state.values[i]);
    const readout = input.nextElementSibling as HTMLSpanElement | null;
    if (readout) readout.textContent = state.values[i].toFixed(3);
  });
}

async function refreshLibrary(api: ApiClient): Promise<string[]> {
  const listing = await api.listBlendshapes();
  const names = listing.blendshapes.map((b) => b.name);
  for (const id of ['bs-select', 'interp-from', 'interp-to']) {
    const select = el<HTMLSelectElement>(id);
    const previous = select.value;
    select.replaceChildren(
      ...names.map((n) => {
        const opt = document.createElement('option');
        opt.value = n;
        opt.textContent = n;
        return opt;
      }),
    );
    if (names.includes(previous)) select.value = previous;
  }
  return names;
}

async function start(): Promise<void> {
  const api = new ApiClient(fetchTransport());
  const toasts = el<HTMLDivElement>('toasts');
  let model;
  try {
    model = await api.getModel();
  } catch (err) {
    showToast(toasts, 'no model loaded on the server: build one first (see README)', 60000);
    return;
  }
  const kDefault = Math.min(model.m, 16);
  const state = new SliderPanelState(model.eigenvalues, kDefault);
  const renderer = makeRenderer();
  const controller = new EditorController(api, state, renderer);

  const panel = el<HTMLDivElement>('sliders');
  buildSliders(controller, panel);
  await controller.refresh();
  void refreshLibrary(api);

  el<HTMLButtonElement>('reset').addEventListener('click', () => {
    void controller.resetSliders().then(() => syncSliders(state, panel));
  });

  el<HTMLButtonElement>('bs-save').addEventListener('click', () => {
    const name = el<HTMLInputElement>('bs-name').value.trim();
    if (!name) {
      showToast(toasts, 'blendshape needs a name');
      return;
    }
    void controller
      .saveBlendshape(name)
      .then(() => refreshLibrary(api))
      .catch(() => undefined);
  });

  el<HTMLButtonElement>('bs-apply').addEventListener('click', () => {
    const name = el<HTMLSelectElement>('bs-select').value;
    const weight = Number(el<HTMLInputElement>('bs-weight').value);
    if (!name) return;
    void controller
      .applyBlendshape(name, weight)
      .then(() => syncSliders(state, panel))
      .catch(() => undefined);
  });

  el<HTMLButtonElement>('bs-delete').addEventListener('click', () => {
    const name = el<HTMLSelectElement>('bs-select').value;
    if (!name) return;
    void api
      .deleteBlendshape(name)
      .then(() => refreshLibrary(api))
      .catch((err) => showToast(toasts, err.message));
  });

  el<HTMLButtonElement>('interp-load').addEventListener('click', () => {
    const from = el<HTMLSelectElement>('interp-from').value;
    const to = el<HTMLSelectElement>('interp-to').value;
    if (!from || !to) {
      showToast(toasts, 'select two saved poses first');
      return;
    }
    void controller
      .loadInterpolation(from, to)
      .then(() => showToast(toasts, `interpolation ready: ${from} -> ${to}`))
      .catch((err) => showToast(toasts, err.message));
  });

  el<HTMLInputElement>('interp-scrub').addEventListener('input', (ev) => {
    const alpha = Number((ev.target as HTMLInputElement).value);
    void controller
      .scrubTo(alpha)
      .then(() => syncSliders(state, panel))
      .catch(() => undefined);
  });
}

document.addEventListener('DOMContentLoaded', () => {
  void start();
});
