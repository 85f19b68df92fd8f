import { ApiClient } from './api.js';
import { debounce, type Debounced } from './debounce.js';
import { RequestSequencer } from './sequencer.js';
import { SliderPanelState } from './state.js';
import type { Point, RasterPayload } from './types.js';

export interface FrameRenderer {
  drawFrame(points: Point[], raster?: RasterPayload): void;
  toast(message: string): void;
}

const DEBOUNCE_MS = 40; // must stay <= 50ms so the rig feels live

/**
 * Glue between the slider panel and the service. Every reconstruct call
 * carries a sequence number; responses that no longer answer the newest
 * request are dropped, so the rendered frame always matches the newest
 * slider state. On server errors the last good frame is kept.
 */
export class EditorController {
  private readonly seq = new RequestSequencer();
  private readonly scheduleRefresh: Debounced<[]>;
  private interpolationFrames: number[][] | null = null;

  constructor(
    private readonly api: ApiClient,
    readonly state: SliderPanelState,
    private readonly renderer: FrameRenderer,
    debounceMs: number = DEBOUNCE_MS,
  ) {
    this.scheduleRefresh = debounce(() => void this.refresh(), debounceMs);
  }

  onSliderChange(index: number, value: number): void {
    this.state.setValue(index, value);
    this.scheduleRefresh();
  }

  /** Sequence-guarded reconstruct of the current slider state. */
  async refresh(): Promise<void> {
    const seq = this.seq.issue();
    const params = this.state.values.slice();
    try {
      const resp = await this.api.reconstruct(params);
      if (this.seq.accept(seq)) {
        this.renderer.drawFrame(resp.points, resp.raster);
      }
    } catch (err) {
      this.renderer.toast(err instanceof Error ? err.message : String(err));
    }
  }

  resetSliders(): Promise<void> {
    this.state.reset();
    return this.refresh();
  }

  /** Capture the current pose (offset from the zero base) into the library. */
  async saveBlendshape(name: string, description = ''): Promise<void> {
    try {
      await this.api.createBlendshape(name, this.state.captureOffset(), description);
      this.state.activeBlendshape = name;
    } catch (err) {
      this.renderer.toast(err instanceof Error ? err.message : String(err));
      throw err;
    }
  }

  /** Fetch a saved blendshape and add it onto the sliders (preview math). */
  async applyBlendshape(name: string, weight: number): Promise<void> {
    try {
      const bs = await this.api.getBlendshape(name);
      this.state.applyOffset(bs.offset, weight);
    } catch (err) {
      this.renderer.toast(err instanceof Error ? err.message : String(err));
      throw err;
    }
    await this.refresh();
  }

  /**
   * Prepare the interpolation scrubber between two saved poses. The frame
   * list comes from the service, so the endpoints are the saved poses
   * exactly.
   */
  async loadInterpolation(fromName: string, toName: string, steps = 101): Promise<void> {
    const a = await this.api.getBlendshape(fromName);
    const b = await this.api.getBlendshape(toName);
    const resp = await this.api.interpolate(a.offset, b.offset, steps);
    this.interpolationFrames = resp.frames;
  }

  /** Scrub position alpha in [0,1]; snaps to the fetched frame grid. */
  async scrubTo(alpha: number): Promise<void> {
    if (!this.interpolationFrames) {
      throw new Error('no interpolation loaded: select two saved poses first');
    }
    const frames = this.interpolationFrames;
    const idx = Math.min(frames.length - 1, Math.max(0, Math.round(alpha * (frames.length - 1))));
    this.state.scrub = alpha;
    this.state.setValues(frames[idx]);
    await this.refresh();
  }
}
