// Slider panel state: one slider per model parameter, ranged by the
// model's eigenvalues. All math here is preview-side vector addition;
// anything persisted goes through the API.
//
// Values are NOT clamped to the slider ranges: out-of-range edits are
// legal in the parameter space (blendshape application may exceed a
// slider's travel), and clamping would break exact inverse restoration.
// The DOM sliders clamp their displayed position only.

export interface SliderRange {
  min: number;
  max: number;
}

const RANGE_FLOOR = 1e-6;

export class SliderPanelState {
  readonly k: number;
  readonly ranges: SliderRange[];
  values: number[];
  visibility: boolean[];
  activeBlendshape: string | null = null;
  scrub = 0;

  constructor(eigenvalues: number[], k?: number) {
    this.k = k ?? eigenvalues.length;
    if (this.k < 1 || this.k > eigenvalues.length) {
      throw new Error(`slider count ${this.k} out of range`);
    }
    // covers ~99.7% of the training variation per component
    this.ranges = eigenvalues.slice(0, this.k).map((ev) => {
      const r = Math.max(3 * Math.sqrt(Math.max(ev, 0)), RANGE_FLOOR);
      return { min: -r, max: r };
    });
    this.values = new Array(this.k).fill(0);
    this.visibility = new Array(this.k).fill(true);
  }

  setValue(i: number, value: number): void {
    if (i < 0 || i >= this.k) throw new Error(`slider index ${i} out of range`);
    if (!Number.isFinite(value)) throw new Error('slider value must be finite');
    this.values[i] = value;
  }

  setValues(values: number[]): void {
    if (values.length !== this.k) throw new Error('value count does not match slider count');
    values.forEach((v, i) => this.setValue(i, v));
  }

  reset(): void {
    this.values.fill(0);
  }

  /** Current pose as an offset from the zero base, for blendshape capture. */
  captureOffset(): number[] {
    return this.values.slice();
  }

  /** Preview-side weighted addition of a blendshape offset. */
  applyOffset(offset: number[], weight: number): void {
    if (offset.length !== this.k) throw new Error('offset degree does not match slider count');
    this.setValues(this.values.map((v, i) => v + weight * offset[i]));
  }

  toggleVisibility(i: number): void {
    this.visibility[i] = !this.visibility[i];
  }
}
