// Latest-wins bookkeeping for in-flight requests: a response may render
// only if it answers the newest issued request, so late arrivals from
// superseded slider positions are dropped.

export class RequestSequencer {
  private nextSeq = 1;
  private newestIssued = 0;
  private newestRendered = 0;

  issue(): number {
    this.newestIssued = this.nextSeq;
    return this.nextSeq++;
  }

  /** True iff a response for `seq` should render. Marks it rendered. */
  accept(seq: number): boolean {
    if (seq !== this.newestIssued || seq <= this.newestRendered) {
      return false;
    }
    this.newestRendered = seq;
    return true;
  }

  get inFlight(): boolean {
    return this.newestIssued > this.newestRendered;
  }
}
