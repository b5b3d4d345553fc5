/** Bounds preview refreshes to one in-flight request per session, spaced at
 * least minIntervalMs apart; trailing requests collapse into one. */
export class PreviewCoalescer {
  private inFlight = false;
  private pending = false;
  private lastStart = -Infinity;
  private timer: ReturnType<typeof setTimeout> | null = null;
  public started = 0;

  constructor(
    private readonly run: () => Promise<void>,
    private readonly minIntervalMs = 100,
    private readonly now: () => number = () => Date.now(),
  ) {}

  request(): void {
    if (this.inFlight || this.timer !== null) {
      this.pending = true;
      return;
    }
    const wait = this.lastStart + this.minIntervalMs - this.now();
    if (wait > 0) {
      this.pending = true;
      this.timer = setTimeout(() => {
        this.timer = null;
        if (this.pending) {
          this.pending = false;
          this.launch();
        }
      }, wait);
      return;
    }
    this.launch();
  }

  private launch(): void {
    this.inFlight = true;
    this.started++;
    this.lastStart = this.now();
    this.run()
      .catch(() => undefined)
      .finally(() => {
        this.inFlight = false;
        if (this.pending) {
          this.pending = false;
          this.request();
        }
      });
  }
}
