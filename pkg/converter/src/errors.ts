export class FormatError extends Error {
  readonly byteOffset: number;

  constructor(message: string, byteOffset: number) {
    super(`${message} (at byte ${byteOffset})`);
    this.name = "FormatError";
    this.byteOffset = byteOffset;
  }
}

export class LabelMismatch extends Error {
  constructor(message: string) {
    super(message);
    this.name = "LabelMismatch";
  }
}
