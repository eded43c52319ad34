/**
 * Typed errors mirroring the core CLI's machine-readable categories.
 * Nonzero exits print `tokensieve: error: category=<cat>: <message>` on
 * stderr; the binding maps each category to one of these classes so
 * callers can catch structurally instead of parsing text.
 */

export class TokenSieveError extends Error {
  constructor(
    message: string,
    readonly category: string,
    readonly exitCode: number | null = null,
  ) {
    super(message);
    this.name = new.target.name;
  }
}

/** A value was outside its documented domain (bad rho, non-finite score). */
export class InvalidInputError extends TokenSieveError {}

/** Record data failed to parse or validate (bad sums, schema mismatch). */
export class RecordDataError extends TokenSieveError {}

/** The core could not read or write a file. */
export class IoError extends TokenSieveError {}

/** A demo or simulator configuration was rejected. */
export class ConfigurationError extends TokenSieveError {}

/** Buffer shapes disagreed before the core was ever invoked. */
export class ShapeError extends TokenSieveError {
  constructor(message: string) {
    super(message, "shape");
  }
}

const CATEGORY_CLASSES: Record<string, new (m: string, c: string, e: number | null) => TokenSieveError> = {
  "invalid-input": InvalidInputError,
  dimension: InvalidInputError,
  "empty-input": InvalidInputError,
  "empty-selection": InvalidInputError,
  "biased-estimator": InvalidInputError,
  parse: RecordDataError,
  validation: RecordDataError,
  schema: RecordDataError,
  io: IoError,
  configuration: ConfigurationError,
};

const CATEGORY_RE = /category=([a-z-]+):\s*(.*)/;

/** Build the typed error for a failed core invocation. */
export function errorFromCli(stderr: string, exitCode: number | null): TokenSieveError {
  const match = CATEGORY_RE.exec(stderr);
  if (match) {
    const [, category, message] = match;
    const cls = CATEGORY_CLASSES[category] ?? TokenSieveError;
    return new cls(message.trim() || stderr.trim(), category, exitCode);
  }
  return new TokenSieveError(stderr.trim() || `core exited with code ${exitCode}`, "error", exitCode);
}
