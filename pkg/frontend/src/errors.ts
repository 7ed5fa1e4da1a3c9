export class FormatError extends Error {}

/** Segmentation mask selects zero usable pixels. */
export class EmptyMask extends Error {}

/** A foundation-model backend was requested but cannot run here. */
export class ModelUnavailable extends Error {}
