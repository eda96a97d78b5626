export { ApiClient, ApiError, parseEventStream, parseEventBlock } from "./api.js";
export { SedimentationView } from "./animate.js";
export { Controller } from "./interactions.js";
export {
  PALETTE,
  colorOf,
  pathOf,
  renderPacking,
  renderScene,
  renderTokens,
  toSvg,
} from "./render.js";
export * from "./types.js";
