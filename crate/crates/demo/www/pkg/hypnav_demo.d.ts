/* tslint:disable */
/* eslint-disable */

/**
 * The 81 discrete actions as `[vx, vy]` velocities.
 */
export function action_velocities(max_speed: number): string;

/**
 * One episode rendered as SVG. `policy` is `orca` or `untrained` (a
 * freshly initialised planner, humans coloured by its attention).
 */
export function crowd_episode(scenario: string, seed: number, policy: string): string;

/**
 * Distance, Möbius sum and sampled geodesic between two points of the
 * Poincaré disk. Points outside the disk are pulled onto its edge.
 */
export function disk_pair(ax: number, ay: number, bx: number, by: number, samples: number): string;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly action_velocities: (a: number) => [number, number];
    readonly crowd_episode: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
    readonly disk_pair: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __wbindgen_start: () => void;
}

export type SyncInitInput = BufferSource | WebAssembly.Module;

/**
 * Instantiates the given `module`, which can either be bytes or
 * a precompiled `WebAssembly.Module`.
 *
 * @param {{ module: SyncInitInput }} module - Passing `SyncInitInput` directly is deprecated.
 *
 * @returns {InitOutput}
 */
export function initSync(module: { module: SyncInitInput } | SyncInitInput): InitOutput;

/**
 * If `module_or_path` is {RequestInfo} or {URL}, makes a request and
 * for everything else, calls `WebAssembly.instantiate` directly.
 *
 * @param {{ module_or_path: InitInput | Promise<InitInput> }} module_or_path - Passing `InitInput` directly is deprecated.
 *
 * @returns {Promise<InitOutput>}
 */
export default function __wbg_init (module_or_path?: { module_or_path: InitInput | Promise<InitInput> } | InitInput | Promise<InitInput>): Promise<InitOutput>;
