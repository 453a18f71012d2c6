/* tslint:disable */
/* eslint-disable */

/**
 * Sweep rows (threshold, coverage, metrics) as a JSON array.
 */
export function coverage_curve(users_per_group: number, allow_probability: number, seed: number, steps: number): string;

export function render_prompt(users_per_group: number, seed: number, user_index: number, with_recommendations: boolean): string;

/**
 * The sweep row whose coverage is closest to `target`, from `coverage_curve` output.
 */
export function row_at_coverage(rows_json: string, target: number): string;

/**
 * `{loss, score_curve, calibration}` as JSON.
 */
export function training_curves(users_per_group: number, allow_probability: number, epochs: number, dim: number, seed: number): string;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly coverage_curve: (a: number, b: number, c: number, d: number) => [number, number, number, number];
    readonly render_prompt: (a: number, b: number, c: number, d: number) => [number, number, number, number];
    readonly row_at_coverage: (a: number, b: number, c: number) => [number, number, number, number];
    readonly training_curves: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
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
