/* tslint:disable */
/* eslint-disable */

/**
 * Roots `z` of `Q_z(x) = 0` for a real point `x`, with `|Q_z(x)|` at each.
 */
export function elliptic(a1: number, a2: number, a3: number, x1: number, x2: number, x3: number): string;

export function ivory(a1: number, a2: number, a3: number, z_re: number, z_im: number, seed: number): string;

/**
 * Superposes two random leaves with parameters `z1`, `z2` on the paraboloid
 * `diag(2, 1/2)` and reports the residuals of the result.
 */
export function superpose(z1_re: number, z1_im: number, z2_re: number, z2_im: number, seed: number): string;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly elliptic: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number, number, number];
    readonly ivory: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number, number, number];
    readonly superpose: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
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
