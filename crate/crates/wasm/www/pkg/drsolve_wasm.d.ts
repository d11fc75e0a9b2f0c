/* tslint:disable */
/* eslint-disable */

export class Problem {
    private constructor();
    free(): void;
    [Symbol.dispose](): void;
    /**
     * The correct option letter.
     */
    answer(): string;
    /**
     * Angle the rotation search settles on, ties resolved as the solver does.
     */
    best_rotation(index: number): number;
    category(): string;
    /**
     * RGBA bytes of panel `index` (1..=7), ready for `ImageData`.
     */
    panel_rgba(index: number): Uint8Array;
    panel_size(): number;
    /**
     * Similarity of panel `index` to panel 1 rotated by each whole degree.
     */
    rotation_curve(index: number): Float64Array;
    /**
     * Decision record as JSON.
     */
    solve(): string;
}

/**
 * Generates one problem of `category` (RT, CT, SS or OT).
 */
export function generate(category: string, seed: number): Problem;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_problem_free: (a: number, b: number) => void;
    readonly generate: (a: number, b: number, c: number) => [number, number, number];
    readonly problem_answer: (a: number) => [number, number];
    readonly problem_best_rotation: (a: number, b: number) => [number, number, number];
    readonly problem_category: (a: number) => [number, number];
    readonly problem_panel_rgba: (a: number, b: number) => [number, number, number, number];
    readonly problem_panel_size: (a: number) => number;
    readonly problem_rotation_curve: (a: number, b: number) => [number, number, number, number];
    readonly problem_solve: (a: number) => [number, number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
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
