/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_problem_free: (a: number, b: number) => void;
export const generate: (a: number, b: number, c: number) => [number, number, number];
export const problem_answer: (a: number) => [number, number];
export const problem_best_rotation: (a: number, b: number) => [number, number, number];
export const problem_category: (a: number) => [number, number];
export const problem_panel_rgba: (a: number, b: number) => [number, number, number, number];
export const problem_panel_size: (a: number) => number;
export const problem_rotation_curve: (a: number, b: number) => [number, number, number, number];
export const problem_solve: (a: number) => [number, number, number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __wbindgen_malloc: (a: number, b: number) => number;
export const __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_start: () => void;
