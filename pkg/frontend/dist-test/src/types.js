/** Wire types shared with the annotation service API. */
export {};
//# sourceMappingURL=types.js.map