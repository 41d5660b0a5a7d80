import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    include: ["tests/**/*.test.ts"],
    environment: "node",
    // The integration suite drives one live server; keep files sequential
    // so its timing-sensitive cadence check is not starved by other runs.
    fileParallelism: false,
  },
});
