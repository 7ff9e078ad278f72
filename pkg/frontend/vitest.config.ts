import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    include: ["test/**/*.test.ts"],
    // the integration spec boots real gateway processes
    testTimeout: 120_000,
    hookTimeout: 120_000,
  },
});
