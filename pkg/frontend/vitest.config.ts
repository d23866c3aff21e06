import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    environment: "node",
    include: ["test/**/*.test.ts"],
    // The live-server suite boots the Python backend, which needs a
    // moment to come up; everything else finishes in milliseconds.
    testTimeout: 60_000,
    hookTimeout: 60_000,
  },
});
