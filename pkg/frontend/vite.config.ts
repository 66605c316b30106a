import { defineConfig } from "vitest/config";

export default defineConfig({
  server: {
    // the studio talks to a locally running `scalebranch serve`
    proxy: {
      "/api": {
        target: process.env.STUDIO_API ?? "http://127.0.0.1:8000",
        changeOrigin: true,
        rewrite: (path) => path.replace(/^\/api/, ""),
      },
    },
  },
  test: {
    environment: "jsdom",
    globalSetup: "./tests/globalSetup.ts",
    fileParallelism: false,
    testTimeout: 120_000,
    hookTimeout: 300_000,
  },
});
