/// <reference types="vitest/config" />
import { defineConfig } from "vite";

export default defineConfig({
  server: {
    // the dyslat service runs separately; proxy API calls to it in dev
    proxy: {
      "/health": "http://127.0.0.1:8000",
      "/analyze": "http://127.0.0.1:8000",
      "/reconstruct": "http://127.0.0.1:8000",
      "/latent-map": "http://127.0.0.1:8000",
    },
  },
  test: {
    environment: "node",
    include: ["tests/**/*.test.ts"],
  },
});
