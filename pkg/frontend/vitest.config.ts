import { defineConfig } from 'vitest/config';

export default defineConfig({
  test: {
    include: ['test/**/*.test.ts'],
    // The round-trip suite builds the bundle, spawns the annotation service,
    // and drives a full batch over real HTTP; give it room.
    testTimeout: 120_000,
    hookTimeout: 120_000,
  },
});
