import { defineConfig } from 'vitest/config'

export default defineConfig({
  server: {
    proxy: {
      '/health': 'http://127.0.0.1:8000',
      '/cells': 'http://127.0.0.1:8000',
      '/predict': 'http://127.0.0.1:8000',
    },
  },
  test: {
    environment: 'jsdom',
  },
})
