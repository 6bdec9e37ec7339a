import type {
  CellsResponse,
  ErrorBody,
  HealthResponse,
  WhatIfRequest,
  WhatIfResponse,
} from './types'

export interface Bbox {
  minLat: number
  minLon: number
  maxLat: number
  maxLon: number
}

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly body: ErrorBody,
  ) {
    super(body.message)
    this.name = 'ApiError'
  }
}

async function request<T>(path: string, init?: RequestInit): Promise<T> {
  const res = await fetch(path, init)
  if (!res.ok) {
    let body: ErrorBody
    try {
      body = (await res.json()) as ErrorBody
    } catch {
      body = { code: 'http_error', message: `request failed with ${res.status}` }
    }
    throw new ApiError(res.status, body)
  }
  return (await res.json()) as T
}

export const api = {
  health: () => request<HealthResponse>('/health'),

  cells: (bbox: Bbox) =>
    request<CellsResponse>(
      `/cells?bbox=${bbox.minLat},${bbox.minLon},${bbox.maxLat},${bbox.maxLon}`,
    ),

  predict: (body: WhatIfRequest) =>
    request<WhatIfResponse>('/predict', {
      method: 'POST',
      headers: { 'Content-Type': 'application/json' },
      body: JSON.stringify(body),
    }),
}

export type Api = typeof api
