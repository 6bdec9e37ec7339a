import type { CellDescriptor, WhatIfResponse } from '../src/types'

export function deferred<T>() {
  let resolve!: (v: T) => void
  let reject!: (e: unknown) => void
  const promise = new Promise<T>((res, rej) => {
    resolve = res
    reject = rej
  })
  return { promise, resolve, reject }
}

export function sampleResponse(overrides: Partial<WhatIfResponse> = {}): WhatIfResponse {
  return {
    prb_util_pct: 42.5,
    ul_thr_mbps: 11.25,
    dl_thr_mbps: 38.75,
    low_confidence: false,
    neighbors: [
      { cell_id: 'A-1', d: 120.0, alpha: 10.0, theta: 200.0, rho: 15.0 },
      { cell_id: 'A-2', d: 250.0, alpha: 355.0, theta: 90.0, rho: 170.0 },
    ],
    model_version: 'abc123def456',
    ...overrides,
  }
}

export function sectorCell(id: string, lat: number, lon: number, azimuth: number): CellDescriptor {
  return {
    cell_id: id,
    site_id: `S-${id}`,
    lat,
    lon,
    azimuth_deg: azimuth,
    is_omni: false,
    technology: '4G',
    manufacturer: 'nokys',
    antenna_model: 'p-11',
  }
}

export function omniCell(id: string, lat: number, lon: number): CellDescriptor {
  return { ...sectorCell(id, lat, lon, 0), azimuth_deg: null, is_omni: true }
}

export async function settle(): Promise<void> {
  await new Promise((res) => setTimeout(res, 0))
}
