// Wire types for the planning service. Field names are snake_case because
// they mirror the JSON contract exactly; client-side types are camelCase.

export interface WhatIfRequest {
  lat: number
  lon: number
  azimuth_deg?: number
  is_omni: boolean
  manufacturer: string
  antenna_model: string
  date?: string
}

export interface NeighborSummary {
  cell_id: string
  d: number
  alpha: number
  theta: number
  rho: number
}

export interface WhatIfResponse {
  prb_util_pct: number
  ul_thr_mbps: number
  dl_thr_mbps: number
  low_confidence: boolean
  neighbors: NeighborSummary[]
  model_version: string
}

export interface CellDescriptor {
  cell_id: string
  site_id: string
  lat: number
  lon: number
  azimuth_deg: number | null
  is_omni: boolean
  technology: string
  manufacturer: string
  antenna_model: string
}

export interface CellsResponse {
  cells: CellDescriptor[]
  truncated: boolean
}

export interface HealthResponse {
  status: string
  model_version: string
  n_cells: number
}

export interface ErrorBody {
  code: string
  message: string
  fields?: Record<string, string>
}

// What the planner has dialed in before submitting.
export interface CandidateDraft {
  lat: number
  lon: number
  azimuthDeg: number | null
  isOmni: boolean
  manufacturer: string
  antennaModel: string
  date: string | null
}

export interface TrialHistoryEntry {
  trialId: number
  draft: CandidateDraft
  response: WhatIfResponse
  at: string
}

export type KpiKey = 'prb_util_pct' | 'ul_thr_mbps' | 'dl_thr_mbps'
