import { ApiError } from './api'
import type { SessionHistory } from './state'
import type { CandidateDraft, TrialHistoryEntry, WhatIfRequest, WhatIfResponse } from './types'

export type PredictOutcome =
  | { kind: 'ok'; entry: TrialHistoryEntry }
  | { kind: 'error'; error: ApiError }
  | { kind: 'failed'; error: Error }
  | { kind: 'stale' }

export function draftToRequest(draft: CandidateDraft): WhatIfRequest {
  const req: WhatIfRequest = {
    lat: draft.lat,
    lon: draft.lon,
    is_omni: draft.isOmni,
    manufacturer: draft.manufacturer,
    antenna_model: draft.antennaModel,
  }
  if (!draft.isOmni && draft.azimuthDeg !== null) req.azimuth_deg = draft.azimuthDeg
  if (draft.date) req.date = draft.date
  return req
}

// One prediction in flight per user action. Every placement takes a ticket
// from a monotone counter; a reply only lands (history + render) if no newer
// placement was issued while it was on the wire. Out-of-order replies from
// superseded clicks are dropped entirely.
export class PredictLoop {
  private latestTicket = 0

  constructor(
    private readonly send: (req: WhatIfRequest) => Promise<WhatIfResponse>,
    private readonly history: SessionHistory,
  ) {}

  async place(draft: CandidateDraft): Promise<PredictOutcome> {
    const ticket = ++this.latestTicket
    let response: WhatIfResponse
    try {
      response = await this.send(draftToRequest(draft))
    } catch (err) {
      if (ticket !== this.latestTicket) return { kind: 'stale' }
      if (err instanceof ApiError) return { kind: 'error', error: err }
      return { kind: 'failed', error: err instanceof Error ? err : new Error(String(err)) }
    }
    if (ticket !== this.latestTicket) return { kind: 'stale' }
    return { kind: 'ok', entry: this.history.add(draft, response) }
  }
}
