import type { CandidateDraft, KpiKey, TrialHistoryEntry, WhatIfResponse } from './types'

export interface KpiColumn {
  key: KpiKey
  label: string
  unit: string
  // PRB utilization is load, so lower wins; throughputs higher.
  better: 'low' | 'high'
}

export const KPI_COLUMNS: readonly KpiColumn[] = [
  { key: 'prb_util_pct', label: 'PRB utilization', unit: '%', better: 'low' },
  { key: 'ul_thr_mbps', label: 'UL throughput', unit: 'Mbps', better: 'high' },
  { key: 'dl_thr_mbps', label: 'DL throughput', unit: 'Mbps', better: 'high' },
]

// Append-only within the session; entries are frozen so nothing downstream
// can rewrite a trial after the fact.
export class SessionHistory {
  private entries: TrialHistoryEntry[] = []
  private nextId = 1

  add(draft: CandidateDraft, response: WhatIfResponse): TrialHistoryEntry {
    const entry: TrialHistoryEntry = Object.freeze({
      trialId: this.nextId++,
      draft: { ...draft },
      response,
      at: new Date().toISOString(),
    })
    this.entries.push(entry)
    return entry
  }

  all(): readonly TrialHistoryEntry[] {
    return this.entries.slice()
  }

  byId(trialId: number): TrialHistoryEntry | undefined {
    return this.entries.find((e) => e.trialId === trialId)
  }

  get size(): number {
    return this.entries.length
  }
}

// Winning trial ids per KPI across a selection; ties keep every winner.
export function bestPerKpi(
  entries: readonly TrialHistoryEntry[],
): Record<KpiKey, Set<number>> {
  const out = {
    prb_util_pct: new Set<number>(),
    ul_thr_mbps: new Set<number>(),
    dl_thr_mbps: new Set<number>(),
  }
  if (entries.length === 0) return out
  for (const col of KPI_COLUMNS) {
    const values = entries.map((e) => e.response[col.key])
    const best = col.better === 'low' ? Math.min(...values) : Math.max(...values)
    for (const e of entries) {
      if (e.response[col.key] === best) out[col.key].add(e.trialId)
    }
  }
  return out
}

export const CSV_HEADER =
  'trial_id,lat,lon,azimuth_deg,prb_util_pct,ul_thr_mbps,dl_thr_mbps,low_confidence'

export function toCsv(entries: readonly TrialHistoryEntry[]): string {
  const lines = [CSV_HEADER]
  for (const e of entries) {
    lines.push(
      [
        e.trialId,
        e.draft.lat,
        e.draft.lon,
        e.draft.isOmni ? '' : e.draft.azimuthDeg,
        e.response.prb_util_pct,
        e.response.ul_thr_mbps,
        e.response.dl_thr_mbps,
        e.response.low_confidence ? 1 : 0,
      ].join(','),
    )
  }
  return lines.join('\n') + '\n'
}
