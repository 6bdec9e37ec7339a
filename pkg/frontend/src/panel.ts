import { KPI_COLUMNS } from './state'
import type { KpiKey, TrialHistoryEntry } from './types'

export function formatKpi(key: KpiKey, value: number): string {
  const unit = KPI_COLUMNS.find((c) => c.key === key)?.unit ?? ''
  return `${value.toFixed(2)} ${unit}`.trim()
}

// Read-only display of the latest prediction. Every number shown here came
// out of a service response; the client never derives KPIs on its own.
export class ResultPanel {
  readonly root: HTMLElement
  private readonly values = new Map<KpiKey, HTMLElement>()
  private readonly badge = document.createElement('span')
  private readonly version = document.createElement('small')
  private readonly placeholder = document.createElement('p')

  constructor() {
    this.root = document.createElement('section')
    this.root.className = 'result-panel'

    this.placeholder.textContent = 'No prediction yet.'
    this.root.appendChild(this.placeholder)

    const list = document.createElement('dl')
    list.className = 'kpi-list'
    list.hidden = true
    for (const col of KPI_COLUMNS) {
      const dt = document.createElement('dt')
      dt.textContent = col.label
      const dd = document.createElement('dd')
      dd.className = `kpi kpi-${col.key}`
      dd.dataset.kpi = col.key
      this.values.set(col.key, dd)
      list.append(dt, dd)
    }
    this.root.appendChild(list)

    this.badge.className = 'low-confidence-badge'
    this.badge.textContent = 'low confidence'
    this.badge.title = 'fewer supporting 4G cells than the model prefers'
    this.badge.hidden = true
    this.root.appendChild(this.badge)

    this.version.className = 'model-version'
    this.root.appendChild(this.version)
  }

  show(entry: TrialHistoryEntry): void {
    this.placeholder.hidden = true
    this.root.querySelector('.kpi-list')?.removeAttribute('hidden')
    for (const col of KPI_COLUMNS) {
      const el = this.values.get(col.key)
      if (el) el.textContent = formatKpi(col.key, entry.response[col.key])
    }
    this.badge.hidden = !entry.response.low_confidence
    this.version.textContent = `trial #${entry.trialId} · model ${entry.response.model_version}`
  }
}
