import { formatKpi } from './panel'
import { bestPerKpi, KPI_COLUMNS, toCsv, type SessionHistory } from './state'

// Trial log with per-trial checkboxes feeding the comparison table; rendering
// an old entry is purely a lookup, it never re-issues a prediction.
export class HistoryView {
  readonly root: HTMLElement
  private readonly list = document.createElement('ul')
  private readonly table = document.createElement('table')
  private readonly tablePlaceholder = document.createElement('p')
  private readonly exportButton = document.createElement('button')
  private readonly selected = new Set<number>()

  constructor(private readonly history: SessionHistory) {
    this.root = document.createElement('section')
    this.root.className = 'history'

    const heading = document.createElement('h2')
    heading.textContent = 'Trials'
    this.list.className = 'trial-list'

    this.exportButton.type = 'button'
    this.exportButton.textContent = 'Export CSV'
    this.exportButton.disabled = true
    this.exportButton.addEventListener('click', () => this.download())

    this.table.className = 'comparison'
    this.table.hidden = true
    this.tablePlaceholder.className = 'comparison-empty'
    this.tablePlaceholder.textContent = 'Select trials to compare.'

    this.root.append(heading, this.list, this.exportButton, this.tablePlaceholder, this.table)
  }

  refresh(): void {
    this.list.replaceChildren()
    for (const entry of this.history.all()) {
      const li = document.createElement('li')
      li.dataset.trialId = String(entry.trialId)
      const pick = document.createElement('input')
      pick.type = 'checkbox'
      pick.checked = this.selected.has(entry.trialId)
      pick.addEventListener('change', () => {
        if (pick.checked) this.selected.add(entry.trialId)
        else this.selected.delete(entry.trialId)
        this.renderComparison()
      })
      const where = entry.draft.isOmni
        ? 'omni'
        : `az ${entry.draft.azimuthDeg?.toFixed(0)}°`
      const label = document.createElement('span')
      label.textContent =
        `#${entry.trialId} (${entry.draft.lat.toFixed(4)}, ${entry.draft.lon.toFixed(4)}) ${where}` +
        (entry.response.low_confidence ? ' ⚠' : '')
      li.append(pick, label)
      this.list.appendChild(li)
    }
    this.exportButton.disabled = this.history.size === 0
    this.renderComparison()
  }

  renderComparison(): void {
    const entries = this.history.all().filter((e) => this.selected.has(e.trialId))
    if (entries.length === 0) {
      this.table.hidden = true
      this.tablePlaceholder.hidden = false
      return
    }
    this.table.hidden = false
    this.tablePlaceholder.hidden = true
    this.table.replaceChildren()

    const head = this.table.createTHead().insertRow()
    head.insertCell().textContent = 'KPI'
    for (const e of entries) head.insertCell().textContent = `#${e.trialId}`

    const best = bestPerKpi(entries)
    const body = this.table.createTBody()
    for (const col of KPI_COLUMNS) {
      const row = body.insertRow()
      row.insertCell().textContent = col.label
      for (const e of entries) {
        const cell = row.insertCell()
        cell.textContent = formatKpi(col.key, e.response[col.key])
        if (best[col.key].has(e.trialId)) cell.classList.add('best')
      }
    }
  }

  private download(): void {
    const blob = new Blob([toCsv(this.history.all())], { type: 'text/csv' })
    const url = URL.createObjectURL(blob)
    const a = document.createElement('a')
    a.href = url
    a.download = 'trials.csv'
    a.click()
    URL.revokeObjectURL(url)
  }
}
