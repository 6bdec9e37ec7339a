import type { Api } from './api'
import { CandidateForm } from './form'
import { HistoryView } from './history'
import { PlannerMap } from './map'
import { ResultPanel } from './panel'
import { PredictLoop } from './predictLoop'
import { SessionHistory } from './state'
import type { MapView } from './projection'

const DEFAULT_VIEW: MapView = {
  centerLat: 51.515,
  centerLon: -0.12,
  metersPerPx: 16,
  width: 720,
  height: 520,
}

export interface App {
  root: HTMLElement
  map: PlannerMap
  form: CandidateForm
  panel: ResultPanel
  history: SessionHistory
  historyView: HistoryView
  loop: PredictLoop
  predictCurrent: () => Promise<void>
}

export function createApp(host: HTMLElement, api: Api, view: MapView = DEFAULT_VIEW): App {
  const history = new SessionHistory()
  const loop = new PredictLoop(api.predict, history)
  const panel = new ResultPanel()
  const historyView = new HistoryView(history)

  const map = new PlannerMap({
    view,
    fetchCells: api.cells,
    callbacks: {
      onPlace: (lat, lon) => {
        form.setPoint(lat, lon)
        void predictCurrent()
      },
      onAzimuthDial: (deg) => form.setAzimuth(deg),
    },
  })

  const form = new CandidateForm({
    onAzimuthEdit: (deg) => map.setAzimuth(deg),
    onOmniToggle: (omni) => map.setOmni(omni),
  })

  const predictCurrent = async () => {
    const draft = form.draft()
    if (!draft) {
      form.showGeneralError('Place a candidate on the map first.')
      return
    }
    form.clearErrors()
    const outcome = await loop.place(draft)
    switch (outcome.kind) {
      case 'ok': {
        panel.show(outcome.entry)
        map.highlight(new Set(outcome.entry.response.neighbors.map((n) => n.cell_id)))
        historyView.refresh()
        break
      }
      case 'error': {
        const { body } = outcome.error
        if (body.fields && Object.keys(body.fields).length > 0) {
          form.showFieldErrors(body.fields)
        } else {
          form.showGeneralError(body.message)
        }
        break
      }
      case 'failed':
        form.showGeneralError('Prediction request failed, is the service up?')
        break
      case 'stale':
        break
    }
  }

  const rerun = document.createElement('button')
  rerun.type = 'button'
  rerun.className = 'predict-again'
  rerun.textContent = 'Predict'
  rerun.addEventListener('click', () => void predictCurrent())
  form.root.appendChild(rerun)

  const header = document.createElement('header')
  const title = document.createElement('h1')
  title.textContent = 'Candidate cell planner'
  const status = document.createElement('small')
  status.className = 'service-status'
  header.append(title, status)
  void api
    .health()
    .then((h) => {
      status.textContent = `${h.n_cells} cells · model ${h.model_version}`
    })
    .catch(() => {
      status.textContent = 'service unreachable'
    })

  const main = document.createElement('div')
  main.className = 'layout'
  const side = document.createElement('div')
  side.className = 'sidebar'
  side.append(form.root, panel.root, historyView.root)
  main.append(map.root, side)

  host.replaceChildren(header, main)
  historyView.refresh()
  void map.refresh()

  return { root: host, map, form, panel, history, historyView, loop, predictCurrent }
}
