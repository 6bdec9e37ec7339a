import type { Bbox } from './api'
import type { CellsResponse } from './types'
import { bearingPoint, highlightNeighbors, renderCellMarkers, svgEl } from './markers'
import { panned, toGeo, toScreen, zoomed, type MapView } from './projection'

const CLICK_SLOP_PX = 4
const DIAL_RADIUS_PX = 26

export interface MapCallbacks {
  onPlace: (lat: number, lon: number) => void
  onAzimuthDial: (deg: number) => void
}

export interface MapOptions {
  view: MapView
  fetchCells: (bbox: Bbox) => Promise<CellsResponse>
  callbacks: MapCallbacks
}

export class PlannerMap {
  readonly root: HTMLElement
  view: MapView
  private readonly svg: SVGSVGElement
  private readonly cellLayer: SVGGElement
  private readonly candidateLayer: SVGGElement
  private readonly notice: HTMLElement
  private readonly banner: HTMLElement
  private candidate: { lat: number; lon: number } | null = null
  private azimuthDeg = 0
  private omni = false

  constructor(private readonly opts: MapOptions) {
    this.view = { ...opts.view }

    this.root = document.createElement('div')
    this.root.className = 'planner-map'

    this.svg = svgEl('svg', {
      width: String(this.view.width),
      height: String(this.view.height),
      viewBox: `0 0 ${this.view.width} ${this.view.height}`,
    })
    this.cellLayer = svgEl('g', { class: 'cells-layer' })
    this.candidateLayer = svgEl('g', { class: 'candidate-layer' })
    this.svg.append(this.cellLayer, this.candidateLayer)

    this.notice = document.createElement('p')
    this.notice.className = 'truncation-notice'
    this.notice.textContent = 'Too many cells for this view, zoom in to see them all.'
    this.notice.hidden = true

    this.banner = document.createElement('div')
    this.banner.className = 'fetch-banner'
    this.banner.hidden = true
    const text = document.createElement('span')
    text.textContent = 'Could not load cells.'
    const retry = document.createElement('button')
    retry.type = 'button'
    retry.textContent = 'Retry'
    retry.addEventListener('click', () => void this.refresh())
    this.banner.append(text, retry)

    this.root.append(this.banner, this.svg, this.notice)
    this.wirePointer()
  }

  async refresh(): Promise<void> {
    try {
      const res = await this.opts.fetchCells(this.bbox())
      this.banner.hidden = true
      this.notice.hidden = !res.truncated
      renderCellMarkers(this.cellLayer, res.cells, this.view)
    } catch {
      this.banner.hidden = false
    }
  }

  bbox(): Bbox {
    const a = toGeo(this.view, 0, this.view.height)
    const b = toGeo(this.view, this.view.width, 0)
    return { minLat: a.lat, minLon: a.lon, maxLat: b.lat, maxLon: b.lon }
  }

  placeAt(x: number, y: number): void {
    const { lat, lon } = toGeo(this.view, x, y)
    this.candidate = { lat, lon }
    this.drawCandidate()
    this.opts.callbacks.onPlace(lat, lon)
  }

  setAzimuth(deg: number): void {
    this.azimuthDeg = ((deg % 360) + 360) % 360
    this.drawCandidate()
  }

  setOmni(omni: boolean): void {
    this.omni = omni
    this.drawCandidate()
  }

  highlight(cellIds: ReadonlySet<string>): void {
    highlightNeighbors(this.cellLayer, cellIds)
  }

  private drawCandidate(): void {
    this.candidateLayer.replaceChildren()
    if (!this.candidate) return
    const { x, y } = toScreen(this.view, this.candidate.lat, this.candidate.lon)
    const dot = svgEl('circle', {
      cx: x.toFixed(2),
      cy: y.toFixed(2),
      r: '6',
      class: 'candidate',
    })
    this.candidateLayer.appendChild(dot)
    if (this.omni) return
    // Drag handle: grab the needle tip and swing it to point the sector.
    const tip = bearingPoint(x, y, this.azimuthDeg, DIAL_RADIUS_PX)
    const needle = svgEl('line', {
      x1: x.toFixed(2),
      y1: y.toFixed(2),
      x2: tip.x.toFixed(2),
      y2: tip.y.toFixed(2),
      class: 'azimuth-needle',
    })
    const handle = svgEl('circle', {
      cx: tip.x.toFixed(2),
      cy: tip.y.toFixed(2),
      r: '7',
      class: 'azimuth-handle',
    })
    this.candidateLayer.append(needle, handle)
  }

  dialFromPointer(px: number, py: number): number {
    if (!this.candidate) return this.azimuthDeg
    const c = toScreen(this.view, this.candidate.lat, this.candidate.lon)
    const deg = (Math.atan2(px - c.x, c.y - py) * 180) / Math.PI
    return ((deg % 360) + 360) % 360
  }

  private localPoint(ev: MouseEvent): { x: number; y: number } {
    const rect = this.svg.getBoundingClientRect()
    return { x: ev.clientX - rect.left, y: ev.clientY - rect.top }
  }

  private wirePointer(): void {
    let down: { x: number; y: number } | null = null
    let dragging: 'pan' | 'dial' | null = null
    let moved = 0

    this.svg.addEventListener('mousedown', (ev) => {
      down = this.localPoint(ev)
      moved = 0
      const target = ev.target as Element
      dragging = target.classList?.contains('azimuth-handle') ? 'dial' : 'pan'
    })
    this.svg.addEventListener('mousemove', (ev) => {
      if (!down) return
      const p = this.localPoint(ev)
      moved += Math.abs(p.x - down.x) + Math.abs(p.y - down.y)
      if (dragging === 'dial') {
        const deg = this.dialFromPointer(p.x, p.y)
        this.setAzimuth(deg)
        this.opts.callbacks.onAzimuthDial(deg)
      } else if (moved > CLICK_SLOP_PX) {
        this.view = panned(this.view, p.x - down.x, p.y - down.y)
        this.drawCandidate()
        down = p
      }
    })
    this.svg.addEventListener('mouseup', (ev) => {
      if (!down) return
      const wasDial = dragging === 'dial'
      const p = this.localPoint(ev)
      const stationary = moved <= CLICK_SLOP_PX
      down = null
      dragging = null
      if (wasDial) return
      if (stationary) {
        this.placeAt(p.x, p.y)
      } else {
        void this.refresh()
      }
    })
    this.svg.addEventListener('wheel', (ev) => {
      ev.preventDefault()
      const p = this.localPoint(ev)
      this.view = zoomed(this.view, ev.deltaY > 0 ? 1.25 : 0.8, p.x, p.y)
      this.drawCandidate()
      void this.refresh()
    })
  }
}
