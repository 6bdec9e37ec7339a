import { toScreen, type MapView } from './projection'
import type { CellDescriptor } from './types'

const SVG_NS = 'http://www.w3.org/2000/svg'
const SECTOR_BEAMWIDTH_DEG = 55
const SECTOR_RADIUS_PX = 14
const OMNI_RADIUS_PX = 5

export function svgEl<K extends keyof SVGElementTagNameMap>(
  name: K,
  attrs: Record<string, string> = {},
): SVGElementTagNameMap[K] {
  const el = document.createElementNS(SVG_NS, name)
  for (const [k, v] of Object.entries(attrs)) el.setAttribute(k, v)
  return el
}

// Azimuth is degrees clockwise from true North; screen North is -y.
export function bearingPoint(
  cx: number,
  cy: number,
  azimuthDeg: number,
  r: number,
): { x: number; y: number } {
  const rad = (azimuthDeg * Math.PI) / 180
  return { x: cx + Math.sin(rad) * r, y: cy - Math.cos(rad) * r }
}

export function wedgePath(cx: number, cy: number, azimuthDeg: number, r = SECTOR_RADIUS_PX): string {
  const a = bearingPoint(cx, cy, azimuthDeg - SECTOR_BEAMWIDTH_DEG / 2, r)
  const b = bearingPoint(cx, cy, azimuthDeg + SECTOR_BEAMWIDTH_DEG / 2, r)
  return (
    `M ${cx.toFixed(2)} ${cy.toFixed(2)} ` +
    `L ${a.x.toFixed(2)} ${a.y.toFixed(2)} ` +
    `A ${r} ${r} 0 0 1 ${b.x.toFixed(2)} ${b.y.toFixed(2)} Z`
  )
}

export function renderCellMarkers(
  layer: SVGGElement,
  cells: readonly CellDescriptor[],
  view: MapView,
): void {
  layer.replaceChildren()
  for (const cell of cells) {
    const { x, y } = toScreen(view, cell.lat, cell.lon)
    const tech = cell.technology === '5G' ? 'nr' : 'lte'
    let marker: SVGElement
    if (cell.is_omni || cell.azimuth_deg === null) {
      marker = svgEl('circle', {
        cx: x.toFixed(2),
        cy: y.toFixed(2),
        r: String(OMNI_RADIUS_PX),
        class: `cell omni ${tech}`,
      })
    } else {
      marker = svgEl('path', {
        d: wedgePath(x, y, cell.azimuth_deg),
        class: `cell sector ${tech}`,
      })
    }
    marker.dataset.cellId = cell.cell_id
    const title = svgEl('title')
    title.textContent = `${cell.cell_id} (${cell.technology}, ${cell.manufacturer})`
    marker.appendChild(title)
    layer.appendChild(marker)
  }
}

export function highlightNeighbors(layer: SVGGElement, cellIds: ReadonlySet<string>): void {
  for (const el of layer.querySelectorAll<SVGElement>('.cell')) {
    el.classList.toggle('neighbor-hit', cellIds.has(el.dataset.cellId ?? ''))
  }
}
