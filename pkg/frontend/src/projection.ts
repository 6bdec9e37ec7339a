import type { Bbox } from './api'

// Local equirectangular projection: good enough for a city-scale planning
// view and keeps screen<->geo math trivially invertible.

const METERS_PER_DEG_LAT = 111_320

export interface MapView {
  centerLat: number
  centerLon: number
  metersPerPx: number
  width: number
  height: number
}

function metersPerDegLon(lat: number): number {
  return METERS_PER_DEG_LAT * Math.cos((lat * Math.PI) / 180)
}

export function toScreen(view: MapView, lat: number, lon: number): { x: number; y: number } {
  const east = (lon - view.centerLon) * metersPerDegLon(view.centerLat)
  const north = (lat - view.centerLat) * METERS_PER_DEG_LAT
  return {
    x: view.width / 2 + east / view.metersPerPx,
    y: view.height / 2 - north / view.metersPerPx,
  }
}

export function toGeo(view: MapView, x: number, y: number): { lat: number; lon: number } {
  const east = (x - view.width / 2) * view.metersPerPx
  const north = (view.height / 2 - y) * view.metersPerPx
  return {
    lat: view.centerLat + north / METERS_PER_DEG_LAT,
    lon: view.centerLon + east / metersPerDegLon(view.centerLat),
  }
}

export function viewBbox(view: MapView): Bbox {
  const a = toGeo(view, 0, view.height)
  const b = toGeo(view, view.width, 0)
  return { minLat: a.lat, minLon: a.lon, maxLat: b.lat, maxLon: b.lon }
}

export function panned(view: MapView, dxPx: number, dyPx: number): MapView {
  const moved = toGeo(view, view.width / 2 - dxPx, view.height / 2 - dyPx)
  return { ...view, centerLat: moved.lat, centerLon: moved.lon }
}

// Zoom about a screen anchor so the geo point under the cursor stays put.
// The new center is solved directly; panning afterwards would be off by a
// whisker because the lon scale follows the center latitude.
export function zoomed(view: MapView, factor: number, ax: number, ay: number): MapView {
  const anchor = toGeo(view, ax, ay)
  const mpp = view.metersPerPx * factor
  const centerLat = anchor.lat - ((view.height / 2 - ay) * mpp) / METERS_PER_DEG_LAT
  const centerLon = anchor.lon - ((ax - view.width / 2) * mpp) / metersPerDegLon(centerLat)
  return { ...view, metersPerPx: mpp, centerLat, centerLon }
}
