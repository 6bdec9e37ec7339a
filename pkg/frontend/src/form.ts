import type { CandidateDraft } from './types'

// Field names from the wire contract map onto the controls that edit them,
// so a 400 from the service lands next to the offending input.
const FIELD_TO_CONTROL: Record<string, string> = {
  lat: 'position',
  lon: 'position',
  azimuth_deg: 'azimuth',
  is_omni: 'omni',
  manufacturer: 'manufacturer',
  antenna_model: 'antenna',
  date: 'date',
  body: 'general',
}

function labeled(control: string, text: string, input: HTMLElement): HTMLElement {
  const row = document.createElement('label')
  row.className = `control control-${control}`
  const caption = document.createElement('span')
  caption.textContent = text
  const error = document.createElement('small')
  error.className = 'field-error'
  error.hidden = true
  row.append(caption, input, error)
  return row
}

export class CandidateForm {
  readonly root: HTMLElement
  private readonly azimuth = document.createElement('input')
  private readonly omni = document.createElement('input')
  private readonly manufacturer = document.createElement('input')
  private readonly antenna = document.createElement('input')
  private readonly date = document.createElement('input')
  private readonly position = document.createElement('output')
  private readonly general = document.createElement('p')
  private point: { lat: number; lon: number } | null = null

  constructor(
    private readonly hooks: {
      onAzimuthEdit?: (deg: number) => void
      onOmniToggle?: (omni: boolean) => void
    } = {},
  ) {
    this.azimuth.type = 'number'
    this.azimuth.min = '0'
    this.azimuth.max = '359.9'
    this.azimuth.step = '0.1'
    this.azimuth.value = '0'
    this.omni.type = 'checkbox'
    this.manufacturer.type = 'text'
    this.manufacturer.value = 'unknown'
    this.antenna.type = 'text'
    this.antenna.value = 'unknown'
    this.date.type = 'date'
    this.position.textContent = 'click the map'
    this.general.className = 'field-error general-error'
    this.general.hidden = true

    this.root = document.createElement('form')
    this.root.className = 'candidate-form'
    this.root.addEventListener('submit', (e) => e.preventDefault())
    this.root.append(
      labeled('position', 'Position', this.position),
      labeled('azimuth', 'Azimuth (deg)', this.azimuth),
      labeled('omni', 'Omnidirectional', this.omni),
      labeled('manufacturer', 'Manufacturer', this.manufacturer),
      labeled('antenna', 'Antenna model', this.antenna),
      labeled('date', 'KPI date', this.date),
      this.general,
    )

    this.omni.addEventListener('change', () => {
      this.azimuth.disabled = this.omni.checked
      this.hooks.onOmniToggle?.(this.omni.checked)
    })
    this.azimuth.addEventListener('input', () => {
      const deg = Number(this.azimuth.value)
      if (Number.isFinite(deg)) this.hooks.onAzimuthEdit?.(deg)
    })
  }

  setPoint(lat: number, lon: number): void {
    this.point = { lat, lon }
    this.position.textContent = `${lat.toFixed(5)}, ${lon.toFixed(5)}`
  }

  setAzimuth(deg: number): void {
    this.azimuth.value = (((deg % 360) + 360) % 360).toFixed(1)
  }

  draft(): CandidateDraft | null {
    if (!this.point) return null
    return {
      lat: this.point.lat,
      lon: this.point.lon,
      azimuthDeg: this.omni.checked ? null : Number(this.azimuth.value),
      isOmni: this.omni.checked,
      manufacturer: this.manufacturer.value.trim() || 'unknown',
      antennaModel: this.antenna.value.trim() || 'unknown',
      date: this.date.value || null,
    }
  }

  clearErrors(): void {
    this.general.hidden = true
    for (const el of this.root.querySelectorAll<HTMLElement>('.field-error')) {
      el.hidden = true
      el.textContent = ''
    }
  }

  showFieldErrors(fields: Record<string, string>): void {
    this.clearErrors()
    for (const [field, message] of Object.entries(fields)) {
      const control = FIELD_TO_CONTROL[field]
      const slot =
        control === 'general' || control === undefined
          ? this.general
          : this.root.querySelector<HTMLElement>(`.control-${control} .field-error`)
      if (slot) {
        slot.textContent = slot.textContent ? `${slot.textContent}; ${message}` : message
        slot.hidden = false
      }
    }
  }

  showGeneralError(message: string): void {
    this.general.textContent = message
    this.general.hidden = false
  }
}
