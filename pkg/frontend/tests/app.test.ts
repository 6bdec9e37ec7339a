import { beforeEach, describe, expect, it, vi } from 'vitest'
import type { Api } from '../src/api'
import { ApiError } from '../src/api'
import { createApp } from '../src/app'
import type { WhatIfResponse } from '../src/types'
import { deferred, sampleResponse, sectorCell, settle } from './helpers'

function mockApi(over: Partial<Api> = {}): Api {
  return {
    health: vi.fn().mockResolvedValue({ status: 'ok', model_version: 'v1', n_cells: 3 }),
    cells: vi.fn().mockResolvedValue({
      cells: [
        sectorCell('A-1', 51.515, -0.12, 0),
        sectorCell('A-2', 51.5152, -0.1198, 120),
      ],
      truncated: false,
    }),
    predict: vi.fn().mockResolvedValue(sampleResponse()),
    ...over,
  }
}

let host: HTMLElement

beforeEach(() => {
  host = document.createElement('div')
  document.body.replaceChildren(host)
})

describe('placing a candidate', () => {
  it('issues exactly one predict call and renders KPIs, badge state and history', async () => {
    const api = mockApi({
      predict: vi.fn().mockResolvedValue(sampleResponse({ low_confidence: true })),
    })
    const app = createApp(host, api)
    await settle()

    app.map.placeAt(360, 260)
    await settle()

    expect(api.predict).toHaveBeenCalledTimes(1)

    const kpis = [...host.querySelectorAll<HTMLElement>('.kpi')].map((el) => el.textContent)
    expect(kpis).toEqual(['42.50 %', '11.25 Mbps', '38.75 Mbps'])
    expect(host.querySelector<HTMLElement>('.low-confidence-badge')!.hidden).toBe(false)
    expect(host.querySelectorAll('.trial-list li')).toHaveLength(1)
  })

  it('hides the badge for confident predictions', async () => {
    const app = createApp(host, mockApi())
    await settle()
    app.map.placeAt(360, 260)
    await settle()
    expect(host.querySelector<HTMLElement>('.low-confidence-badge')!.hidden).toBe(true)
  })

  it('highlights exactly the neighbors named in the response', async () => {
    const app = createApp(host, mockApi())
    await settle()
    app.map.placeAt(360, 260)
    await settle()
    const hit = [...host.querySelectorAll<SVGElement>('.neighbor-hit')]
    expect(hit.map((el) => el.dataset.cellId).sort()).toEqual(['A-1', 'A-2'])
  })

  it('discards the stale reply when a newer placement overtakes it', async () => {
    const slow = deferred<WhatIfResponse>()
    const fast = deferred<WhatIfResponse>()
    const predict = vi
      .fn()
      .mockReturnValueOnce(slow.promise)
      .mockReturnValueOnce(fast.promise)
    const app = createApp(host, mockApi({ predict }))
    await settle()

    app.map.placeAt(100, 100)
    app.map.placeAt(300, 200)
    fast.resolve(sampleResponse({ prb_util_pct: 77.77 }))
    await settle()
    slow.resolve(sampleResponse({ prb_util_pct: 11.11 }))
    await settle()

    expect(predict).toHaveBeenCalledTimes(2)
    // The newer trial owns the panel and the single history entry.
    expect(host.querySelector('.kpi-prb_util_pct')!.textContent).toBe('77.77 %')
    expect(host.querySelectorAll('.trial-list li')).toHaveLength(1)
    expect(app.history.all()[0].response.prb_util_pct).toBe(77.77)
  })

  it('renders validation errors inline at the offending control', async () => {
    const predict = vi.fn().mockRejectedValue(
      new ApiError(400, {
        code: 'validation_error',
        message: 'invalid request',
        fields: { azimuth_deg: 'must be a number in [0, 360)' },
      }),
    )
    const app = createApp(host, mockApi({ predict }))
    await settle()
    app.map.placeAt(360, 260)
    await settle()

    const slot = host.querySelector<HTMLElement>('.control-azimuth .field-error')!
    expect(slot.hidden).toBe(false)
    expect(slot.textContent).toMatch('[0, 360)')
    expect(host.querySelectorAll('.trial-list li')).toHaveLength(0)
  })

  it('shows a 422 as a general message when no field is to blame', async () => {
    const predict = vi.fn().mockRejectedValue(
      new ApiError(422, { code: 'no_4g_cells', message: 'no 4G cells near the candidate' }),
    )
    const app = createApp(host, mockApi({ predict }))
    await settle()
    app.map.placeAt(10, 10)
    await settle()
    const general = host.querySelector<HTMLElement>('.general-error')!
    expect(general.hidden).toBe(false)
    expect(general.textContent).toMatch('no 4G cells')
  })
})

describe('iterating on a placement', () => {
  it('the predict button re-runs the current draft as a new trial', async () => {
    const api = mockApi()
    const app = createApp(host, api)
    await settle()
    app.map.placeAt(360, 260)
    await settle()

    app.form.setAzimuth(200)
    host.querySelector<HTMLButtonElement>('.predict-again')!.click()
    await settle()

    expect(api.predict).toHaveBeenCalledTimes(2)
    expect(app.history.size).toBe(2)
    const second = JSON.parse(JSON.stringify((api.predict as ReturnType<typeof vi.fn>).mock.calls[1][0]))
    expect(second.azimuth_deg).toBe(200)
  })

  it('selecting two history entries builds the comparison table with best cells marked', async () => {
    const predict = vi
      .fn()
      .mockResolvedValueOnce(sampleResponse({ prb_util_pct: 30, dl_thr_mbps: 50 }))
      .mockResolvedValueOnce(sampleResponse({ prb_util_pct: 60, dl_thr_mbps: 50 }))
    const app = createApp(host, mockApi({ predict }))
    await settle()
    app.map.placeAt(360, 260)
    await settle()
    host.querySelector<HTMLButtonElement>('.predict-again')!.click()
    await settle()

    for (const box of host.querySelectorAll<HTMLInputElement>('.trial-list input')) {
      box.checked = true
      box.dispatchEvent(new Event('change'))
    }

    const table = host.querySelector<HTMLTableElement>('.comparison')!
    expect(table.hidden).toBe(false)
    const rows = [...table.tBodies[0].rows]
    expect(rows).toHaveLength(3)
    const prbRow = rows[0]
    expect(prbRow.cells[1].classList.contains('best')).toBe(true)
    expect(prbRow.cells[2].classList.contains('best')).toBe(false)
    // dl throughput ties: both marked.
    const dlRow = rows[2]
    expect(dlRow.cells[1].classList.contains('best')).toBe(true)
    expect(dlRow.cells[2].classList.contains('best')).toBe(true)
  })

  it('keeps the comparison disabled with nothing selected', async () => {
    const app = createApp(host, mockApi())
    await settle()
    app.map.placeAt(360, 260)
    await settle()
    expect(host.querySelector<HTMLTableElement>('.comparison')!.hidden).toBe(true)
    expect(host.querySelector<HTMLElement>('.comparison-empty')!.hidden).toBe(false)
  })
})
