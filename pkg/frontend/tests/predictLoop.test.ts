import { describe, expect, it, vi } from 'vitest'
import { ApiError } from '../src/api'
import { draftToRequest, PredictLoop } from '../src/predictLoop'
import { SessionHistory } from '../src/state'
import type { CandidateDraft, WhatIfResponse } from '../src/types'
import { deferred, sampleResponse } from './helpers'

const draft = (over: Partial<CandidateDraft> = {}): CandidateDraft => ({
  lat: 51.51,
  lon: -0.12,
  azimuthDeg: 120,
  isOmni: false,
  manufacturer: 'nokys',
  antennaModel: 'p-11',
  date: null,
  ...over,
})

describe('draftToRequest', () => {
  it('maps a sectored draft onto the wire contract', () => {
    expect(draftToRequest(draft())).toEqual({
      lat: 51.51,
      lon: -0.12,
      azimuth_deg: 120,
      is_omni: false,
      manufacturer: 'nokys',
      antenna_model: 'p-11',
    })
  })

  it('omits azimuth for omni drafts and date when unset', () => {
    const req = draftToRequest(draft({ isOmni: true, azimuthDeg: null }))
    expect('azimuth_deg' in req).toBe(false)
    expect('date' in req).toBe(false)
  })

  it('passes an explicit date through', () => {
    expect(draftToRequest(draft({ date: '2022-11-05' })).date).toBe('2022-11-05')
  })
})

describe('PredictLoop', () => {
  it('issues exactly one request per placement and appends one history entry', async () => {
    const send = vi.fn().mockResolvedValue(sampleResponse())
    const history = new SessionHistory()
    const loop = new PredictLoop(send, history)

    const outcome = await loop.place(draft())

    expect(send).toHaveBeenCalledTimes(1)
    expect(outcome.kind).toBe('ok')
    expect(history.size).toBe(1)
    expect(history.all()[0].response.prb_util_pct).toBe(42.5)
  })

  it('discards a stale response that arrives after a newer placement', async () => {
    const first = deferred<WhatIfResponse>()
    const second = deferred<WhatIfResponse>()
    const send = vi
      .fn()
      .mockReturnValueOnce(first.promise)
      .mockReturnValueOnce(second.promise)
    const history = new SessionHistory()
    const loop = new PredictLoop(send, history)

    const p1 = loop.place(draft({ azimuthDeg: 10 }))
    const p2 = loop.place(draft({ azimuthDeg: 200 }))

    // Replies arrive out of order: the newer placement resolves first.
    second.resolve(sampleResponse({ prb_util_pct: 55 }))
    expect((await p2).kind).toBe('ok')
    first.resolve(sampleResponse({ prb_util_pct: 11 }))
    expect((await p1).kind).toBe('stale')

    expect(history.size).toBe(1)
    expect(history.all()[0].response.prb_util_pct).toBe(55)
    expect(history.all()[0].draft.azimuthDeg).toBe(200)
  })

  it('returns the service error without touching history', async () => {
    const send = vi
      .fn()
      .mockRejectedValue(new ApiError(400, { code: 'validation_error', message: 'bad', fields: { lat: 'out of range' } }))
    const history = new SessionHistory()
    const loop = new PredictLoop(send, history)

    const outcome = await loop.place(draft())

    expect(outcome.kind).toBe('error')
    if (outcome.kind === 'error') {
      expect(outcome.error.body.fields).toEqual({ lat: 'out of range' })
    }
    expect(history.size).toBe(0)
  })

  it('suppresses errors from superseded placements', async () => {
    const first = deferred<WhatIfResponse>()
    const send = vi
      .fn()
      .mockReturnValueOnce(first.promise)
      .mockResolvedValueOnce(sampleResponse())
    const history = new SessionHistory()
    const loop = new PredictLoop(send, history)

    const p1 = loop.place(draft())
    await loop.place(draft({ azimuthDeg: 45 }))
    first.reject(new ApiError(500, { code: 'internal', message: 'boom' }))

    expect((await p1).kind).toBe('stale')
    expect(history.size).toBe(1)
  })

  it('wraps transport failures as failed outcomes', async () => {
    const send = vi.fn().mockRejectedValue(new TypeError('fetch refused'))
    const loop = new PredictLoop(send, new SessionHistory())
    const outcome = await loop.place(draft())
    expect(outcome.kind).toBe('failed')
  })
})
