"""Step-test identification of the 2x2 inverter-to-PCC model.

Pipeline: hold the simulator at a settled operating point, step one input
channel, record baseline-subtracted PCC responses, difference the step
responses into impulse (Markov) sequences, and realize a state-space model
from the block-Hankel matrix of those sequences (eigensystem realization:
SVD truncation of the Hankel matrix, A from the shifted factorization).

Recorded outputs are PCC deviations; injection lowers import, so raw
records carry the opposite sign of the model the controller wants. The
full pipeline (:func:`identify`) negates them so the returned model maps
injection to import reduction, matching the demand-estimate convention.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .lti import LtiModel, ModelError, dc_gain
from .plant import InverterModel, Microgrid, step_plant

log = logging.getLogger(__name__)

CHANNEL_P = "p"
CHANNEL_Q = "q"

SV_TOLERANCE = 1e-8
ORDER_MAX = 8
BASELINE_SAMPLES = 10
SETTLE_TOL = 1e-9


class IdentificationError(RuntimeError):
    """Step test or realization could not proceed."""


@dataclass
class StepRecord:
    """One step test: which input moved, by how much, and what the PCC did.

    Outputs are deviations from the pre-step baseline (mean of the last
    BASELINE_SAMPLES settled samples), so demand offsets are already
    removed.
    """

    channel: str
    amplitude: float
    u: np.ndarray
    y_p: np.ndarray
    y_q: np.ndarray
    ts: float

    def __post_init__(self):
        if self.channel not in (CHANNEL_P, CHANNEL_Q):
            raise ValueError(f"channel must be 'p' or 'q', got {self.channel!r}")
        n = len(self.u)
        if n < 50:
            raise ValueError(f"step record needs >= 50 samples, got {n}")
        if len(self.y_p) != n or len(self.y_q) != n:
            raise ValueError("u, y_p, y_q must have equal length")


def run_step_test(grid: Microgrid, channel: str, amplitude: float,
                  n_samples: int = 150, settle_steps: int = 200) -> StepRecord:
    """Drive one inverter channel with a step and record PCC deviations.

    The grid must sit at constant demand; the routine first coasts with
    zero command and checks the PCC has actually settled. The test is run
    through the plant directly (no noise injection, scenario machinery or
    networking), mirroring a dedicated identification session.
    """
    if abs(amplitude) > grid.inverter.p_max:
        raise IdentificationError("step amplitude exceeds inverter rating")
    model, inverter = grid.model, grid.inverter
    state = grid.state
    dem_p, dem_q = grid.demand_at(state.t)

    prev = None
    for _ in range(settle_steps):
        state = step_plant(state, 0.0, 0.0, dem_p, dem_q, 0.0, model, inverter)
        if prev is not None and abs(state.p_pcc - prev[0]) < SETTLE_TOL \
                and abs(state.q_pcc - prev[1]) < SETTLE_TOL:
            break
        prev = (state.p_pcc, state.q_pcc)
    else:
        raise IdentificationError("simulator did not settle before the step")

    base_p = np.empty(BASELINE_SAMPLES)
    base_q = np.empty(BASELINE_SAMPLES)
    for i in range(BASELINE_SAMPLES):
        state = step_plant(state, 0.0, 0.0, dem_p, dem_q, 0.0, model, inverter)
        base_p[i], base_q[i] = state.p_pcc, state.q_pcc
    baseline = (base_p.mean(), base_q.mean())

    u = np.zeros(n_samples + BASELINE_SAMPLES)
    y_p = np.concatenate([base_p - baseline[0], np.empty(n_samples)])
    y_q = np.concatenate([base_q - baseline[1], np.empty(n_samples)])
    cmd = (amplitude, 0.0) if channel == CHANNEL_P else (0.0, amplitude)
    for i in range(n_samples):
        state = step_plant(state, cmd[0], cmd[1], dem_p, dem_q, 0.0,
                           model, inverter)
        u[BASELINE_SAMPLES + i] = amplitude
        y_p[BASELINE_SAMPLES + i] = state.p_pcc - baseline[0]
        y_q[BASELINE_SAMPLES + i] = state.q_pcc - baseline[1]
    return StepRecord(channel, amplitude, u, y_p, y_q, model.ts)


def step_to_impulse(y: np.ndarray, amplitude: float) -> np.ndarray:
    """First-difference a step response into a unit impulse response.

    h(k) = (y(k) - y(k-1)) / amplitude with y(-1) = 0, so a cumulative sum
    of h times the amplitude reproduces the step response exactly.
    """
    if amplitude == 0:
        raise ValueError("cannot normalize by zero step amplitude")
    y = np.asarray(y, dtype=float)
    h = np.empty_like(y)
    h[0] = y[0]
    h[1:] = y[1:] - y[:-1]
    return h / amplitude


def record_to_impulses(record: StepRecord) -> np.ndarray:
    """Impulse responses of both outputs to the record's stepped input,
    with the pre-step baseline samples stripped. Shape (N, 2)."""
    start = int(np.argmax(record.u != 0.0)) if np.any(record.u != 0.0) else 0
    y_p = record.y_p[start:]
    y_q = record.y_q[start:]
    return np.column_stack([step_to_impulse(y_p, record.amplitude),
                            step_to_impulse(y_q, record.amplitude)])


def era_realize(impulses: np.ndarray, order_max: int = ORDER_MAX,
                sv_tolerance: float = SV_TOLERANCE,
                ts: float = 0.1) -> LtiModel:
    """Realize a state-space model from MIMO impulse data.

    ``impulses`` has shape (N, n_outputs, n_inputs) with element k the
    k-th Markov parameter (h(0) = D). Builds the block-Hankel matrix of
    h(1..), truncates its SVD at relative singular value ``sv_tolerance``
    (never above ``order_max`` states), and reads A from the row-shifted
    Hankel matrix, B and C from the factor slices.

    A realization with eigenvalues on or outside the unit circle gets
    them reflected inside and the result is flagged ``stabilized``.
    """
    h = np.asarray(impulses, dtype=float)
    if h.ndim == 1:
        h = h[:, np.newaxis, np.newaxis]
    elif h.ndim == 2:
        h = h[:, :, np.newaxis]
    n_samples, p, m = h.shape
    if n_samples - 1 < 2 * order_max + 2:
        raise IdentificationError(
            f"need >= {2 * order_max + 2} Markov parameters beyond h(0), "
            f"got {n_samples - 1}")

    rows = min((n_samples - 1) // 2, 50)
    cols = n_samples - 1 - rows
    h0 = np.empty((rows * p, cols * m))
    h1 = np.empty((rows * p, cols * m))
    for i in range(rows):
        for j in range(cols):
            h0[i * p:(i + 1) * p, j * m:(j + 1) * m] = h[i + j + 1]
            h1[i * p:(i + 1) * p, j * m:(j + 1) * m] = h[i + j + 2]

    u_svd, s, vt = np.linalg.svd(h0, full_matrices=False)
    if s.size == 0 or s[0] <= 0.0:
        raise IdentificationError("impulse data has rank zero")
    order = int(np.sum(s / s[0] > sv_tolerance))
    if order == 0:
        raise IdentificationError("impulse data has rank zero")
    order = min(order, order_max)

    sqrt_s = np.sqrt(s[:order])
    u_r = u_svd[:, :order]
    vt_r = vt[:order, :]
    a = (u_r.T @ h1 @ vt_r.T) / np.outer(sqrt_s, sqrt_s)
    b = (sqrt_s[:, None] * vt_r)[:, :m]
    c = (u_r * sqrt_s)[:p, :]
    d = h[0]

    stabilized = False
    eigvals, eigvecs = np.linalg.eig(a)
    mags = np.abs(eigvals)
    if np.any(mags >= 1.0):
        stabilized = True
        reflected = eigvals.copy()
        for i, (lam, mag) in enumerate(zip(eigvals, mags)):
            if mag >= 1.0:
                lam = lam / mag**2 if mag > 1.0 else lam  # reflect 1/conj
                mag2 = abs(lam)
                if mag2 >= 1.0 - 1e-9:
                    lam = lam * (1.0 - 1e-9) / mag2
                reflected[i] = lam
        a = np.real(eigvecs @ np.diag(reflected) @ np.linalg.inv(eigvecs))
        log.warning("realization unstable; reflected %d eigenvalue(s)",
                    int(np.sum(mags >= 1.0)))

    return LtiModel(a, b, c, d, ts=ts, stabilized=stabilized)


def assemble_impulse_matrix(rec_p: StepRecord, rec_q: StepRecord,
                            negate: bool = False) -> np.ndarray:
    """Stack two single-channel step records into (N, 2, 2) Markov data."""
    if rec_p.channel != CHANNEL_P or rec_q.channel != CHANNEL_Q:
        raise ValueError("expected one P-channel and one Q-channel record")
    col_p = record_to_impulses(rec_p)
    col_q = record_to_impulses(rec_q)
    n = min(col_p.shape[0], col_q.shape[0])
    h = np.stack([col_p[:n], col_q[:n]], axis=2)
    return -h if negate else h


def identify(grid: Microgrid, amplitude: float = 50.0,
             n_samples: int = 150, order_max: int = ORDER_MAX,
             sv_tolerance: float = SV_TOLERANCE) -> LtiModel:
    """Full identification session against a simulator.

    Runs one step test per input channel at an effectively unconstrained
    ramp (the identification campaign is free to exercise the inverter's
    native step capability), negates the recorded PCC deviations into the
    injection-to-import-reduction convention, and realizes the model.
    """
    ident_grid = Microgrid(
        model=grid.model,
        inverter=InverterModel(p_max=grid.inverter.p_max,
                               q_max=grid.inverter.q_max,
                               ramp_limit=grid.inverter.p_max / grid.ts),
        base_demand=grid.base_demand, base_demand_q=grid.base_demand_q,
    )
    rec_p = run_step_test(ident_grid, CHANNEL_P, amplitude, n_samples)
    rec_q = run_step_test(ident_grid, CHANNEL_Q, amplitude, n_samples)
    h = assemble_impulse_matrix(rec_p, rec_q, negate=True)
    return era_realize(h, order_max, sv_tolerance, ts=grid.ts)


def validate_model(model: LtiModel, holdout: StepRecord) -> dict[str, float]:
    """Fit report of a model against a held-out step record.

    Simulates the model on the holdout input (negated back to the PCC
    deviation the record stores) and returns the normalized RMS error per
    output channel plus a pass flag at the 2% noiseless threshold.
    """
    if len(holdout.u) < 10:
        raise ValueError("holdout record too short to validate against")
    u = np.zeros((len(holdout.u), 2))
    col = 0 if holdout.channel == CHANNEL_P else 1
    u[:, col] = holdout.u
    pred = -model.simulate(u)
    report = {}
    for name, y, yhat in (("p", holdout.y_p, pred[:, 0]),
                          ("q", holdout.y_q, pred[:, 1])):
        ref_rms = float(np.sqrt(np.mean(np.square(y))))
        err_rms = float(np.sqrt(np.mean(np.square(y - yhat))))
        report[f"nrmse_{name}"] = err_rms / ref_rms if ref_rms > 0 else 0.0
    report["pass"] = float(max(report["nrmse_p"], report["nrmse_q"]) < 0.02)
    return report


def random_stable_model(rng: np.random.Generator, order: int,
                        ts: float = 0.1) -> LtiModel:
    """Random stable 2x2 system for round-trip testing.

    Poles drawn as real values or complex pairs with magnitude <= 0.95,
    assembled block-diagonally and spun through a random orthogonal
    similarity so B and C exercise all states.
    """
    blocks = []
    n = 0
    while n < order:
        if order - n >= 2 and rng.random() < 0.5:
            mag = rng.uniform(0.1, 0.95)
            ang = rng.uniform(0.1, np.pi - 0.1)
            re, im = mag * np.cos(ang), mag * np.sin(ang)
            blocks.append(np.array([[re, im], [-im, re]]))
            n += 2
        else:
            blocks.append(np.array([[rng.uniform(-0.95, 0.95)]]))
            n += 1
    a = np.zeros((n, n))
    pos = 0
    for blk in blocks:
        w = blk.shape[0]
        a[pos:pos + w, pos:pos + w] = blk
        pos += w
    q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    a = q @ a @ q.T
    b = rng.standard_normal((n, 2))
    c = rng.standard_normal((2, n))
    d = rng.standard_normal((2, 2)) * (rng.random() < 0.5)
    return LtiModel(a, b, c, d, ts=ts)


def model_dc_gain(model: LtiModel) -> np.ndarray:
    """DC gain with a stability guard, as the identification consumers use it."""
    if not model.is_stable():
        raise ModelError("dc gain undefined: model is not stable")
    return dc_gain(model)
