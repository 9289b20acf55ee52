"""Discrete-time state-space models shared by the plant, the identifier and
the controller's demand estimator.

Convention: x(k+1) = A x(k) + B u(k), y(k) = C x(k) + D u(k), sample time
``ts`` seconds. The testbed uses 2-input/2-output models mapping inverter
injection (P_inv, Q_inv) to the resulting reduction of grid import at the
point of common coupling.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class ModelError(ValueError):
    """Raised for malformed or unusable state-space data."""


@dataclass
class LtiModel:
    """Discrete-time LTI state-space model.

    Attributes:
        a, b, c, d: state-space matrices (numpy, float64).
        ts: sample time in seconds.
        stabilized: True when an identification step had to reflect
            unstable eigenvalues back inside the unit circle.
    """

    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    d: np.ndarray
    ts: float = 0.1
    stabilized: bool = field(default=False, compare=False)

    def __post_init__(self):
        self.a = np.atleast_2d(np.asarray(self.a, dtype=float))
        self.b = np.atleast_2d(np.asarray(self.b, dtype=float))
        self.c = np.atleast_2d(np.asarray(self.c, dtype=float))
        self.d = np.atleast_2d(np.asarray(self.d, dtype=float))
        n = self.a.shape[0]
        if self.a.shape != (n, n):
            raise ModelError(f"A must be square, got {self.a.shape}")
        if self.b.shape[0] != n:
            raise ModelError(f"B has {self.b.shape[0]} rows, expected {n}")
        if self.c.shape[1] != n:
            raise ModelError(f"C has {self.c.shape[1]} cols, expected {n}")
        if self.d.shape != (self.c.shape[0], self.b.shape[1]):
            raise ModelError(f"D shape {self.d.shape} inconsistent with B/C")
        if self.ts <= 0:
            raise ModelError("sample time must be positive")

    @property
    def n_states(self) -> int:
        return self.a.shape[0]

    @property
    def n_inputs(self) -> int:
        return self.b.shape[1]

    @property
    def n_outputs(self) -> int:
        return self.c.shape[0]

    def is_stable(self, margin: float = 0.0) -> bool:
        if self.n_states == 0:
            return True
        return bool(np.max(np.abs(np.linalg.eigvals(self.a))) < 1.0 - margin)

    def zero_state(self) -> np.ndarray:
        return np.zeros(self.n_states)

    def step(self, x: np.ndarray, u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Advance one sample; returns (x_next, y)."""
        u = np.asarray(u, dtype=float)
        y = self.c @ x + self.d @ u
        x_next = self.a @ x + self.b @ u
        return x_next, y

    def simulate(self, u: np.ndarray, x0: np.ndarray | None = None) -> np.ndarray:
        """Run a full input sequence ``u`` of shape (N, n_inputs).

        Returns outputs of shape (N, n_outputs).
        """
        u = np.atleast_2d(np.asarray(u, dtype=float))
        if u.shape[1] != self.n_inputs:
            raise ModelError(f"input width {u.shape[1]}, expected {self.n_inputs}")
        x = self.zero_state() if x0 is None else np.asarray(x0, dtype=float)
        y = np.empty((u.shape[0], self.n_outputs))
        for k in range(u.shape[0]):
            x, y[k] = self.step(x, u[k])
        return y

    def step_response(self, n_samples: int, input_index: int = 0,
                      amplitude: float = 1.0) -> np.ndarray:
        u = np.zeros((n_samples, self.n_inputs))
        u[:, input_index] = amplitude
        return self.simulate(u)

    def impulse_response(self, n_samples: int) -> np.ndarray:
        """Markov parameters h(0..N-1) as an (N, n_outputs, n_inputs) array."""
        h = np.empty((n_samples, self.n_outputs, self.n_inputs))
        for j in range(self.n_inputs):
            u = np.zeros((n_samples, self.n_inputs))
            u[0, j] = 1.0
            h[:, :, j] = self.simulate(u)
        return h


def dc_gain(model: LtiModel) -> np.ndarray:
    """Steady-state gain C (I - A)^-1 B + D.

    Raises ModelError when I - A is singular (pole at z = 1).
    """
    if model.n_states == 0:
        return model.d.copy()
    eye = np.eye(model.n_states)
    try:
        core = np.linalg.solve(eye - model.a, model.b)
    except np.linalg.LinAlgError as exc:
        raise ModelError("I - A singular; model has a pole at z = 1") from exc
    return model.c @ core + model.d


def default_plant_model(ts: float = 0.1) -> LtiModel:
    """Construct the built-in 2x2 inverter-to-PCC coupling model.

    Each input feeds a one-step delay followed by a unity-gain two-pole
    low-pass (poles 0.7 and 0.3); outputs mix the two filtered channels
    through the static gain matrix [[1, 0.1], [0.1, 1]]. Diagonal-dominant
    with light cross-coupling, so decoupling is meaningful and
    identification is nontrivial (6 states, first response 2 steps after
    the input).
    """
    p1, p2 = 0.7, 0.3
    k0 = (1.0 - p1) * (1.0 - p2)
    gains = np.array([[1.0, 0.1], [0.1, 1.0]])

    # Per input channel: states (f1, f2, z) where z is the input delay
    # register and (f1, f2) the controllable-canonical filter states.
    a_chan = np.array([
        [p1 + p2, -p1 * p2, 1.0],
        [1.0, 0.0, 0.0],
        [0.0, 0.0, 0.0],
    ])
    b_chan = np.array([[0.0], [0.0], [1.0]])
    c_chan = np.array([[k0, 0.0, 0.0]])

    a = np.zeros((6, 6))
    b = np.zeros((6, 2))
    c = np.zeros((2, 6))
    for j in range(2):
        sl = slice(3 * j, 3 * j + 3)
        a[sl, sl] = a_chan
        b[sl, j:j + 1] = b_chan
        for i in range(2):
            c[i, sl] = gains[i, j] * c_chan[0]
    d = np.zeros((2, 2))
    return LtiModel(a, b, c, d, ts=ts)


def save_model(model: LtiModel, path: str) -> None:
    """Write a model to the plain-text exchange format.

    Layout: a comment header, one line ``n_states n_inputs n_outputs ts``,
    then the A, B, C, D matrices row-major, one matrix row per line.
    """
    with open(path, "w") as fh:
        fh.write("# microhil lti model: n_states n_inputs n_outputs ts; then A B C D row-major\n")
        fh.write(f"{model.n_states} {model.n_inputs} {model.n_outputs} {model.ts!r}\n")
        for mat in (model.a, model.b, model.c, model.d):
            for row in np.atleast_2d(mat):
                fh.write(" ".join(repr(float(v)) for v in row) + "\n")


def load_model(path: str) -> LtiModel:
    """Read a model written by :func:`save_model`."""
    with open(path) as fh:
        lines = [ln.strip() for ln in fh if ln.strip() and not ln.startswith("#")]
    if not lines:
        raise ModelError(f"{path}: empty model file")
    head = lines[0].split()
    if len(head) != 4:
        raise ModelError(f"{path}: bad dimensions header {lines[0]!r}")
    n, m, p = int(head[0]), int(head[1]), int(head[2])
    ts = float(head[3])
    rows_needed = n + n + p + p
    body = lines[1:]
    if len(body) != rows_needed:
        raise ModelError(f"{path}: expected {rows_needed} matrix rows, got {len(body)}")
    vals = [np.array([float(v) for v in ln.split()]) for ln in body]

    def take(rows: int, cols: int, offset: int) -> np.ndarray:
        out = np.zeros((rows, cols))
        for i in range(rows):
            if vals[offset + i].size != cols:
                raise ModelError(f"{path}: matrix row {offset + i + 2} has "
                                 f"{vals[offset + i].size} values, expected {cols}")
            out[i] = vals[offset + i]
        return out

    a = take(n, n, 0)
    b = take(n, m, n)
    c = take(p, n, 2 * n)
    d = take(p, m, 2 * n + p)
    return LtiModel(a, b, c, d, ts=ts)
