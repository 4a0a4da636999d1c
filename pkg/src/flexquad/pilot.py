"""Delayed human-operator model for the outer reference loop.

The operator acts like a PI element with reaction delay,

    G(s) = K_p (T_p s + 1) / s * exp(-tau * s),

realized as a single integrator state: A_h = 0, B_h = 1, C_h = K_p,
D_h = K_p T_p.  Its input is the delayed altitude error and its output
replaces the altitude entry of the reference vector.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError

# altitude is tracked-output channel 2 and augmented-state index 2
ALTITUDE_CHANNEL = 2
ALTITUDE_STATE_INDEX = 2


@dataclass(frozen=True)
class OperatorModel:
    gain: float           # K_p
    lead: float           # T_p, s
    delay: float          # tau, s
    channel: int = ALTITUDE_CHANNEL
    state_index: int = ALTITUDE_STATE_INDEX

    @property
    def a_h(self) -> float:
        return 0.0

    @property
    def b_h(self) -> float:
        return 1.0

    @property
    def c_h(self) -> float:
        return self.gain

    @property
    def d_h(self) -> float:
        return self.gain * self.lead

    def output_embedding(self, n_outputs: int = 4) -> np.ndarray:
        """Column vector placing the scalar output on the tracked channel."""
        c = np.zeros((n_outputs, 1))
        c[self.channel, 0] = 1.0
        return c

    def state_selector(self, n_states: int = 16) -> np.ndarray:
        """Row vector picking the fed-back plant state."""
        e = np.zeros((1, n_states))
        e[0, self.state_index] = 1.0
        return e

    def frequency_response(self, omega) -> np.ndarray:
        """Realization response C_h/(i w) B_h e^(-i w tau) + D_h e^(-i w tau)."""
        s = 1j * np.asarray(omega, dtype=float)
        return (self.c_h / s * self.b_h + self.d_h) * np.exp(-self.delay * s)


def realize_operator(gain: float, lead: float, delay: float,
                     channel: int = ALTITUDE_CHANNEL,
                     state_index: int = ALTITUDE_STATE_INDEX) -> OperatorModel:
    if gain <= 0.0:
        raise ConfigError(f"operator gain must be positive, got {gain!r}")
    if lead <= 0.0:
        raise ConfigError(f"operator lead time must be positive, got {lead!r}")
    if delay < 0.0:
        raise ConfigError(f"operator delay must be >= 0, got {delay!r}")
    return OperatorModel(gain=float(gain), lead=float(lead), delay=float(delay),
                         channel=channel, state_index=state_index)


def pi_transfer(model: OperatorModel, omega) -> np.ndarray:
    """Target transfer function K_p (T_p i w + 1)/(i w) e^(-i w tau)."""
    s = 1j * np.asarray(omega, dtype=float)
    return model.gain * (model.lead * s + 1.0) / s * np.exp(-model.delay * s)


def operator_step(eta: float, zeta_delayed: float, model: OperatorModel):
    """One evaluation of the operator dynamics.

    Returns (d eta/dt, r) for the delayed input sample zeta_delayed.
    History lookup is owned by the caller; samples before the start of
    the run are zero.
    """
    d_eta = model.a_h * eta + model.b_h * zeta_delayed
    r = model.c_h * eta + model.d_h * zeta_delayed
    return d_eta, r


class StageDelayBuffer:
    """Ring buffer of integration-stage samples for an exact grid delay.

    Stores four stage values per step; a delay of m steps is served by
    returning the stage tuple recorded m steps earlier, so delayed
    signals at stage times are exact stored samples (no interpolation).
    Reads before the start of the record return zeros.
    """

    def __init__(self, delay_steps: int):
        if delay_steps < 0:
            raise ConfigError("delay_steps must be >= 0")
        self.delay_steps = delay_steps
        self._data = np.zeros((delay_steps + 1, 4))
        self._step = 0

    def push(self, stage_values) -> None:
        self._data[self._step % self._data.shape[0], :] = stage_values
        self._step += 1

    def delayed(self) -> np.ndarray:
        """Stage samples from delay_steps steps ago, relative to the next push."""
        idx = self._step - self.delay_steps
        if idx < 0:
            return np.zeros(4)
        return self._data[idx % self._data.shape[0], :].copy()


def round_delay_to_grid(delay: float, dt: float):
    """Delay as an integer number of steps plus the rounding applied."""
    steps = int(round(delay / dt))
    return steps, steps * dt - delay
