"""Generative stroke decoder: LSTM conditioned on z with a mixture-density head.

Each step consumes [previous stroke-5 row, z], updates the LSTM state and
emits a length 6M+3 vector that parameterizes M bivariate Gaussians over
the next offset (weights, means, deviations, correlations) plus a 3-way
pen-state categorical. Training minimizes the negative log-likelihood of
the target strokes under that distribution; there is no KL term, the
latent stays stochastic through the reparameterization alone.

Backward passes are hand-written (full backprop through time); caches
from the forward run carry the needed intermediates.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.special import expit, log_softmax, logsumexp, softmax

from .errors import OutOfRange, ShapeMismatch
from .params import ParameterStore
from .sketch_data import PEN_DOWN, PEN_END, VectorSketch

LOG_2PI = float(np.log(2.0 * np.pi))
# floor for 1 - rho^2 so the density stays finite if tanh saturates
RHO_S_FLOOR = 1e-10

START_ROW = np.array([0.0, 0.0, 1.0, 0.0, 0.0])


@dataclass
class DecoderConfig:
    hidden_size: int = 512
    M: int = 20
    n_max: int = 200
    temperature: float = 0.4
    z_dim: int = 128
    # dataset offset scale: targets are divided by it, samples multiplied back
    offset_scale: float = 1.0

    def __post_init__(self):
        if self.M < 1 or self.n_max < 1 or self.hidden_size < 1 or self.z_dim < 1:
            raise OutOfRange("hidden_size, M, n_max and z_dim must be >= 1")
        if self.temperature <= 0.0 or self.offset_scale <= 0.0:
            raise OutOfRange("temperature and offset_scale must be positive")

    def to_dict(self) -> dict:
        return dict(self.__dict__)

    @property
    def head_width(self) -> int:
        return 6 * self.M + 3


@dataclass
class MixtureParams:
    """One step's output distribution; all component arrays have length M."""

    pi: np.ndarray
    mu_x: np.ndarray
    mu_y: np.ndarray
    sigma_x: np.ndarray
    sigma_y: np.ndarray
    rho: np.ndarray
    pen: np.ndarray
    log_pi: np.ndarray | None = None
    pen_log: np.ndarray | None = None

    def __post_init__(self):
        with np.errstate(divide="ignore"):
            if self.log_pi is None:
                self.log_pi = np.log(self.pi)
            if self.pen_log is None:
                self.pen_log = np.log(self.pen)

    def validate(self) -> None:
        if abs(float(self.pi.sum()) - 1.0) > 1e-6:
            raise OutOfRange("mixture weights do not sum to 1")
        if np.any(self.sigma_x <= 0) or np.any(self.sigma_y <= 0):
            raise OutOfRange("non-positive deviation")
        if np.any(np.abs(self.rho) >= 1.0):
            raise OutOfRange("correlation outside (-1, 1)")


class StepLoss(NamedTuple):
    offset: float
    pen: float

    @property
    def total(self) -> float:
        return self.offset + self.pen


def init_decoder_params(cfg: DecoderConfig, rng: np.random.Generator,
                        dtype=np.float32, store: ParameterStore | None = None) -> ParameterStore:
    from .encoder import glorot  # shared init helper

    if store is None:
        store = ParameterStore()
    h = cfg.hidden_size
    store.add("dec.init.W", glorot(rng, (cfg.z_dim, 2 * h), dtype))
    store.add("dec.init.b", np.zeros(2 * h, dtype=dtype))
    store.add("dec.lstm.Wx", glorot(rng, (5 + cfg.z_dim, 4 * h), dtype))
    store.add("dec.lstm.Wh", glorot(rng, (h, 4 * h), dtype))
    b = np.zeros(4 * h, dtype=dtype)
    b[h : 2 * h] = 1.0  # forget-gate bias
    store.add("dec.lstm.b", b)
    store.add("dec.head.W", glorot(rng, (h, cfg.head_width), dtype))
    store.add("dec.head.b", np.zeros(cfg.head_width, dtype=dtype))
    return store


def init_state(z: np.ndarray, store: ParameterStore):
    """(h0, c0) = split(Tanh(z W_z + b_z)); both inside (-1, 1)."""
    s = np.tanh(z @ store["dec.init.W"] + store["dec.init.b"])
    h = store["dec.init.W"].shape[1] // 2
    return s[..., :h], s[..., h:]


def _lstm_cell(x, h, c, store: ParameterStore):
    """One LSTM step; returns (h', c', gate cache)."""
    hs = h.shape[-1]
    a = x @ store["dec.lstm.Wx"] + h @ store["dec.lstm.Wh"] + store["dec.lstm.b"]
    i = expit(a[..., :hs])
    f = expit(a[..., hs : 2 * hs])
    g = np.tanh(a[..., 2 * hs : 3 * hs])
    o = expit(a[..., 3 * hs :])
    c_new = f * c + i * g
    tc = np.tanh(c_new)
    return o * tc, c_new, (i, f, g, o, c, tc)


def mixture_from_head(y: np.ndarray, M: int, temperature: float | None = None) -> MixtureParams:
    """Split + activate a head vector; tempering only when a temperature is given.

    Tempering divides the mixture and pen logits by tau and multiplies the
    deviations by sqrt(tau); tau = 1 reproduces the eval-mode parameters
    exactly.
    """
    if y.shape[-1] != 6 * M + 3:
        raise ShapeMismatch(f"head vector has {y.shape[-1]} entries, want {6 * M + 3}")
    pl = y[..., :M]
    mu_x = y[..., M : 2 * M]
    mu_y = y[..., 2 * M : 3 * M]
    lsx = y[..., 3 * M : 4 * M]
    lsy = y[..., 4 * M : 5 * M]
    rr = y[..., 5 * M : 6 * M]
    pen_logits = y[..., 6 * M :]
    root_tau = 1.0
    if temperature is not None:
        pl = pl / temperature
        pen_logits = pen_logits / temperature
        root_tau = np.sqrt(temperature)
    log_pi = log_softmax(pl, axis=-1)
    pen_log = log_softmax(pen_logits, axis=-1)
    return MixtureParams(
        pi=np.exp(log_pi),
        mu_x=mu_x,
        mu_y=mu_y,
        sigma_x=np.exp(lsx) * root_tau,
        sigma_y=np.exp(lsy) * root_tau,
        rho=np.tanh(rr),
        pen=np.exp(pen_log),
        log_pi=log_pi,
        pen_log=pen_log,
    )


def step(prev: np.ndarray, z: np.ndarray, state, store: ParameterStore,
         cfg: DecoderConfig, temperature: float | None = None):
    """One decoder step on a single sequence; returns (MixtureParams, new state)."""
    prev = np.asarray(prev).reshape(-1)
    z = np.asarray(z).reshape(-1)
    if prev.shape[0] != 5 or z.shape[0] != cfg.z_dim:
        raise ShapeMismatch(f"prev {prev.shape} / z {z.shape} do not fit config")
    h, c = state
    if h.shape[-1] != cfg.hidden_size or c.shape[-1] != cfg.hidden_size:
        raise ShapeMismatch("state width does not match config")
    x = np.concatenate([prev, z])
    h_new, c_new, _ = _lstm_cell(x, h, c, store)
    y = h_new @ store["dec.head.W"] + store["dec.head.b"]
    mp = mixture_from_head(y, cfg.M, temperature)
    mp.validate()
    return mp, (h_new, c_new)


def _component_log_density(mp_or_parts, dx, dy):
    """log N_j(dx, dy) per component from (mu, sigma, rho) arrays."""
    mu_x, mu_y, sigma_x, sigma_y, rho = mp_or_parts
    zx = (dx - mu_x) / sigma_x
    zy = (dy - mu_y) / sigma_y
    s = np.maximum(1.0 - rho * rho, RHO_S_FLOOR)
    q = zx * zx - 2.0 * rho * zx * zy + zy * zy
    return -(LOG_2PI + np.log(sigma_x) + np.log(sigma_y) + 0.5 * np.log(s)) - q / (2.0 * s)


def gmm_nll(mp: MixtureParams, target) -> StepLoss:
    """Single-step NLL split into its offset and pen parts.

    offset = -log sum_j pi_j N_j(dx, dy), computed via log-sum-exp;
    pen = -log p(true pen). Sequence-level masking (offsets ignored after
    the end step) and the 1/n_max normalization happen in the sequence
    loss, not here.
    """
    target = np.asarray(target, dtype=np.float64).reshape(-1)
    if target.shape[0] == 3:
        dx, dy = target[0], target[1]
        pen_idx = int(target[2])
    elif target.shape[0] == 5:
        dx, dy = target[0], target[1]
        pen_idx = int(np.argmax(target[2:5]))
    else:
        raise ShapeMismatch("target must be (dx, dy, pen) or a stroke-5 row")
    log_n = _component_log_density(
        (mp.mu_x, mp.mu_y, mp.sigma_x, mp.sigma_y, mp.rho), dx, dy
    )
    offset = -float(logsumexp(mp.log_pi + log_n))
    pen = -float(mp.pen_log[pen_idx])
    loss = StepLoss(offset=offset, pen=pen)
    if not np.isfinite(loss.offset) or not np.isfinite(loss.pen):
        from .errors import NumericalUnderflow

        raise NumericalUnderflow("non-finite step loss")
    return loss


def sample_stroke(mp: MixtureParams, temperature: float, rng: np.random.Generator) -> np.ndarray:
    """Draw one stroke-5 row from a (re)tempered mixture.

    mp is expected untempered (eval mode); tempering here divides the
    log-weights and pen log-probabilities by tau and scales the
    deviations by sqrt(tau), matching step()'s sampling-mode transform.
    """
    if temperature <= 0.0:
        raise OutOfRange("temperature must be positive")
    pi_t = softmax(np.asarray(mp.log_pi, dtype=np.float64) / temperature)
    pi_t = pi_t / pi_t.sum()
    j = int(rng.choice(pi_t.shape[0], p=pi_t))
    root_tau = np.sqrt(temperature)
    sx = mp.sigma_x[j] * root_tau
    sy = mp.sigma_y[j] * root_tau
    rho = mp.rho[j]
    u, v = rng.standard_normal(2)
    dx = mp.mu_x[j] + sx * u
    dy = mp.mu_y[j] + sy * (rho * u + np.sqrt(max(1.0 - rho * rho, 0.0)) * v)
    pen_t = softmax(np.asarray(mp.pen_log, dtype=np.float64) / temperature)
    pen_t = pen_t / pen_t.sum()
    pen = int(rng.choice(3, p=pen_t))
    row = np.zeros(5)
    row[0], row[1] = dx, dy
    row[2 + pen] = 1.0
    return row


def generate(z: np.ndarray, store: ParameterStore, cfg: DecoderConfig,
             rng: np.random.Generator, temperature: float | None = None) -> VectorSketch:
    """Autoregressive rollout from the start token (0, 0, down).

    Stops at the first sampled pen=end; hitting the n_max cap forces the
    final step's pen to end so the output always satisfies the sketch
    invariants. Offsets are scaled back to pixels by cfg.offset_scale.
    """
    tau = cfg.temperature if temperature is None else temperature
    state = init_state(np.asarray(z).reshape(-1), store)
    prev = START_ROW.copy()
    rows = []
    for _ in range(cfg.n_max):
        mp, state = step(prev, z, state, store, cfg)
        row = sample_stroke(mp, tau, rng)
        rows.append(row)
        prev = row
        if row[4] == 1.0:
            break
    out = np.array(rows)
    if out[-1, 4] != 1.0:  # truncated by the cap
        out[-1, 2:5] = (0.0, 0.0, 1.0)
    pens = np.argmax(out[:, 2:5], axis=1).astype(np.float64)
    steps = np.column_stack([out[:, 0] * cfg.offset_scale,
                             out[:, 1] * cfg.offset_scale, pens])
    return VectorSketch(steps)


def _offset_mask(targets: np.ndarray) -> np.ndarray:
    """1.0 up to and including the end step, 0.0 after (per sequence)."""
    pen_idx = np.argmax(targets[:, :, 2:5], axis=2)
    is_end = pen_idx == PEN_END
    has_end = is_end.any(axis=1)
    first_end = np.where(has_end, is_end.argmax(axis=1), targets.shape[1] - 1)
    t_idx = np.arange(targets.shape[1])
    return (t_idx[None, :] <= first_end[:, None]).astype(targets.dtype)


def teacher_forced_nll(targets: np.ndarray, z: np.ndarray, store: ParameterStore,
                       cfg: DecoderConfig):
    """Sequence NLL with teacher forcing; returns (scalar loss, cache).

    targets: (B, T, 5) stroke-5 rows (offsets already on the model scale);
    inputs are the same rows shifted right behind the start token. Offset
    terms are masked after each sequence's end step, pen terms count at
    every unrolled step, and the per-item sum is divided by cfg.n_max.
    """
    targets = np.asarray(targets)
    if targets.ndim != 3 or targets.shape[2] != 5:
        raise ShapeMismatch("targets must be (B, T, 5)")
    B, T, _ = targets.shape
    if T > cfg.n_max:
        raise ShapeMismatch(f"T={T} exceeds n_max={cfg.n_max}")
    z = np.asarray(z)
    if z.shape != (B, cfg.z_dim):
        raise ShapeMismatch(f"z {z.shape} must be ({B}, {cfg.z_dim})")
    dtype = store["dec.head.W"].dtype
    M, hs = cfg.M, cfg.hidden_size

    x_prev = np.empty((B, T, 5), dtype=dtype)
    x_prev[:, 0, :] = START_ROW
    x_prev[:, 1:, :] = targets[:, :-1, :]
    X = np.concatenate([x_prev, np.broadcast_to(z[:, None, :], (B, T, cfg.z_dim))], axis=2)
    X = np.ascontiguousarray(X, dtype=dtype)

    s_init = np.tanh(z @ store["dec.init.W"] + store["dec.init.b"])
    h, c = s_init[:, :hs], s_init[:, hs:]
    h0 = h
    H = np.empty((B, T, hs), dtype=dtype)
    H_prev = np.empty((B, T, hs), dtype=dtype)
    gates = np.empty((B, T, 4 * hs), dtype=dtype)
    C_prev = np.empty((B, T, hs), dtype=dtype)
    TC = np.empty((B, T, hs), dtype=dtype)
    for t in range(T):
        H_prev[:, t] = h
        h, c, (i, f, g, o, c_prev, tc) = _lstm_cell(X[:, t], h, c, store)
        H[:, t] = h
        gates[:, t, :hs] = i
        gates[:, t, hs : 2 * hs] = f
        gates[:, t, 2 * hs : 3 * hs] = g
        gates[:, t, 3 * hs :] = o
        C_prev[:, t] = c_prev
        TC[:, t] = tc

    Y = H.reshape(B * T, hs) @ store["dec.head.W"] + store["dec.head.b"]
    Y = Y.reshape(B, T, cfg.head_width)

    log_pi = log_softmax(Y[:, :, :M], axis=-1)
    mu_x = Y[:, :, M : 2 * M]
    mu_y = Y[:, :, 2 * M : 3 * M]
    lsx = Y[:, :, 3 * M : 4 * M]
    lsy = Y[:, :, 4 * M : 5 * M]
    rho = np.tanh(Y[:, :, 5 * M : 6 * M])
    pen_logp = log_softmax(Y[:, :, 6 * M :], axis=-1)

    sx, sy = np.exp(lsx), np.exp(lsy)
    zx = (targets[:, :, 0:1] - mu_x) / sx
    zy = (targets[:, :, 1:2] - mu_y) / sy
    s = np.maximum(1.0 - rho * rho, RHO_S_FLOOR)
    q = zx * zx - 2.0 * rho * zx * zy + zy * zy
    log_n = -(LOG_2PI + lsx + lsy + 0.5 * np.log(s)) - q / (2.0 * s)
    comp = log_pi + log_n
    lse = logsumexp(comp, axis=-1)

    off_mask = _offset_mask(targets)
    pen_target = np.argmax(targets[:, :, 2:5], axis=2)
    pen_nll = -np.take_along_axis(pen_logp, pen_target[:, :, None], axis=2)[:, :, 0]
    loss = float((-(lse) * off_mask).sum() + pen_nll.sum()) / (B * cfg.n_max)

    cache = {
        "targets": targets, "X": X, "H": H, "H_prev": H_prev, "gates": gates,
        "C_prev": C_prev, "TC": TC, "Y": Y, "log_pi": log_pi, "comp": comp,
        "lse": lse, "zx": zx, "zy": zy, "sx": sx, "sy": sy, "rho": rho, "s": s,
        "q": q, "pen_logp": pen_logp, "pen_target": pen_target,
        "off_mask": off_mask, "s_init": s_init, "z": z, "h0": h0, "B": B, "T": T,
    }
    return loss, cache


def teacher_forced_backward(cache: dict, store: ParameterStore, cfg: DecoderConfig,
                            grads: dict) -> np.ndarray:
    """Backprop through head, LSTM and initial state; returns dloss/dz (B, z_dim)."""
    M, hs = cfg.M, cfg.hidden_size
    B, T = cache["B"], cache["T"]
    zx, zy, sx, sy = cache["zx"], cache["zy"], cache["sx"], cache["sy"]
    rho, s, q = cache["rho"], cache["s"], cache["q"]
    dtype = store["dec.head.W"].dtype

    w = (cache["off_mask"] / (B * cfg.n_max))[:, :, None].astype(dtype)
    resp = np.exp(cache["comp"] - cache["lse"][:, :, None])  # responsibilities
    pi = np.exp(cache["log_pi"])

    dY = np.empty_like(cache["Y"])
    dY[:, :, :M] = (pi - resp) * w
    # d log N / d(mu, log sigma, rho_raw); the tanh factor 1 - rho^2 = s
    # is folded into the rho_raw formula already
    gx = (zx - rho * zy) / s
    gy = (zy - rho * zx) / s
    dY[:, :, M : 2 * M] = -resp * gx / sx * w
    dY[:, :, 2 * M : 3 * M] = -resp * gy / sy * w
    dY[:, :, 3 * M : 4 * M] = resp * (1.0 - zx * gx) * w
    dY[:, :, 4 * M : 5 * M] = resp * (1.0 - zy * gy) * w
    dY[:, :, 5 * M : 6 * M] = -resp * (rho + zx * zy - rho * q / s) * w
    pen_onehot = np.zeros((B, T, 3), dtype=dtype)
    np.put_along_axis(pen_onehot, cache["pen_target"][:, :, None], 1.0, axis=2)
    dY[:, :, 6 * M :] = (np.exp(cache["pen_logp"]) - pen_onehot) / (B * cfg.n_max)

    dY2 = dY.reshape(B * T, cfg.head_width)
    grads["dec.head.W"] += cache["H"].reshape(B * T, hs).T @ dY2
    grads["dec.head.b"] += dY2.sum(axis=0)
    dH = (dY2 @ store["dec.head.W"].T).reshape(B, T, hs)

    gates, C_prev, TC = cache["gates"], cache["C_prev"], cache["TC"]
    dA = np.empty((B, T, 4 * hs), dtype=dtype)
    dh_next = np.zeros((B, hs), dtype=dtype)
    dc_next = np.zeros((B, hs), dtype=dtype)
    Wh = store["dec.lstm.Wh"]
    for t in range(T - 1, -1, -1):
        i = gates[:, t, :hs]
        f = gates[:, t, hs : 2 * hs]
        g = gates[:, t, 2 * hs : 3 * hs]
        o = gates[:, t, 3 * hs :]
        tc = TC[:, t]
        dh = dH[:, t] + dh_next
        do = dh * tc
        dc = dc_next + dh * o * (1.0 - tc * tc)
        dA[:, t, :hs] = dc * g * i * (1.0 - i)
        dA[:, t, hs : 2 * hs] = dc * C_prev[:, t] * f * (1.0 - f)
        dA[:, t, 2 * hs : 3 * hs] = dc * i * (1.0 - g * g)
        dA[:, t, 3 * hs :] = do * o * (1.0 - o)
        dh_next = dA[:, t] @ Wh.T
        dc_next = dc * f

    dA2 = dA.reshape(B * T, 4 * hs)
    grads["dec.lstm.Wx"] += cache["X"].reshape(B * T, -1).T @ dA2
    grads["dec.lstm.Wh"] += cache["H_prev"].reshape(B * T, hs).T @ dA2
    grads["dec.lstm.b"] += dA2.sum(axis=0)
    dX = (dA2 @ store["dec.lstm.Wx"].T).reshape(B, T, 5 + cfg.z_dim)
    dz = dX[:, :, 5:].sum(axis=1)

    # initial state: (h0, c0) = tanh(z W + b)
    ds_init = np.concatenate([dh_next, dc_next], axis=1) * (1.0 - cache["s_init"] ** 2)
    grads["dec.init.W"] += cache["z"].T @ ds_init
    grads["dec.init.b"] += ds_init.sum(axis=0)
    dz += ds_init @ store["dec.init.W"].T
    return dz
