"""Small trainable epsilon-predictor with hand-written reverse-mode gradients.

Architecture: ``[x_t, time embedding, condition embedding] -> SiLU -> SiLU -> d``.
The time embedding uses sinusoids of ``t / T``; the condition embedding is a
learned table with row 0 for the unconditional query and one row per prompt.
Training follows denoising score matching with condition dropout, so the same
net answers conditional and unconditional queries (needed for CFG).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import expit

from ...core.errors import DivergenceError
from ...core.file_utils import atomic_write_bytes
from ...core.logging_manager import get_logger
from ..gmm_oracle import Condition, ConditionRegistry
from ..latent_ops import Denoiser
from ..optimizer.adam import AdamConfig, AdamState, adam_update
from ..schedule import NoiseSchedule

WEIGHT_FILE_MAGIC = b"UDSNET1\x00"
WEIGHT_FILE_VERSION = 1
N_FREQUENCIES = 8
DIVERGENCE_FACTOR = 10.0

# Order of the trainable arrays in flat vectors and in the weight file.
PARAMETER_ORDER = ("cond_table", "W1", "b1", "W2", "b2", "W3", "b3")


@dataclass(eq=False)
class DenoiserNet:
    """Parameters of the two-hidden-layer network (mutated only by :func:`train`)."""

    dim: int
    T: int
    prompt_ids: List[str]
    freqs: np.ndarray
    cond_table: np.ndarray
    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray
    W3: np.ndarray
    b3: np.ndarray

    def __post_init__(self) -> None:
        hidden = self.hidden
        expected = {
            "cond_table": (len(self.prompt_ids) + 1, self.cond_dim),
            "W1": (self.input_dim, hidden),
            "b1": (hidden,),
            "W2": (hidden, hidden),
            "b2": (hidden,),
            "W3": (hidden, self.dim),
            "b3": (self.dim,),
        }
        for name, shape in expected.items():
            value = np.asarray(getattr(self, name), dtype=np.float64)
            if value.shape != shape:
                raise ValueError(f"{name} hat Form {value.shape}, erwartet {shape}")
            if not np.all(np.isfinite(value)):
                raise ValueError(f"{name} enthält nicht-endliche Werte")
            setattr(self, name, value)
        if len(set(self.prompt_ids)) != len(self.prompt_ids):
            raise ValueError("Prompt-IDs des Netzes müssen eindeutig sein")

    # ------------------------------------------------------------------
    @property
    def hidden(self) -> int:
        return int(np.shape(self.b1)[0])

    @property
    def cond_dim(self) -> int:
        return int(np.shape(self.cond_table)[1])

    @property
    def time_dim(self) -> int:
        return 2 * int(np.shape(self.freqs)[0])

    @property
    def input_dim(self) -> int:
        return self.dim + self.time_dim + self.cond_dim

    # ------------------------------------------------------------------
    def condition_index(self, cond: Condition) -> int:
        """Row of the condition table; a negative prompt shares its prompt's row."""

        if cond.is_unconditional:
            return 0
        try:
            return self.prompt_ids.index(str(cond.prompt_id)) + 1
        except ValueError:
            raise ValueError(f"Prompt {cond.prompt_id!r} ist dem Netz unbekannt") from None

    def flat_parameters(self) -> np.ndarray:
        return np.concatenate([getattr(self, name).reshape(-1) for name in PARAMETER_ORDER])

    def set_flat_parameters(self, flat: np.ndarray) -> None:
        offset = 0
        for name in PARAMETER_ORDER:
            current = getattr(self, name)
            size = current.size
            setattr(self, name, np.array(flat[offset : offset + size], dtype=np.float64).reshape(current.shape))
            offset += size
        if offset != flat.size:
            raise ValueError(f"Parametervektor hat {flat.size} statt {offset} Einträge")


def init_net(
    dim: int,
    prompt_ids: Sequence[str],
    T: int,
    rng: np.random.Generator,
    *,
    hidden: int = 64,
    cond_dim: int = 8,
) -> DenoiserNet:
    """Random hidden layers (scaled by ``1/sqrt(fan_in)``) and a zero output layer."""

    if dim < 1 or hidden < 1 or cond_dim < 1:
        raise ValueError("dim, hidden und cond_dim müssen positiv sein")
    freqs = np.pi * 2.0 ** np.arange(N_FREQUENCIES, dtype=np.float64) / 2.0
    input_dim = dim + 2 * N_FREQUENCIES + cond_dim
    return DenoiserNet(
        dim=int(dim),
        T=int(T),
        prompt_ids=list(prompt_ids),
        freqs=freqs,
        cond_table=0.5 * rng.standard_normal((len(prompt_ids) + 1, cond_dim)),
        W1=rng.standard_normal((input_dim, hidden)) / np.sqrt(input_dim),
        b1=np.zeros(hidden),
        W2=rng.standard_normal((hidden, hidden)) / np.sqrt(hidden),
        b2=np.zeros(hidden),
        W3=np.zeros((hidden, dim)),
        b3=np.zeros(dim),
    )


# ----------------------------------------------------------------------
# forward / backward


@dataclass
class _ForwardCache:
    inputs: np.ndarray
    h1: np.ndarray
    a1: np.ndarray
    h2: np.ndarray
    a2: np.ndarray
    cond_rows: np.ndarray


def _silu(x: np.ndarray) -> np.ndarray:
    return x * expit(x)


def _silu_grad(x: np.ndarray) -> np.ndarray:
    sig = expit(x)
    return sig * (1.0 + x * (1.0 - sig))


def time_embedding(net: DenoiserNet, t: np.ndarray) -> np.ndarray:
    phase = (np.asarray(t, dtype=np.float64).reshape(-1, 1) / net.T) * net.freqs[None, :]
    return np.concatenate([np.sin(phase), np.cos(phase)], axis=1)


def _forward(net: DenoiserNet, x_t: np.ndarray, t: np.ndarray, cond_rows: np.ndarray) -> Tuple[np.ndarray, _ForwardCache]:
    inputs = np.concatenate([x_t, time_embedding(net, t), net.cond_table[cond_rows]], axis=1)
    h1 = inputs @ net.W1 + net.b1
    a1 = _silu(h1)
    h2 = a1 @ net.W2 + net.b2
    a2 = _silu(h2)
    out = a2 @ net.W3 + net.b3
    return out, _ForwardCache(inputs, h1, a1, h2, a2, cond_rows)


def _backward(net: DenoiserNet, cache: _ForwardCache, grad_out: np.ndarray) -> Dict[str, np.ndarray]:
    grads: Dict[str, np.ndarray] = {}
    grads["W3"] = cache.a2.T @ grad_out
    grads["b3"] = grad_out.sum(axis=0)
    grad_h2 = (grad_out @ net.W3.T) * _silu_grad(cache.h2)
    grads["W2"] = cache.a1.T @ grad_h2
    grads["b2"] = grad_h2.sum(axis=0)
    grad_h1 = (grad_h2 @ net.W2.T) * _silu_grad(cache.h1)
    grads["W1"] = cache.inputs.T @ grad_h1
    grads["b1"] = grad_h1.sum(axis=0)
    grad_inputs = grad_h1 @ net.W1.T
    table = np.zeros_like(net.cond_table)
    np.add.at(table, cache.cond_rows, grad_inputs[:, net.dim + net.time_dim :])
    grads["cond_table"] = table
    return grads


def loss_and_grad(
    net: DenoiserNet,
    x_t: np.ndarray,
    t: np.ndarray,
    cond_rows: np.ndarray,
    eps: np.ndarray,
) -> Tuple[float, np.ndarray]:
    """Batch loss ``mean_n ||eps_hat - eps||^2`` and its flat parameter gradient."""

    out, cache = _forward(net, x_t, t, cond_rows)
    residual = out - eps
    batch = x_t.shape[0]
    loss = float(np.sum(residual * residual) / batch)
    grads = _backward(net, cache, 2.0 * residual / batch)
    return loss, np.concatenate([grads[name].reshape(-1) for name in PARAMETER_ORDER])


def predict(net: DenoiserNet, x_t: np.ndarray, t: int, cond: Condition) -> np.ndarray:
    """Deterministic forward pass for one vector (or a batch sharing ``t``/``cond``)."""

    arr = np.asarray(x_t, dtype=np.float64)
    single = arr.ndim == 1
    batch = arr[None, :] if single else arr
    if batch.ndim != 2 or batch.shape[1] != net.dim:
        raise ValueError(f"Netz erwartet Dimension {net.dim}, erhalten: {arr.shape}")
    if not 0 <= int(t) <= net.T:
        raise ValueError(f"Zeitschritt {t} liegt außerhalb von [0, {net.T}]")
    rows = np.full(batch.shape[0], net.condition_index(cond), dtype=int)
    times = np.full(batch.shape[0], float(t))
    out, _ = _forward(net, batch, times, rows)
    return out[0] if single else out


class NeuralDenoiser:
    """Denoiser interface around a trained :class:`DenoiserNet`."""

    def __init__(self, net: DenoiserNet) -> None:
        self.net = net

    def predict(self, x_t: np.ndarray, t: int, cond: Condition) -> np.ndarray:
        return predict(self.net, x_t, t, cond)


# ----------------------------------------------------------------------
# training


def train(
    net: DenoiserNet,
    registry: ConditionRegistry,
    sched: NoiseSchedule,
    steps: int,
    batch: int,
    lr: float,
    rng: np.random.Generator,
    *,
    dropout: float = 0.1,
    logger: Optional[logging.Logger] = None,
) -> List[float]:
    """Denoising score matching with condition dropout; returns the loss per step."""

    logger = logger or get_logger("modules.neural_denoiser")
    if steps < 0 or batch < 1:
        raise ValueError("steps >= 0 und batch >= 1 erforderlich")
    if not 0.0 <= dropout <= 1.0:
        raise ValueError("dropout muss in [0, 1] liegen")
    if sched.T != net.T:
        raise ValueError(f"Netz wurde für T={net.T} gebaut, Rauschtabelle hat T={sched.T}")
    unknown = set(registry.prompt_ids) - set(net.prompt_ids)
    if unknown:
        raise ValueError(f"Netz kennt die Prompts {sorted(unknown)} nicht")

    prompt_ids = registry.prompt_ids
    prior = np.array([registry.prior_weights[pid] for pid in prompt_ids])
    state = AdamState.initial(net.flat_parameters())
    adam = AdamConfig(lr=lr)
    losses: List[float] = []
    initial_loss: Optional[float] = None
    report_every = max(1, steps // 10)

    for step in range(steps):
        picks = rng.choice(len(prompt_ids), size=batch, p=prior)
        x0 = np.empty((batch, net.dim))
        for slot, pid in enumerate(prompt_ids):
            mask = picks == slot
            if np.any(mask):
                x0[mask] = registry.prompts[pid].sample(rng, int(mask.sum()))
        times = rng.integers(1, sched.T + 1, size=batch)
        eps = rng.standard_normal((batch, net.dim))
        alpha_bar = sched.alpha_bars[times][:, None]
        x_t = np.sqrt(alpha_bar) * x0 + np.sqrt(1.0 - alpha_bar) * eps
        rows = np.array([net.prompt_ids.index(prompt_ids[pick]) + 1 for pick in picks])
        rows[rng.random(batch) < dropout] = 0

        loss, grad = loss_and_grad(net, x_t, times, rows, eps)
        if initial_loss is None:
            initial_loss = loss
        if not np.isfinite(loss) or loss > DIVERGENCE_FACTOR * initial_loss:
            logger.error("Training divergiert bei Schritt %d (Verlust %.4g).", step + 1, loss)
            raise DivergenceError(
                f"Verlust {loss:.4g} überschreitet das {DIVERGENCE_FACTOR:g}-fache des Startwerts {initial_loss:.4g}",
                step=step + 1,
            )
        state = adam_update(state, grad, adam)
        net.set_flat_parameters(state.theta)
        losses.append(loss)
        if (step + 1) % report_every == 0:
            window = losses[-report_every:]
            logger.info("Training %d/%d: mittlerer Verlust %.4f", step + 1, steps, float(np.mean(window)))
    return losses


# ----------------------------------------------------------------------
# weight file


def save_net(net: DenoiserNet, path: Path, *, logger: Optional[logging.Logger] = None) -> bool:
    """Write the weight file (layout in ``docs/weight_file_format.md``)."""

    logger = logger or get_logger("modules.neural_denoiser")
    header = np.array(
        [WEIGHT_FILE_VERSION, net.dim, net.T, net.hidden, net.cond_dim, net.freqs.size, len(net.prompt_ids)],
        dtype="<i8",
    )
    names = b"".join(
        np.array([len(encoded)], dtype="<i8").tobytes() + encoded
        for encoded in (pid.encode("utf-8") for pid in net.prompt_ids)
    )
    payload = np.concatenate([net.freqs, net.flat_parameters()]).astype("<f8")
    written = atomic_write_bytes(Path(path), WEIGHT_FILE_MAGIC + header.tobytes() + names + payload.tobytes(), logger=logger)
    if written:
        logger.info("Gewichte gespeichert: %s (%d Werte)", path, payload.size)
    return written


def load_net(path: Path) -> DenoiserNet:
    """Read a weight file; raises ``ValueError`` for wrong magic or truncated payloads."""

    data = Path(path).read_bytes()
    if data[: len(WEIGHT_FILE_MAGIC)] != WEIGHT_FILE_MAGIC:
        raise ValueError(f"{path}: keine UDSNET1-Gewichtsdatei")
    offset = len(WEIGHT_FILE_MAGIC)
    header_size = 7 * 8
    if len(data) < offset + header_size:
        raise ValueError(f"{path}: Kopfzeile unvollständig")
    version, dim, T, hidden, cond_dim, n_freq, n_prompts = (
        int(value) for value in np.frombuffer(data, dtype="<i8", count=7, offset=offset)
    )
    offset += header_size
    if version != WEIGHT_FILE_VERSION:
        raise ValueError(f"{path}: Version {version} wird nicht unterstützt")

    prompt_ids: List[str] = []
    for _ in range(n_prompts):
        if len(data) < offset + 8:
            raise ValueError(f"{path}: Prompt-Tabelle unvollständig")
        length = int(np.frombuffer(data, dtype="<i8", count=1, offset=offset)[0])
        offset += 8
        if length < 0 or len(data) < offset + length:
            raise ValueError(f"{path}: Prompt-Tabelle unvollständig")
        prompt_ids.append(data[offset : offset + length].decode("utf-8"))
        offset += length

    input_dim = dim + 2 * n_freq + cond_dim
    shapes = {
        "cond_table": (n_prompts + 1, cond_dim),
        "W1": (input_dim, hidden),
        "b1": (hidden,),
        "W2": (hidden, hidden),
        "b2": (hidden,),
        "W3": (hidden, dim),
        "b3": (dim,),
    }
    count = n_freq + sum(int(np.prod(shape)) for shape in shapes.values())
    if len(data) - offset != 8 * count:
        raise ValueError(f"{path}: erwartet {count} Gleitkommawerte, gefunden {(len(data) - offset) / 8:g}")
    values = np.frombuffer(data, dtype="<f8", count=count, offset=offset).astype(np.float64)
    if not np.all(np.isfinite(values)):
        raise ValueError(f"{path}: Gewichte enthalten nicht-endliche Werte")

    arrays: Dict[str, np.ndarray] = {}
    cursor = n_freq
    for name in PARAMETER_ORDER:
        size = int(np.prod(shapes[name]))
        arrays[name] = values[cursor : cursor + size].reshape(shapes[name]).copy()
        cursor += size
    return DenoiserNet(dim=dim, T=T, prompt_ids=prompt_ids, freqs=values[:n_freq].copy(), **arrays)


def epsilon_rms(
    denoiser: "NeuralDenoiser",
    reference: Denoiser,
    registry: ConditionRegistry,
    sched: NoiseSchedule,
    rng: np.random.Generator,
    *,
    n_samples: int = 64,
    timesteps: Sequence[int] = (50, 200, 400, 600, 800, 1000),
) -> float:
    """RMS gap between two epsilon predictors on noised mixture samples.

    Every prompt and the unconditional query are evaluated at each timestep
    (clipped to ``[1, T]``); ``reference`` is usually the analytic oracle.
    """

    conditions = [Condition.unconditional()] + [Condition.prompt(pid) for pid in registry.prompt_ids]
    squared: List[float] = []
    for cond in conditions:
        x0 = registry.resolve(cond).sample(rng, n_samples)
        for t in sorted({min(max(int(step), 1), sched.T) for step in timesteps}):
            eps = rng.standard_normal(x0.shape)
            x_t = sched.sqrt_alpha_bar(t) * x0 + sched.sqrt_one_minus_alpha_bar(t) * eps
            for row in x_t:
                gap = denoiser.predict(row, t, cond) - reference.predict(row, t, cond)
                squared.append(float(np.mean(gap**2)))
    return float(np.sqrt(np.mean(squared)))


__all__ = [
    "DenoiserNet",
    "NeuralDenoiser",
    "PARAMETER_ORDER",
    "WEIGHT_FILE_MAGIC",
    "epsilon_rms",
    "init_net",
    "load_net",
    "loss_and_grad",
    "predict",
    "save_net",
    "time_embedding",
    "train",
]
