"""
Objetivos de seguridad de capa física
Tasa legítima/espía con ruido artificial, tasa secreta alcanzable (ASR) y las
recompensas por paradigma (determinista, estocástico, chance-constrained, robusto).
Todo se construye sobre gradcore para ser diferenciable respecto a la acción.
"""
import logging
from dataclasses import dataclass
from enum import Enum

import numpy as np

from channel import ChannelSamples, ComplexMatrix, draw_samples
from errors import ConfigError
from gradcore import Graph

logger = logging.getLogger(__name__)

LN2 = float(np.log(2.0))
NORM_FLOOR = 1e-30


class Paradigm(str, Enum):
    DETERMINISTIC = 'deterministic'
    STOCHASTIC = 'stochastic'
    CHANCE = 'chance'
    ROBUST = 'robust'


def action_dim(n_tx):
    """Reales de una acción: Re/Im de w y de v"""
    return 4 * n_tx


def project_power(vector, tx_power):
    """Proyección radial: escala (w, v) en conjunto si ||w||^2 + ||v||^2 > tx_power"""
    vector = np.asarray(vector, dtype=np.float64)
    power = float(np.sum(vector ** 2))
    if power <= tx_power * (1.0 + 1e-12):
        return vector.copy()
    return vector * (np.sqrt(tx_power) / np.sqrt(power))


def project_power_node(graph, x, tx_power):
    """Versión diferenciable de project_power sobre el último eje de `x`"""
    sq = graph.sum(graph.square(x), axis=-1, keepdims=True)
    norm = graph.sqrt(sq + NORM_FLOOR)
    ratio = graph.constant(np.sqrt(tx_power)) / norm
    ones = graph.constant(np.ones(graph.value(ratio).shape))
    scale = graph.reduce('min', graph.concat([ones, ratio], axis=-1), axis=-1, keepdims=True)
    return x * graph.broadcast(scale, graph.value(x).shape)


@dataclass
class BeamformingAction:
    """
    Beamformer de señal confidencial `w` y de ruido artificial `v` (complejos).
    El presupuesto ||w||^2 + ||v||^2 <= tx_power se impone al construir, por proyección radial.
    """
    w: np.ndarray
    v: np.ndarray
    tx_power: float = 1.0

    def __post_init__(self):
        w = np.asarray(self.w, dtype=np.complex128).reshape(-1)
        v = np.asarray(self.v, dtype=np.complex128).reshape(-1)
        if w.shape != v.shape:
            raise ValueError("w y v deben tener la misma dimensión")
        self.tx_power = float(self.tx_power)
        if not self.tx_power > 0:
            raise ValueError(f"tx_power debe ser > 0, recibido {self.tx_power}")
        n = w.size
        vector = project_power(np.concatenate([w.real, w.imag, v.real, v.imag]), self.tx_power)
        self.w = vector[:n] + 1j * vector[n:2 * n]
        self.v = vector[2 * n:3 * n] + 1j * vector[3 * n:]

    @classmethod
    def from_vector(cls, vector, tx_power):
        """Layout [Re w, Im w, Re v, Im v]; la proyección de potencia la aplica el constructor"""
        vector = np.asarray(vector, dtype=np.float64).reshape(-1)
        n = vector.size // 4
        if vector.size != 4 * n:
            raise ValueError(f"longitud de acción {vector.size} no es múltiplo de 4")
        return cls(vector[:n] + 1j * vector[n:2 * n], vector[2 * n:3 * n] + 1j * vector[3 * n:], tx_power)

    @classmethod
    def zero(cls, n_tx, tx_power=1.0):
        return cls(np.zeros(n_tx), np.zeros(n_tx), tx_power)

    def to_vector(self):
        return np.concatenate([self.w.real, self.w.imag, self.v.real, self.v.imag])

    def power(self):
        return float(np.sum(np.abs(self.w) ** 2) + np.sum(np.abs(self.v) ** 2))


@dataclass
class ParadigmConfig:
    paradigm: Paradigm = Paradigm.STOCHASTIC
    c_eve: float = 3.0
    p_eve: float = 0.70
    mc_samples_train: int = 64
    mc_samples_eval: int = 256
    temperature: float = 0.01

    def __post_init__(self):
        try:
            self.paradigm = Paradigm(self.paradigm)
        except ValueError:
            raise ConfigError('paradigm.paradigm', f"paradigma desconocido '{self.paradigm}'")
        if not 0.0 < self.p_eve < 1.0:
            raise ConfigError('paradigm.p_eve', f"debe estar en (0, 1), recibido {self.p_eve}")
        if self.c_eve <= 0:
            raise ConfigError('paradigm.c_eve', f"debe ser > 0, recibido {self.c_eve}")
        for name in ('mc_samples_train', 'mc_samples_eval'):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f'paradigm.{name}', "debe ser >= 1")
        if self.temperature <= 0:
            raise ConfigError('paradigm.temperature', "debe ser > 0")


@dataclass
class RewardBreakdown:
    paradigm: str
    reward: float
    mean_asr: float
    mean_excess: float
    satisfaction_prob: float
    worst_sample_reward: float

    CSV_COLUMNS = ('paradigm', 'reward', 'mean_asr', 'satisfaction_prob', 'worst_sample_reward')

    def to_row(self):
        return {col: getattr(self, col) for col in self.CSV_COLUMNS}


# ----------------------------------------------------------------------
# tasas sobre el grafo
# ----------------------------------------------------------------------
def _complex_constants(graph, h, noise_power):
    """Canal normalizado por el ruido (H / sigma) como par de constantes reales"""
    if noise_power <= 0:
        raise ValueError("noise_power debe ser > 0")
    if isinstance(h, ComplexMatrix):
        h = h.to_complex()
    h = np.asarray(h, dtype=np.complex128) / np.sqrt(noise_power)
    return graph.constant(h.real), graph.constant(h.imag)


def _split_action(graph, action, n_tx):
    parts = []
    for k in range(4):
        parts.append(graph.reshape(graph.index(action, slice(k * n_tx, (k + 1) * n_tx)), (n_tx, 1)))
    return parts


def _apply(graph, h_re, h_im, x_re, x_im):
    """(H x) para H y x complejos como pares reales; devuelve [.., rx]"""
    re = graph.matmul(h_re, x_re) - graph.matmul(h_im, x_im)
    im = graph.matmul(h_re, x_im) + graph.matmul(h_im, x_re)
    shape = graph.value(re).shape[:-1]
    return graph.reshape(re, shape), graph.reshape(im, shape)


def rate_node(graph, h, action, noise_power):
    """
    log2(1 + w^H H^H S^-1 H w), S = sigma^2 I + (Hv)(Hv)^H, con la identidad de rango uno:
    SINR = ||u||^2 - |a^H u|^2 / (1 + ||a||^2), u = Hw/sigma, a = Hv/sigma.
    `h` puede ser [rx, tx] o un lote [M, rx, tx]; el resultado tiene forma () o [M].
    """
    h_re, h_im = _complex_constants(graph, h, noise_power)
    n_tx = graph.value(h_re).shape[-1]
    if graph.value(action).shape != (4 * n_tx,):
        raise ValueError(f"acción de forma {graph.value(action).shape}, se esperaba ({4 * n_tx},)")
    w_re, w_im, v_re, v_im = _split_action(graph, action, n_tx)
    u_re, u_im = _apply(graph, h_re, h_im, w_re, w_im)
    a_re, a_im = _apply(graph, h_re, h_im, v_re, v_im)
    uu = graph.sum(graph.square(u_re) + graph.square(u_im), axis=-1)
    aa = graph.sum(graph.square(a_re) + graph.square(a_im), axis=-1)
    c_re = graph.sum(a_re * u_re + a_im * u_im, axis=-1)
    c_im = graph.sum(a_re * u_im - a_im * u_re, axis=-1)
    leak = (graph.square(c_re) + graph.square(c_im)) / (aa + 1.0)
    sinr = graph.relu(uu - leak)
    return graph.log(sinr + 1.0) / LN2


def hinge_node(graph, x, smooth=False, temperature=0.01):
    """max(0, x) exacto o softplus suavizado con temperatura (solo en rutas de gradiente)"""
    if not smooth:
        return graph.relu(x)
    return graph.softplus(x / temperature) * temperature


def _action_node(graph, action):
    if isinstance(action, BeamformingAction):
        return graph.constant(action.to_vector())
    return action


# ----------------------------------------------------------------------
# API escalar (evaluación)
# ----------------------------------------------------------------------
def rate(h, action, noise_power):
    """Tasa en bps/Hz del enlace `h` bajo la acción"""
    graph = Graph()
    return float(graph.value(rate_node(graph, h, _action_node(graph, action), noise_power)))


def asr(pair, action, noise_power, smooth=False, temperature=0.01):
    """Tasa secreta alcanzable: max(0, C_b - C_e); `smooth` usa el hinge suavizado"""
    graph = Graph()
    node = _action_node(graph, action)
    c_b = rate_node(graph, pair.h_b, node, noise_power)
    c_e = rate_node(graph, pair.h_e, node, noise_power)
    return float(graph.value(hinge_node(graph, c_b - c_e, smooth, temperature)))


def penalized_reward(pair, action, cfg, noise_power, smooth=False):
    """ASR menos el exceso de capacidad del espía sobre c_eve"""
    graph = Graph()
    node = _action_node(graph, action)
    c_b = rate_node(graph, pair.h_b, node, noise_power)
    c_e = rate_node(graph, pair.h_e, node, noise_power)
    reward = penalized_node(graph, c_b, c_e, cfg.c_eve, smooth, cfg.temperature)
    return float(graph.value(reward))


def penalized_node(graph, c_b, c_e, c_eve, smooth=False, temperature=0.01):
    secrecy = hinge_node(graph, c_b - c_e, smooth, temperature)
    return secrecy - hinge_node(graph, c_e - c_eve, smooth, temperature)


# ----------------------------------------------------------------------
# paradigmas
# ----------------------------------------------------------------------
def paradigm_reward_node(graph, samples, action, cfg, noise_power, smooth=True):
    """
    Recompensa del paradigma sobre un conjunto de muestras compartido.
    Devuelve (nodo escalar, RewardBreakdown con hinges exactos).
    """
    action = _action_node(graph, action)
    c_b = rate_node(graph, samples.h_b, action, noise_power)
    c_e = rate_node(graph, samples.h_e, action, noise_power)
    breakdown = _breakdown(cfg, graph.value(c_b), graph.value(c_e))

    secrecy = hinge_node(graph, c_b - c_e, smooth, cfg.temperature)
    excess = hinge_node(graph, c_e - cfg.c_eve, smooth, cfg.temperature)
    if cfg.paradigm == Paradigm.ROBUST:
        reward = graph.reduce('min', secrecy - excess)
    elif cfg.paradigm == Paradigm.CHANCE and breakdown.satisfaction_prob >= cfg.p_eve:
        reward = graph.mean(secrecy)
    elif cfg.paradigm == Paradigm.CHANCE:
        reward = graph.mean(secrecy) - graph.mean(excess)
    else:
        reward = graph.mean(secrecy - excess)
    return reward, breakdown


def _breakdown(cfg, c_b, c_e):
    c_b = np.atleast_1d(c_b)
    c_e = np.atleast_1d(c_e)
    secrecy = np.maximum(c_b - c_e, 0.0)
    excess = np.maximum(c_e - cfg.c_eve, 0.0)
    per_sample = secrecy - excess
    satisfaction = float(np.mean(c_e <= cfg.c_eve))
    if cfg.paradigm == Paradigm.ROBUST:
        reward = float(np.min(per_sample))
    elif cfg.paradigm == Paradigm.CHANCE and satisfaction >= cfg.p_eve:
        reward = float(np.mean(secrecy))
    elif cfg.paradigm == Paradigm.CHANCE:
        reward = float(np.mean(secrecy) - np.mean(excess))
    else:
        reward = float(np.mean(per_sample))
    return RewardBreakdown(cfg.paradigm.value, reward, float(np.mean(secrecy)), float(np.mean(excess)),
                           satisfaction, float(np.min(per_sample)))


def paradigm_samples(nominal, scenario, uncertainty, cfg, rng_seed, n_samples, threads=1):
    """Muestras del paradigma: el determinista ignora la incertidumbre y usa solo el nominal"""
    if n_samples < 1:
        raise ValueError("se requiere al menos una muestra Monte Carlo")
    if cfg.paradigm == Paradigm.DETERMINISTIC:
        return ChannelSamples.from_pairs([nominal])
    return draw_samples(nominal, scenario, uncertainty, n_samples, rng_seed, threads)


def paradigm_reward(nominal, scenario, uncertainty, action, cfg, rng_seed, n_samples=None,
                    samples=None, threads=1):
    """Recompensa del paradigma (hinges exactos). `samples` permite compartir el conjunto Monte Carlo."""
    if samples is None:
        n = cfg.mc_samples_train if n_samples is None else n_samples
        samples = paradigm_samples(nominal, scenario, uncertainty, cfg, rng_seed, n, threads)
    if len(samples) < 1:
        raise ValueError("se requiere al menos una muestra Monte Carlo")
    if isinstance(action, BeamformingAction):
        action = action.to_vector()
    graph = Graph()
    c_b = rate_node(graph, samples.h_b, graph.constant(action), scenario.noise_power)
    c_e = rate_node(graph, samples.h_e, graph.constant(action), scenario.noise_power)
    return _breakdown(cfg, graph.value(c_b), graph.value(c_e))
