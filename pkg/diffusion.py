"""
Generador de acciones por difusión (6 pasos de eliminación de ruido)
Cadena inversa, ruta diferenciable para ascender el crítico y política gaussiana de referencia.
"""
import logging
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from gradcore import Graph
from nets import DIFFUSION_VARIANTS, actor_forward, bind, critic_forward, expert_fractions
from secrecy import project_power_node

logger = logging.getLogger(__name__)

LOG_2PI = float(np.log(2.0 * np.pi))
TANH_EPS = 1e-6


@dataclass(frozen=True)
class DiffusionSchedule:
    """Calendario lineal de beta; alpha_t = 1 - beta_t, alpha_bar_t = prod(alpha)"""
    steps: int = 6
    beta_start: float = 1e-4
    beta_end: float = 0.2

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError("steps debe ser >= 1")
        if not 0.0 < self.beta_start < self.beta_end < 1.0:
            raise ValueError("se requiere 0 < beta_start < beta_end < 1")

    @property
    def betas(self):
        return np.linspace(self.beta_start, self.beta_end, self.steps)

    @property
    def alphas(self):
        return 1.0 - self.betas

    @property
    def alpha_bars(self):
        return np.cumprod(self.alphas)


class SamplerMode(str, Enum):
    EXPLORATORY = 'exploratory'
    DETERMINISTIC = 'deterministic'


@dataclass
class ChainRecord:
    """Estados x_T..x_0 (T+1) y el ruido inyectado en cada paso t = T..1"""
    mode: SamplerMode
    states: list = field(default_factory=list)
    noises: list = field(default_factory=list)


@dataclass
class PolicyLossResult:
    loss: float
    grads: dict
    actions: np.ndarray
    expert_fractions: np.ndarray = None
    balance_loss: float = 0.0


def _require_diffusion(actor):
    if actor.variant not in DIFFUSION_VARIANTS:
        raise ValueError(f"la variante '{actor.variant}' no es un actor de difusión")


def _draw_chain_noise(schedule, shape, mode, rng_seed):
    rng = np.random.default_rng(int(rng_seed))
    x_T = rng.standard_normal(shape)
    noises = []
    for t in range(schedule.steps, 0, -1):
        if mode == SamplerMode.EXPLORATORY and t > 1:
            noises.append(rng.standard_normal(shape))
        else:
            noises.append(np.zeros(shape))
    return x_T, noises


def reverse_chain(graph, nodes, actor, schedule, state, x_T, noises, mode):
    """
    Cadena inversa sobre el grafo. Para t = T..1:
    mean = (x_t - beta_t / sqrt(1 - alpha_bar_t) * eps) / sqrt(alpha_t)
    x_{t-1} = mean + sqrt(beta_t) z   (solo exploratorio y t > 1)
    Devuelve (nodo x_0, ChainRecord, reportes del gate, pérdidas de balance).
    """
    betas, alphas, alpha_bars = schedule.betas, schedule.alphas, schedule.alpha_bars
    x = graph.constant(x_T)
    record = ChainRecord(SamplerMode(mode), [x_T.copy()], [])
    reports, balances = [], []
    for i, t in enumerate(range(schedule.steps, 0, -1)):
        out = actor_forward(graph, nodes, actor.variant, actor.config, state, x, t - 1)
        reports.extend(out.gate_reports)
        if out.balance_loss is not None:
            balances.append(out.balance_loss)
        beta, alpha, alpha_bar = betas[t - 1], alphas[t - 1], alpha_bars[t - 1]
        mean = (x - out.noise * (beta / np.sqrt(1.0 - alpha_bar))) * (1.0 / np.sqrt(alpha))
        z = noises[i]
        if mode == SamplerMode.EXPLORATORY and t > 1:
            x = mean + graph.constant(np.sqrt(beta) * z)
        else:
            x = mean
        record.states.append(graph.value(x).copy())
        record.noises.append(np.array(z, copy=True))
    return x, record, reports, balances


def _finish(graph, x0, tx_power):
    return project_power_node(graph, graph.tanh(x0), tx_power)


def _state_batch(state):
    state = np.asarray(state, dtype=np.float64)
    return state[None, :] if state.ndim == 1 else state, state.ndim == 1


def sample_action(actor, schedule, state, mode, rng_seed, tx_power=1.0):
    """Acción por difusión: x_T ~ N(0, I), T pasos inversos, tanh y proyección de potencia"""
    _require_diffusion(actor)
    mode = SamplerMode(mode)
    states, single = _state_batch(state)
    shape = (states.shape[0], actor.config.action_dim)
    x_T, noises = _draw_chain_noise(schedule, shape, mode, rng_seed)
    graph = Graph()
    nodes = bind(graph, actor, trainable=False)
    x0, record, _, _ = reverse_chain(graph, nodes, actor, schedule, graph.constant(states), x_T, noises, mode)
    action = graph.value(_finish(graph, x0, tx_power)).copy()
    return (action[0] if single else action), record


def replay_chain(actor, schedule, state, record, tx_power=1.0):
    """Reproduce la acción a partir del registro de la cadena (mismo x_T y ruidos)"""
    _require_diffusion(actor)
    states, single = _state_batch(state)
    graph = Graph()
    nodes = bind(graph, actor, trainable=False)
    x0, _, _, _ = reverse_chain(graph, nodes, actor, schedule, graph.constant(states),
                                record.states[0], record.noises, record.mode)
    action = graph.value(_finish(graph, x0, tx_power)).copy()
    return action[0] if single else action


def _min_q(graph, critic_nodes, critic, state_node, action):
    q1, q2 = critic_forward(graph, critic_nodes, critic.config, state_node, action)
    batch = graph.value(q1).shape[0]
    pair = graph.concat([graph.reshape(q1, (batch, 1)), graph.reshape(q2, (batch, 1))], axis=-1)
    return graph.reduce('min', pair, axis=-1)


def _collect_grads(graph, nodes):
    return {name: graph.grad(node).copy() for name, node in nodes.items()}


def actor_loss(actor, critic, schedule, states, rng_seed, tx_power=1.0):
    """
    -mean(min(q1, q2)) en la acción exploratoria + balance MoE.
    El gradiente cruza toda la cadena hasta los parámetros del actor; el crítico queda fijo.
    """
    _require_diffusion(actor)
    states = np.atleast_2d(np.asarray(states, dtype=np.float64))
    if states.shape[0] < 1:
        raise ValueError("el lote de estados está vacío")
    shape = (states.shape[0], actor.config.action_dim)
    x_T, noises = _draw_chain_noise(schedule, shape, SamplerMode.EXPLORATORY, rng_seed)

    graph = Graph()
    nodes = bind(graph, actor, trainable=True)
    critic_nodes = bind(graph, critic, trainable=False)
    state_node = graph.constant(states)
    x0, _, reports, balances = reverse_chain(graph, nodes, actor, schedule, state_node, x_T, noises,
                                             SamplerMode.EXPLORATORY)
    action = _finish(graph, x0, tx_power)
    loss = -graph.mean(_min_q(graph, critic_nodes, critic, state_node, action))
    balance_value = 0.0
    if balances:
        balance = balances[0]
        for b in balances[1:]:
            balance = balance + b
        balance = balance * (1.0 / len(balances))
        balance_value = float(graph.value(balance))
        loss = loss + balance
    graph.backward(loss)
    return PolicyLossResult(float(graph.value(loss)), _collect_grads(graph, nodes),
                            graph.value(action).copy(), expert_fractions(reports), balance_value)


# ----------------------------------------------------------------------
# política gaussiana (referencia SAC)
# ----------------------------------------------------------------------
def _gaussian_graph(graph, nodes, actor, state_node, mode, rng_seed, tx_power):
    out = actor_forward(graph, nodes, actor.variant, actor.config, state_node)
    shape = graph.value(out.mean).shape
    if SamplerMode(mode) == SamplerMode.EXPLORATORY:
        z = np.random.default_rng(int(rng_seed)).standard_normal(shape)
        pre = out.mean + graph.exp(out.log_std) * graph.constant(z)
    else:
        z = np.zeros(shape)
        pre = out.mean
    squashed = graph.tanh(pre)
    return out, z, pre, squashed, project_power_node(graph, squashed, tx_power)


def gaussian_action(actor, state, mode, rng_seed, tx_power=1.0, return_pre_tanh=False):
    """Exploratorio: tanh(mean + std z); determinista: tanh(mean); luego proyección de potencia"""
    if actor.variant != 'gaussian':
        raise ValueError(f"gaussian_action requiere la variante gaussiana, recibida '{actor.variant}'")
    states, single = _state_batch(state)
    graph = Graph()
    nodes = bind(graph, actor, trainable=False)
    _, _, pre, _, action = _gaussian_graph(graph, nodes, actor, graph.constant(states), mode, rng_seed, tx_power)
    action = graph.value(action).copy()
    if single:
        action = action[0]
    if return_pre_tanh:
        pre_values = graph.value(pre).copy()
        return action, (pre_values[0] if single else pre_values)
    return action


def gaussian_actor_loss(actor, critic, states, rng_seed, tx_power=1.0, entropy_coef=0.01):
    """-mean(min(q1, q2)) + entropy_coef * mean(log pi) con corrección de tanh"""
    if actor.variant != 'gaussian':
        raise ValueError(f"gaussian_actor_loss requiere la variante gaussiana, recibida '{actor.variant}'")
    states = np.atleast_2d(np.asarray(states, dtype=np.float64))
    if states.shape[0] < 1:
        raise ValueError("el lote de estados está vacío")
    graph = Graph()
    nodes = bind(graph, actor, trainable=True)
    critic_nodes = bind(graph, critic, trainable=False)
    state_node = graph.constant(states)
    out, z, _, squashed, action = _gaussian_graph(graph, nodes, actor, state_node, SamplerMode.EXPLORATORY,
                                                  rng_seed, tx_power)
    loss = -graph.mean(_min_q(graph, critic_nodes, critic, state_node, action))
    if entropy_coef > 0:
        correction = graph.log(1.0 - graph.square(squashed) + TANH_EPS)
        per_dim = graph.constant(-0.5 * z * z - 0.5 * LOG_2PI) - out.log_std - correction
        log_prob = graph.sum(per_dim, axis=-1)
        loss = loss + graph.mean(log_prob) * entropy_coef
    graph.backward(loss)
    return PolicyLossResult(float(graph.value(loss)), _collect_grads(graph, nodes), graph.value(action).copy())


def policy_action(actor, schedule, state, mode, rng_seed, tx_power=1.0):
    """Acción de cualquier variante de actor"""
    if actor.variant == 'gaussian':
        return gaussian_action(actor, state, mode, rng_seed, tx_power)
    action, _ = sample_action(actor, schedule, state, mode, rng_seed, tx_power)
    return action


def policy_loss(actor, critic, schedule, states, rng_seed, tx_power=1.0, entropy_coef=0.01):
    if actor.variant == 'gaussian':
        return gaussian_actor_loss(actor, critic, states, rng_seed, tx_power, entropy_coef)
    return actor_loss(actor, critic, schedule, states, rng_seed, tx_power)
