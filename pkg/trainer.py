"""
Entrenamiento actor-crítico de un paso sobre escenarios aleatorizados
Cada época: un escenario nuevo, una acción exploratoria, su recompensa por paradigma,
una actualización del crítico y una del actor. Incluye evaluación, latencia y comparación pareada.
"""
import hashlib
import json
import logging
import os
import time
from collections import deque
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from datetime import datetime

import numpy as np
import pandas as pd

from channel import MAX_ALTITUDE_M, Scenario, UncertaintyModel, nominal_channel
from diffusion import DiffusionSchedule, SamplerMode, policy_action, policy_loss
from errors import ConfigError, NumericalAbort
from gradcore import Graph
from nets import NetworkConfig, VARIANTS, bind, critic_forward, init_parameters, save_parameters
from secrecy import ParadigmConfig, action_dim, paradigm_reward
from utils.seeding import derive_seed, make_rng
from utils.stats import box_stats
from version import __version__

logger = logging.getLogger(__name__)

# flujos de semillas derivadas de master_seed
STREAM_ACTOR_INIT = 1
STREAM_CRITIC_INIT = 2
STREAM_TRAIN = 11
STREAM_EVAL = 12
STREAM_ACTION = 13
STREAM_REWARD = 14
STREAM_BATCH = 15
STREAM_ACTOR_LOSS = 16
STREAM_FINAL_EVAL = 17
STREAM_PREFILL = 18

METRICS_BASE_COLUMNS = ('epoch', 'reward', 'critic_loss', 'actor_loss', 'eval_reward', 'iter_seconds')
TIMING_COLUMNS = ('epoch', 'iter_seconds', 'elapsed_seconds')
N_EXPERT_COLUMNS = 4
SUMMARY_WINDOW = 50
WARMUP_ITERATIONS = 5


# ----------------------------------------------------------------------
# configuración
# ----------------------------------------------------------------------
@dataclass(frozen=True)
class RandomizationRanges:
    """Caja uniforme alrededor de las posiciones nominales de UAV y Eve"""
    horizontal_m: float = 20.0
    vertical_m: float = 30.0

    def __post_init__(self):
        if self.horizontal_m < 0:
            raise ConfigError('randomization.horizontal_m', "debe ser >= 0")
        if self.vertical_m < 0:
            raise ConfigError('randomization.vertical_m', "debe ser >= 0")


@dataclass(frozen=True)
class StateScaling:
    """Constantes fijas de estandarización del estado (media cero, escala constante)"""
    channel_scale: float = 6e-5
    position_sigma_scale: float = 2.0
    csi_sigma_scale: float = 0.05
    aoa_sigma_scale: float = 0.02

    def __post_init__(self):
        for name in ('channel_scale', 'position_sigma_scale', 'csi_sigma_scale', 'aoa_sigma_scale'):
            if getattr(self, name) <= 0:
                raise ConfigError(f'state.{name}', "debe ser > 0")

    @property
    def sigma_scales(self):
        return np.array([self.position_sigma_scale, self.csi_sigma_scale, self.aoa_sigma_scale])


@dataclass(frozen=True)
class TrainingConfig:
    epochs: int = 2000
    learning_rate: float = 1e-4
    batch_size: int = 64
    replay_capacity: int = 10000
    soft_update_tau: float = 0.005
    paradigm: ParadigmConfig = field(default_factory=ParadigmConfig)
    actor_variant: str = 'moe_transformer_diffusion'
    master_seed: int = 0
    scenario: Scenario = field(default_factory=Scenario)
    uncertainty: UncertaintyModel = field(default_factory=UncertaintyModel)
    uncertainty_levels: tuple = (1.0,)
    randomization: RandomizationRanges = field(default_factory=RandomizationRanges)
    diffusion: DiffusionSchedule = field(default_factory=DiffusionSchedule)
    network: NetworkConfig = field(default_factory=NetworkConfig)
    state: StateScaling = field(default_factory=StateScaling)
    eval_every: int = 20
    eval_episodes: int = 16
    grad_clip_norm: float = None
    entropy_coef: float = 0.01
    log_timing: bool = False

    def __post_init__(self):
        if int(self.epochs) < 1:
            raise ConfigError('training.epochs', f"debe ser >= 1, recibido {self.epochs}")
        if self.learning_rate < 0:
            raise ConfigError('training.learning_rate', "debe ser >= 0")
        if int(self.batch_size) < 1:
            raise ConfigError('training.batch_size', "debe ser >= 1")
        if self.batch_size > self.replay_capacity:
            raise ConfigError('training.batch_size',
                              f"{self.batch_size} supera replay_capacity {self.replay_capacity}")
        if not 0.0 < self.soft_update_tau <= 1.0:
            raise ConfigError('training.soft_update_tau', f"debe estar en (0, 1], recibido {self.soft_update_tau}")
        if self.actor_variant not in VARIANTS:
            raise ConfigError('training.actor_variant',
                              f"variante desconocida '{self.actor_variant}' (opciones: {', '.join(VARIANTS)})")
        if int(self.master_seed) < 0:
            raise ConfigError('training.master_seed', "debe ser >= 0")
        if not self.uncertainty_levels or any(level < 0 for level in self.uncertainty_levels):
            raise ConfigError('training.uncertainty_levels', "se requiere al menos un nivel >= 0")
        if int(self.eval_every) < 1:
            raise ConfigError('training.eval_every', "debe ser >= 1")
        if int(self.eval_episodes) < 1:
            raise ConfigError('training.eval_episodes', "debe ser >= 1")
        if self.grad_clip_norm is not None and self.grad_clip_norm <= 0:
            raise ConfigError('training.grad_clip_norm', "debe ser > 0 o null")
        if self.entropy_coef < 0:
            raise ConfigError('training.entropy_coef', "debe ser >= 0")
        if self.network.n_steps != self.diffusion.steps:
            raise ConfigError('network.n_steps',
                              f"{self.network.n_steps} difiere de diffusion.steps {self.diffusion.steps}")
        # las dimensiones de entrada/salida salen de la geometría
        dims = dict(state_dim=state_dim(self.scenario), action_dim=action_dim(self.scenario.bs_array.n_elements))
        if (self.network.state_dim, self.network.action_dim) != (dims['state_dim'], dims['action_dim']):
            object.__setattr__(self, 'network', replace(self.network, **dims))
        object.__setattr__(self, 'uncertainty_levels', tuple(float(x) for x in self.uncertainty_levels))

    def with_seed(self, seed):
        return replace(self, master_seed=int(seed))

    def with_variant(self, variant):
        return replace(self, actor_variant=variant)


def state_dim(scenario):
    rx, tx = scenario.uav_array.n_elements, scenario.bs_array.n_elements
    return 2 * 2 * rx * tx + 3


# ----------------------------------------------------------------------
# estado y episodios
# ----------------------------------------------------------------------
def make_state(nominal, uncertainty, scaling=None):
    """
    [Re h_b, Im h_b, Re h_e, Im h_e] / channel_scale seguido de las tres sigmas / sus escalas.
    Canal nulo e incertidumbre nula dan el vector cero.
    """
    scaling = scaling or StateScaling()
    channel = np.concatenate([nominal.h_b.re.ravel(), nominal.h_b.im.ravel(),
                              nominal.h_e.re.ravel(), nominal.h_e.im.ravel()]) / scaling.channel_scale
    sigmas = uncertainty.as_vector() / scaling.sigma_scales
    return np.concatenate([channel, sigmas]).astype(np.float64)


@dataclass
class Episode:
    scenario: Scenario
    uncertainty: UncertaintyModel
    nominal: object
    state: np.ndarray
    level: float


def _jitter(position, rng, ranges):
    x, y, z = position
    dx, dy = rng.uniform(-ranges.horizontal_m, ranges.horizontal_m, size=2)
    dz = rng.uniform(-ranges.vertical_m, ranges.vertical_m)
    return (x + dx, y + dy, float(np.clip(z + dz, 1.0, MAX_ALTITUDE_M)))


def randomize_scenario(scenario, ranges, rng):
    """Posiciones de UAV y Eve uniformes en la caja configurada; la BS no se mueve"""
    return scenario.with_positions(_jitter(scenario.uav_position, rng, ranges),
                                   _jitter(scenario.eve_position, rng, ranges))


def draw_episode(config, rng_seed, level=None):
    rng = np.random.default_rng(int(rng_seed))
    scenario = randomize_scenario(config.scenario, config.randomization, rng)
    if level is None:
        level = float(config.uncertainty_levels[rng.integers(len(config.uncertainty_levels))])
    uncertainty = config.uncertainty.scaled(level)
    nominal = nominal_channel(scenario, derive_seed(rng_seed, 1))
    return Episode(scenario, uncertainty, nominal, make_state(nominal, uncertainty, config.state), level)


# ----------------------------------------------------------------------
# replay y optimizador
# ----------------------------------------------------------------------
@dataclass
class Transition:
    state: np.ndarray
    action: np.ndarray
    reward: float

    def __post_init__(self):
        self.state = np.asarray(self.state, dtype=np.float64)
        self.action = np.asarray(self.action, dtype=np.float64)
        self.reward = float(self.reward)
        for name, value in (('state', self.state), ('action', self.action), ('reward', self.reward)):
            if not np.all(np.isfinite(value)):
                raise NumericalAbort(None, f'transición.{name}', value if name == 'reward' else 'nan/inf')


@dataclass
class ReplayBatch:
    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray


class ReplayBuffer:
    """Memoria FIFO de capacidad fija"""

    def __init__(self, capacity):
        if capacity < 1:
            raise ValueError("capacity debe ser >= 1")
        self.capacity = int(capacity)
        self._items = deque(maxlen=self.capacity)

    def __len__(self):
        return len(self._items)

    def add(self, transition):
        self._items.append(transition)

    def transitions(self):
        return list(self._items)

    def sample(self, batch_size, rng):
        """Lote uniforme sin reemplazo (todo el buffer si tiene menos de batch_size)"""
        if not self._items:
            raise ValueError("el buffer de replay está vacío")
        size = min(int(batch_size), len(self._items))
        picks = rng.choice(len(self._items), size=size, replace=False)
        items = [self._items[i] for i in picks]
        return ReplayBatch(np.stack([t.state for t in items]), np.stack([t.action for t in items]),
                           np.array([t.reward for t in items], dtype=np.float64))


class Adam:
    """Momentos adaptativos (0.9, 0.999), eps 1e-8, sin weight decay; recorte global opcional"""

    def __init__(self, learning_rate, betas=(0.9, 0.999), eps=1e-8, clip_norm=None):
        self.learning_rate = float(learning_rate)
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.clip_norm = clip_norm
        self.t = 0
        self._m = {}
        self._v = {}

    def step(self, tensors, grads):
        """Actualiza `tensors` en su lugar; devuelve la norma global del gradiente"""
        self.t += 1
        norm = float(np.sqrt(sum(float(np.sum(g * g)) for g in grads.values())))
        scale = 1.0
        if self.clip_norm is not None and norm > self.clip_norm:
            scale = self.clip_norm / norm
        for name, grad in grads.items():
            g = grad * scale
            m = self._m.get(name, np.zeros_like(g))
            v = self._v.get(name, np.zeros_like(g))
            m = self.beta1 * m + (1.0 - self.beta1) * g
            v = self.beta2 * v + (1.0 - self.beta2) * g * g
            self._m[name], self._v[name] = m, v
            m_hat = m / (1.0 - self.beta1 ** self.t)
            v_hat = v / (1.0 - self.beta2 ** self.t)
            tensors[name] -= self.learning_rate * m_hat / (np.sqrt(v_hat) + self.eps)
        return norm


def soft_update(target, source, tau):
    """target <- tau * source + (1 - tau) * target; sin efecto sobre el aprendizaje con descuento 0"""
    if not 0.0 < tau <= 1.0:
        raise ValueError("tau debe estar en (0, 1]")
    for name, value in source.tensors.items():
        target.tensors[name] = tau * value + (1.0 - tau) * target.tensors[name]
    return target


# ----------------------------------------------------------------------
# bitácora de métricas
# ----------------------------------------------------------------------
class MetricsLog:
    """Una fila por época; los tiempos de reloj van a una tabla aparte"""

    def __init__(self, n_experts=N_EXPERT_COLUMNS, log_timing=False):
        self.n_experts = max(int(n_experts), N_EXPERT_COLUMNS)
        self.log_timing = log_timing
        self.rows = []
        self.timing = []

    @property
    def columns(self):
        return list(METRICS_BASE_COLUMNS) + [f'expert_frac_{i}' for i in range(self.n_experts)]

    def __len__(self):
        return len(self.rows)

    def append(self, epoch, reward, critic_loss, actor_loss, iter_seconds, elapsed_seconds,
               eval_reward=None, fractions=None):
        if self.timing and elapsed_seconds < self.timing[-1]['elapsed_seconds']:
            raise ValueError("los tiempos acumulados deben ser monótonos")
        row = {
            'epoch': int(epoch),
            'reward': float(reward),
            'critic_loss': float(critic_loss),
            'actor_loss': float(actor_loss),
            'eval_reward': np.nan if eval_reward is None else float(eval_reward),
            'iter_seconds': float(iter_seconds) if self.log_timing else np.nan,
        }
        for i in range(self.n_experts):
            row[f'expert_frac_{i}'] = np.nan if fractions is None or i >= len(fractions) else float(fractions[i])
        self.rows.append(row)
        self.timing.append({'epoch': int(epoch), 'iter_seconds': float(iter_seconds),
                            'elapsed_seconds': float(elapsed_seconds)})

    def to_frame(self):
        return pd.DataFrame(self.rows, columns=self.columns)

    def timing_frame(self):
        return pd.DataFrame(self.timing, columns=list(TIMING_COLUMNS))

    def write_csv(self, path):
        self.to_frame().to_csv(path, index=False)

    def write_timing_csv(self, path):
        self.timing_frame().to_csv(path, index=False)

    def summary(self):
        frame = self.to_frame()
        window = min(SUMMARY_WINDOW, len(frame))
        evals = frame['eval_reward'].dropna()
        summary = {
            'epochs': int(len(frame)),
            'first_window_reward': float(frame['reward'].head(window).mean()) if window else None,
            'last_window_reward': float(frame['reward'].tail(window).mean()) if window else None,
            'final_eval_reward': float(evals.iloc[-1]) if len(evals) else None,
            'best_eval_reward': float(evals.max()) if len(evals) else None,
        }
        fractions = frame[[c for c in frame.columns if c.startswith('expert_frac_')]].dropna(how='all')
        if len(fractions):
            summary['mean_expert_fractions'] = [float(x) for x in fractions.mean().fillna(0.0)]
        return summary


# ----------------------------------------------------------------------
# evaluación
# ----------------------------------------------------------------------
@dataclass
class EvaluationReport:
    rewards: np.ndarray
    breakdowns: list = field(default_factory=list)
    levels: list = field(default_factory=list)

    @property
    def summary(self):
        return box_stats(self.rewards)

    @property
    def mean(self):
        return float(np.mean(self.rewards))

    @property
    def variance(self):
        return float(np.var(self.rewards))

    @property
    def minimum(self):
        return float(np.min(self.rewards))

    def to_frame(self):
        rows = []
        for i, breakdown in enumerate(self.breakdowns):
            row = {'episode': i, 'level': self.levels[i] if i < len(self.levels) else np.nan}
            row.update(breakdown.to_row())
            rows.append(row)
        return pd.DataFrame(rows)


def zero_policy(config):
    """Política de referencia: w = v = 0 (recompensa nula en todo paradigma)"""
    size = config.network.action_dim

    def policy(state):
        return np.zeros(size)
    return policy


def evaluate(parameters, n_episodes, config, rng_seed, level=None, paradigm=None, threads=1):
    """
    Muestreador determinista sobre escenarios frescos, recompensa con mc_samples_eval.
    `parameters` es un ActorParameters o un callable estado -> vector de acción.
    Misma semilla implica mismos escenarios y muestras para cualquier política o paradigma.
    """
    if n_episodes < 1:
        raise ValueError("n_episodes debe ser >= 1")
    cfg = config.paradigm if paradigm is None else paradigm
    rewards, breakdowns, levels = [], [], []
    for i in range(int(n_episodes)):
        episode = draw_episode(config, derive_seed(rng_seed, i, 0), level)
        if callable(parameters):
            action = np.asarray(parameters(episode.state), dtype=np.float64)
        else:
            action = policy_action(parameters, config.diffusion, episode.state, SamplerMode.DETERMINISTIC,
                                   derive_seed(rng_seed, i, 1), episode.scenario.tx_power)
        breakdown = paradigm_reward(episode.nominal, episode.scenario, episode.uncertainty, action, cfg,
                                    derive_seed(rng_seed, i, 2), n_samples=cfg.mc_samples_eval, threads=threads)
        rewards.append(breakdown.reward)
        breakdowns.append(breakdown)
        levels.append(episode.level)
    return EvaluationReport(np.array(rewards, dtype=np.float64), breakdowns, levels)


def uncertainty_sweep(parameters, config, levels=(0.0, 1.0, 2.0, 4.0), n_episodes=16, rng_seed=0, threads=1):
    """Recompensa de inferencia por múltiplo de incertidumbre; episodios pareados entre niveles"""
    rows = []
    for level in levels:
        report = evaluate(parameters, n_episodes, config, rng_seed, level=float(level), threads=threads)
        rows.append({'level': float(level), **report.summary})
        logger.info("[EVAL] nivel %.2f: media %.4f, varianza %.4f", level, report.mean, report.variance)
    return pd.DataFrame(rows)


# ----------------------------------------------------------------------
# bucle de entrenamiento
# ----------------------------------------------------------------------
@dataclass
class StepResult:
    epoch: int
    reward: float
    critic_loss: float
    actor_loss: float
    seconds: float
    expert_fractions: np.ndarray = None
    batch_size: int = 0


@dataclass
class TrainResult:
    config: TrainingConfig
    metrics: MetricsLog
    actor: object
    critic: object
    replay_size: int = 0


class Trainer:
    """Estado mutable del entrenamiento: parámetros, optimizadores, replay y época actual"""

    def __init__(self, config, threads=1):
        self.config = config
        self.threads = max(1, int(threads))
        seed = config.master_seed
        self.actor = init_parameters(config.actor_variant, derive_seed(seed, STREAM_ACTOR_INIT), config.network)
        self.critic = init_parameters('critic', derive_seed(seed, STREAM_CRITIC_INIT), config.network)
        self.target_critic = self.critic.copy()
        self.actor_optimizer = Adam(config.learning_rate, clip_norm=config.grad_clip_norm)
        self.critic_optimizer = Adam(config.learning_rate, clip_norm=config.grad_clip_norm)
        self.replay = ReplayBuffer(config.replay_capacity)
        n_experts = config.network.n_experts if config.actor_variant == 'moe_transformer_diffusion' else 0
        self.metrics = MetricsLog(n_experts, config.log_timing)
        self.epoch = 0
        self.eval_seed = derive_seed(seed, STREAM_EVAL)

    def _check(self, name, value):
        if not np.isfinite(value):
            logger.error("[ABORT] %s no finita en la época %d: %s", name, self.epoch, value)
            raise NumericalAbort(self.epoch, name, value)

    def update_critic(self, batch):
        """Regresión de ambos críticos a las recompensas (descuento 0); devuelve la pérdida previa"""
        graph = Graph()
        nodes = bind(graph, self.critic, trainable=True)
        q1, q2 = critic_forward(graph, nodes, self.critic.config, batch.states, batch.actions)
        target = graph.constant(batch.rewards)
        loss = graph.mean(graph.square(q1 - target)) + graph.mean(graph.square(q2 - target))
        value = float(graph.value(loss))
        self._check('critic_loss', value)
        graph.backward(loss)
        self.critic_optimizer.step(self.critic.tensors, {name: graph.grad(node) for name, node in nodes.items()})
        return value

    def update_actor(self, batch):
        cfg = self.config
        result = policy_loss(self.actor, self.critic, cfg.diffusion, batch.states,
                             derive_seed(cfg.master_seed, STREAM_ACTOR_LOSS, self.epoch),
                             cfg.scenario.tx_power, cfg.entropy_coef)
        self._check('actor_loss', result.loss)
        self.actor_optimizer.step(self.actor.tensors, result.grads)
        return result

    def collect(self, episode_seed, action_seed, reward_seed):
        """Una interacción con el entorno: episodio, acción exploratoria y recompensa, guardadas en el replay"""
        cfg = self.config
        episode = draw_episode(cfg, episode_seed)
        action = policy_action(self.actor, cfg.diffusion, episode.state, SamplerMode.EXPLORATORY,
                               action_seed, episode.scenario.tx_power)
        breakdown = paradigm_reward(episode.nominal, episode.scenario, episode.uncertainty, action, cfg.paradigm,
                                    reward_seed, n_samples=cfg.paradigm.mc_samples_train, threads=self.threads)
        self._check('reward', breakdown.reward)
        self.replay.add(Transition(episode.state, action, breakdown.reward))
        return breakdown

    def prefill(self, n_transitions):
        """Interacciones sin actualización, de un flujo de semillas propio (no altera el de entrenamiento)"""
        seed = self.config.master_seed
        for i in range(int(n_transitions)):
            self.collect(derive_seed(seed, STREAM_PREFILL, i, 0), derive_seed(seed, STREAM_PREFILL, i, 1),
                         derive_seed(seed, STREAM_PREFILL, i, 2))
        return len(self.replay)

    def step(self):
        """Una iteración completa: interacción, actualización del crítico y del actor"""
        cfg = self.config
        seed = cfg.master_seed
        started = time.perf_counter()
        breakdown = self.collect(derive_seed(seed, STREAM_TRAIN, self.epoch),
                                 derive_seed(seed, STREAM_ACTION, self.epoch),
                                 derive_seed(seed, STREAM_REWARD, self.epoch))

        batch = self.replay.sample(cfg.batch_size, make_rng(seed, STREAM_BATCH, self.epoch))
        critic_loss = self.update_critic(batch)
        policy = self.update_actor(batch)
        soft_update(self.target_critic, self.critic, cfg.soft_update_tau)

        result = StepResult(self.epoch, breakdown.reward, critic_loss, policy.loss,
                            time.perf_counter() - started, policy.expert_fractions, len(batch.rewards))
        self.epoch += 1
        return result

    def evaluate(self, n_episodes=None):
        return evaluate(self.actor, n_episodes or self.config.eval_episodes, self.config, self.eval_seed,
                        threads=self.threads)

    def run(self, epochs=None):
        cfg = self.config
        epochs = cfg.epochs if epochs is None else int(epochs)
        elapsed = 0.0
        for _ in range(epochs):
            step = self.step()
            elapsed += step.seconds
            eval_reward = None
            if self.epoch % cfg.eval_every == 0 or self.epoch == epochs:
                eval_reward = self.evaluate().mean
                logger.info("[EVAL] %s época %d/%d: recompensa de inferencia %.4f",
                            cfg.actor_variant, self.epoch, epochs, eval_reward)
            self.metrics.append(step.epoch, step.reward, step.critic_loss, step.actor_loss, step.seconds,
                                elapsed, eval_reward, step.expert_fractions)
            logger.debug("[TRAIN] época %d: recompensa %.4f, crítico %.5f, actor %.5f (%.3fs)",
                         step.epoch, step.reward, step.critic_loss, step.actor_loss, step.seconds)
        return TrainResult(cfg, self.metrics, self.actor, self.critic, len(self.replay))


def train(config, threads=1):
    """Entrena `config.epochs` épocas; determinista dada master_seed"""
    logger.info("[TRAIN] %s, paradigma %s, %d épocas, semilla %d", config.actor_variant,
                config.paradigm.paradigm.value, config.epochs, config.master_seed)
    return Trainer(config, threads).run()


# ----------------------------------------------------------------------
# latencia
# ----------------------------------------------------------------------
@dataclass
class LatencyReport:
    variant: str
    mean_seconds: float
    std_seconds: float
    samples: list = field(default_factory=list)
    batch_sizes: list = field(default_factory=list)


def measure_latency(config, n_iterations, warmup=WARMUP_ITERATIONS, threads=1):
    """
    Segundos por iteración de entrenamiento completa, tras `warmup` iteraciones descartadas.
    El replay se llena antes hasta batch_size, así toda iteración medida procesa un lote completo.
    """
    if n_iterations < 10:
        raise ValueError("n_iterations debe ser >= 10")
    trainer = Trainer(config, threads)
    trainer.prefill(min(config.batch_size, config.replay_capacity))
    for _ in range(warmup):
        trainer.step()
    steps = [trainer.step() for _ in range(int(n_iterations))]
    samples = [s.seconds for s in steps]
    report = LatencyReport(config.actor_variant, float(np.mean(samples)), float(np.std(samples)), samples,
                           [s.batch_size for s in steps])
    logger.info("[LATENCY] %s: %.5f +- %.5f s/iteración (lote %d)", report.variant, report.mean_seconds,
                report.std_seconds, config.batch_size)
    return report


def latency_table(reports, baseline='mlp_diffusion'):
    """Tabla por variante con el sobrecosto porcentual respecto a `baseline` (si está presente)"""
    base = next((r.mean_seconds for r in reports if r.variant == baseline), None)
    rows = []
    for r in reports:
        overhead = np.nan if base is None else 100.0 * (r.mean_seconds - base) / base
        rows.append({'variant': r.variant, 'mean_seconds': r.mean_seconds, 'std_seconds': r.std_seconds,
                     'overhead_pct': overhead, 'batch_size': min(r.batch_sizes) if r.batch_sizes else np.nan})
    return pd.DataFrame(rows, columns=['variant', 'mean_seconds', 'std_seconds', 'overhead_pct', 'batch_size'])


# ----------------------------------------------------------------------
# comparación pareada
# ----------------------------------------------------------------------
COMPARE_COLUMNS = ('row_type', 'label', 'variant', 'seed', 'final_eval_reward', 'eval_variance',
                   'final_train_reward', 'wins', 'losses', 'relative_improvement')


@dataclass
class ComparisonResult:
    table: pd.DataFrame
    curves: dict  # label -> [DataFrame de métricas por semilla]
    reports: dict  # (label, seed) -> EvaluationReport


def _labels(configs):
    labels, seen = [], {}
    for cfg in configs:
        label = cfg.actor_variant
        seen[label] = seen.get(label, 0) + 1
        labels.append(label if seen[label] == 1 else f'{label}#{seen[label]}')
    return labels


def _run_job(job):
    label, config, seed = job
    result = train(config.with_seed(seed))
    report = evaluate(result.actor, config.eval_episodes, config, derive_seed(seed, STREAM_FINAL_EVAL))
    frame = result.metrics.to_frame()
    window = min(SUMMARY_WINDOW, len(frame))
    return {'label': label, 'variant': config.actor_variant, 'seed': seed, 'report': report, 'metrics': frame,
            'final_eval_reward': report.mean, 'eval_variance': report.variance,
            'final_train_reward': float(frame['reward'].tail(window).mean())}


def _relative(value, base):
    if value == base:
        return 0.0
    if base == 0:
        return np.nan
    return (value - base) / abs(base)


def compare(configs, seeds, workers=1):
    """
    Corre cada configuración con las mismas semillas (diseño pareado).
    Filas por corrida más una fila agregada por configuración con medianas, victorias/derrotas
    y mejora relativa respecto a la primera configuración.
    """
    if len(configs) < 2:
        raise ValueError("compare requiere al menos 2 configuraciones")
    seeds = [int(s) for s in seeds]
    if not seeds or len(set(seeds)) != len(seeds):
        raise ValueError("las semillas deben ser no vacías y distintas")
    reference = configs[0]
    for cfg in configs[1:]:
        if cfg.paradigm.paradigm != reference.paradigm.paradigm:
            raise ValueError(f"paradigmas distintos: {reference.paradigm.paradigm.value} vs "
                             f"{cfg.paradigm.paradigm.value}")
        if cfg.randomization != reference.randomization:
            raise ValueError("las configuraciones deben compartir los rangos de aleatorización")

    labels = _labels(configs)
    jobs = [(label, cfg, seed) for label, cfg in zip(labels, configs) for seed in seeds]
    logger.info("[COMPARE] %d configuraciones x %d semillas", len(configs), len(seeds))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as executor:
            outcomes = list(executor.map(_run_job, jobs))
    else:
        outcomes = [_run_job(job) for job in jobs]

    rows, curves, reports = [], {}, {}
    by_key = {}
    for out in outcomes:
        by_key[(out['label'], out['seed'])] = out
        curves.setdefault(out['label'], []).append(out['metrics'])
        reports[(out['label'], out['seed'])] = out['report']
        rows.append({'row_type': 'run', 'label': out['label'], 'variant': out['variant'], 'seed': str(out['seed']),
                     'final_eval_reward': out['final_eval_reward'], 'eval_variance': out['eval_variance'],
                     'final_train_reward': out['final_train_reward'],
                     'wins': np.nan, 'losses': np.nan, 'relative_improvement': np.nan})

    base_label = labels[0]
    base_median = float(np.median([by_key[(base_label, s)]['final_eval_reward'] for s in seeds]))
    for label, cfg in zip(labels, configs):
        finals = [by_key[(label, s)]['final_eval_reward'] for s in seeds]
        base = [by_key[(base_label, s)]['final_eval_reward'] for s in seeds]
        median = float(np.median(finals))
        rows.append({
            'row_type': 'aggregate', 'label': label, 'variant': cfg.actor_variant, 'seed': 'all',
            'final_eval_reward': median,
            'eval_variance': float(np.mean([by_key[(label, s)]['eval_variance'] for s in seeds])),
            'final_train_reward': float(np.median([by_key[(label, s)]['final_train_reward'] for s in seeds])),
            'wins': int(sum(f > b for f, b in zip(finals, base))),
            'losses': int(sum(f < b for f, b in zip(finals, base))),
            'relative_improvement': _relative(median, base_median),
        })
        logger.info("[COMPARE] %s: mediana %.4f (base %s %.4f)", label, median, base_label, base_median)
    return ComparisonResult(pd.DataFrame(rows, columns=list(COMPARE_COLUMNS)), curves, reports)


# ----------------------------------------------------------------------
# artefactos de corrida
# ----------------------------------------------------------------------
def canonical_hash(document):
    blob = json.dumps(document, sort_keys=True, separators=(',', ':'), default=str).encode('utf-8')
    return hashlib.sha256(blob).hexdigest()


def file_hash(path):
    with open(path, 'rb') as f:
        return hashlib.sha256(f.read()).hexdigest()


def build_manifest(config_path, config_document, seeds, variants, outputs, started_at=None):
    """Manifiesto reproducible: hash de los bytes del config, hash canónico, versión y salidas"""
    return {
        'version': __version__,
        'config_path': str(config_path) if config_path else None,
        'config_sha256': file_hash(config_path) if config_path else None,
        'config_canonical_sha256': canonical_hash(config_document),
        'seeds': [int(s) for s in seeds],
        'variants': list(variants),
        'started_at': started_at or datetime.now().isoformat(timespec='seconds'),
        'finished_at': datetime.now().isoformat(timespec='seconds'),
        'outputs': sorted(str(o) for o in outputs),
    }


def write_run(result, out_dir):
    """metrics.csv, timing.csv, summary.json y los binarios de parámetros; devuelve las rutas"""
    os.makedirs(out_dir, exist_ok=True)
    paths = {
        'metrics': os.path.join(out_dir, 'metrics.csv'),
        'timing': os.path.join(out_dir, 'timing.csv'),
        'summary': os.path.join(out_dir, 'summary.json'),
        'actor': os.path.join(out_dir, 'actor.bin'),
        'critic': os.path.join(out_dir, 'critic.bin'),
    }
    result.metrics.write_csv(paths['metrics'])
    result.metrics.write_timing_csv(paths['timing'])
    with open(paths['summary'], 'w', encoding='utf-8') as f:
        json.dump({'variant': result.config.actor_variant, 'paradigm': result.config.paradigm.paradigm.value,
                   'master_seed': result.config.master_seed, 'network': asdict(result.config.network),
                   **result.metrics.summary()}, f, indent=2)
    save_parameters(paths['actor'], result.actor)
    save_parameters(paths['critic'], result.critic)
    return paths
