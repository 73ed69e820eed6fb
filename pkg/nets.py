"""
Redes del actor y del crítico
- mlp_diffusion: actor de difusión MLP (referencia GDM)
- transformer_diffusion: actor de difusión transformer denso
- moe_transformer_diffusion: actor de difusión MoE-transformer (propuesta)
- gaussian: política gaussiana estilo SAC
- critic: dos redes Q gemelas
"""
import json
import logging
import struct
from dataclasses import asdict, dataclass, field

import numpy as np

from gradcore import Graph

logger = logging.getLogger(__name__)

DIFFUSION_VARIANTS = ('mlp_diffusion', 'transformer_diffusion', 'moe_transformer_diffusion')
VARIANTS = DIFFUSION_VARIANTS + ('gaussian',)
TRANSFORMER_VARIANTS = ('transformer_diffusion', 'moe_transformer_diffusion')

MAGIC = b'RBPARAM1'
N_TOKENS = 3  # [estado, paso, acción]
ACTION_TOKEN = 2
LN_EPS = 1e-5


@dataclass(frozen=True)
class NetworkConfig:
    state_dim: int = 387
    action_dim: int = 64
    model_dim: int = 256
    n_heads: int = 4
    n_blocks: int = 2
    n_experts: int = 4
    top_k: int = 2
    expert_hidden: int = 512
    mlp_hidden: int = 256
    critic_hidden: int = 256
    step_features: int = 16
    n_steps: int = 6
    log_std_min: float = -5.0
    log_std_max: float = 2.0
    balance_coef: float = 0.01

    def __post_init__(self):
        if self.model_dim % self.n_heads != 0:
            raise ValueError(f"model_dim {self.model_dim} no es divisible por n_heads {self.n_heads}")
        if not 1 <= self.top_k <= self.n_experts:
            raise ValueError(f"top_k debe estar en [1, {self.n_experts}]")
        if self.step_features % 2 != 0:
            raise ValueError("step_features debe ser par (pares seno/coseno)")

    @property
    def head_dim(self):
        return self.model_dim // self.n_heads

    @classmethod
    def tiny(cls, width=8, state_dim=10, action_dim=8, **overrides):
        """Red angosta para verificaciones de gradiente"""
        params = dict(state_dim=state_dim, action_dim=action_dim, model_dim=width, n_heads=2,
                      expert_hidden=2 * width, mlp_hidden=width, critic_hidden=width, step_features=4)
        params.update(overrides)
        return cls(**params)


# ----------------------------------------------------------------------
# contenedores de parámetros
# ----------------------------------------------------------------------
@dataclass
class ParameterSet:
    variant: str
    config: NetworkConfig
    tensors: dict = field(default_factory=dict)

    def copy(self):
        return type(self)(self.variant, self.config, {k: v.copy() for k, v in self.tensors.items()})

    @property
    def n_parameters(self):
        return int(sum(v.size for v in self.tensors.values()))

    def equals(self, other):
        return self.variant == other.variant and self.tensors.keys() == other.tensors.keys() and \
            all(np.array_equal(self.tensors[k], other.tensors[k]) for k in self.tensors)


class ActorParameters(ParameterSet):
    """Pesos de un actor (variante en VARIANTS)"""


class CriticParameters(ParameterSet):
    """Pesos de los dos críticos; prefijos 'q1.' y 'q2.'"""


@dataclass
class LinearLayer:
    weight: object  # [out, in]
    bias: object    # [out]


@dataclass
class MultiHeadAttention:
    n_heads: int
    query: LinearLayer
    key: LinearLayer
    value: LinearLayer
    output: LinearLayer


@dataclass
class MoELayer:
    gate: LinearLayer
    experts: list  # [(LinearLayer, LinearLayer)]
    top_k: int


@dataclass
class GateReport:
    counts: np.ndarray       # activaciones por experto
    selected: np.ndarray     # [N, top_k] índices elegidos
    weights: np.ndarray      # [N, top_k] pesos de combinación
    mean_probs: object       # nodo [E]: probabilidad media del gate
    balance: object          # nodo escalar: desviación cuadrática media respecto a 1/E


@dataclass
class ActorOutput:
    noise: object = None     # diffusion: ruido predicho [B, A]
    mean: object = None      # gaussian
    log_std: object = None   # gaussian
    balance_loss: object = None
    gate_reports: list = field(default_factory=list)


# ----------------------------------------------------------------------
# tabla de formas
# ----------------------------------------------------------------------
def _linear_spec(name, n_in, n_out):
    return [(f'{name}.weight', (n_out, n_in), 'weight'), (f'{name}.bias', (n_out,), 'bias')]


def _norm_spec(name, dim):
    return [(f'{name}.gain', (dim,), 'gain'), (f'{name}.bias', (dim,), 'bias')]


def parameter_specs(variant, config):
    """Lista ordenada (nombre, forma, tipo) de los tensores de la variante"""
    c = config
    specs = []
    if variant == 'critic':
        for q in ('q1', 'q2'):
            specs += _linear_spec(f'{q}.l0', c.state_dim + c.action_dim, c.critic_hidden)
            specs += _linear_spec(f'{q}.l1', c.critic_hidden, c.critic_hidden)
            specs += _linear_spec(f'{q}.l2', c.critic_hidden, 1)
        return specs
    if variant not in VARIANTS:
        raise ValueError(f"variante desconocida: {variant}")
    if variant == 'gaussian':
        specs += _linear_spec('embed.state', c.state_dim, c.mlp_hidden)
        specs += _linear_spec('mlp.0', c.mlp_hidden, c.mlp_hidden)
        specs += _linear_spec('head', c.mlp_hidden, 2 * c.action_dim)
        return specs
    width = c.mlp_hidden if variant == 'mlp_diffusion' else c.model_dim
    specs += _linear_spec('embed.state', c.state_dim, width)
    specs += _linear_spec('embed.step', c.step_features, width)
    specs += _linear_spec('embed.action', c.action_dim, width)
    if variant == 'mlp_diffusion':
        specs += _linear_spec('mlp.0', 3 * width, c.mlp_hidden)
        specs += _linear_spec('mlp.1', c.mlp_hidden, c.mlp_hidden)
        specs += _linear_spec('head', c.mlp_hidden, c.action_dim)
        return specs
    specs.append(('pos', (N_TOKENS, width), 'weight'))
    for b in range(c.n_blocks):
        p = f'blocks.{b}'
        specs += _norm_spec(f'{p}.norm1', width)
        for proj in ('query', 'key', 'value', 'output'):
            specs += _linear_spec(f'{p}.attn.{proj}', width, width)
        specs += _norm_spec(f'{p}.norm2', width)
        if variant == 'moe_transformer_diffusion':
            specs += _linear_spec(f'{p}.moe.gate', width, c.n_experts)
            for e in range(c.n_experts):
                specs += _linear_spec(f'{p}.moe.experts.{e}.0', width, c.expert_hidden)
                specs += _linear_spec(f'{p}.moe.experts.{e}.1', c.expert_hidden, width)
        else:
            specs += _linear_spec(f'{p}.ffn.0', width, c.expert_hidden)
            specs += _linear_spec(f'{p}.ffn.1', c.expert_hidden, width)
    specs += _norm_spec('final_norm', width)
    specs += _linear_spec('head', width, c.action_dim)
    return specs


def count_parameters(variant, config):
    return int(sum(int(np.prod(shape)) for _, shape, _ in parameter_specs(variant, config)))


def init_parameters(variant, rng_seed, config=None):
    """
    Inicialización uniforme +-sqrt(6/(fan_in+fan_out)) para matrices, sesgos en cero,
    ganancias de normalización en uno. Determinista por semilla.
    """
    config = config or NetworkConfig()
    rng = np.random.default_rng(int(rng_seed))
    tensors = {}
    for name, shape, kind in parameter_specs(variant, config):
        if kind == 'weight':
            fan_out, fan_in = shape
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            tensors[name] = rng.uniform(-limit, limit, size=shape)
        elif kind == 'gain':
            tensors[name] = np.ones(shape)
        else:
            tensors[name] = np.zeros(shape)
    cls = CriticParameters if variant == 'critic' else ActorParameters
    params = cls(variant, config, tensors)
    logger.debug("[NETS] %s inicializado: %d parámetros", variant, params.n_parameters)
    return params


# ----------------------------------------------------------------------
# bloques
# ----------------------------------------------------------------------
def bind(graph, params, trainable=True):
    """Registra los tensores en el grafo: variables (con gradiente) o constantes"""
    leaf = graph.variable if trainable else graph.constant
    return {name: leaf(value) for name, value in params.tensors.items()}


def linear_layer(nodes, prefix):
    return LinearLayer(nodes[f'{prefix}.weight'], nodes[f'{prefix}.bias'])


def linear(graph, layer, x):
    """x [..., in] -> x W^T + b"""
    y = graph.matmul(x, graph.transpose(layer.weight))
    return y + graph.broadcast(layer.bias, graph.value(y).shape)


def layer_norm(graph, nodes, prefix, x):
    shape = graph.value(x).shape
    centered = x - graph.broadcast(graph.mean(x, axis=-1, keepdims=True), shape)
    var = graph.mean(graph.square(centered), axis=-1, keepdims=True)
    scaled = centered / graph.broadcast(graph.sqrt(var + LN_EPS), shape)
    return scaled * graph.broadcast(nodes[f'{prefix}.gain'], shape) + \
        graph.broadcast(nodes[f'{prefix}.bias'], shape)


def attention_layer(nodes, prefix, n_heads):
    return MultiHeadAttention(n_heads, *(linear_layer(nodes, f'{prefix}.{p}')
                                         for p in ('query', 'key', 'value', 'output')))


def attention_forward(graph, layer, tokens, return_weights=False):
    """
    Atención de producto punto escalada por cabeza (1/sqrt(head_dim)), cabezas concatenadas
    y proyectadas. `tokens` es [L, D] o [B, L, D]; no hay término posicional aquí.
    """
    squeeze = len(graph.value(tokens).shape) == 2
    if squeeze:
        tokens = graph.reshape(tokens, (1,) + graph.value(tokens).shape)
    batch, length, dim = graph.value(tokens).shape
    heads = layer.n_heads
    head_dim = dim // heads

    def split(x):
        x = graph.reshape(x, (batch, length, heads, head_dim))
        return graph.transpose(x, (0, 2, 1, 3))

    q = split(linear(graph, layer.query, tokens))
    k = split(linear(graph, layer.key, tokens))
    v = split(linear(graph, layer.value, tokens))
    scores = graph.matmul(q, graph.transpose(k)) * (1.0 / np.sqrt(head_dim))
    weights = graph.softmax(scores)
    mixed = graph.transpose(graph.matmul(weights, v), (0, 2, 1, 3))
    out = linear(graph, layer.output, graph.reshape(mixed, (batch, length, dim)))
    if squeeze:
        out = graph.reshape(out, (length, dim))
    if return_weights:
        return out, weights
    return out


def moe_layer(nodes, prefix, n_experts, top_k):
    experts = [(linear_layer(nodes, f'{prefix}.experts.{e}.0'), linear_layer(nodes, f'{prefix}.experts.{e}.1'))
               for e in range(n_experts)]
    return MoELayer(linear_layer(nodes, f'{prefix}.gate'), experts, top_k)


def expert_forward(graph, expert, x):
    first, second = expert
    return linear(graph, second, graph.relu(linear(graph, first, x)))


def moe_forward(graph, layer, tokens):
    """
    Enrutamiento top-k por token: puntajes del gate, selección de los k mayores (empates
    al experto de menor índice), softmax sobre los seleccionados y mezcla ponderada.
    Solo los expertos elegidos procesan cada token.
    """
    n_tokens, dim = graph.value(tokens).shape
    n_experts = len(layer.experts)
    scores = linear(graph, layer.gate, tokens)
    raw = graph.value(scores)
    selected = np.argsort(-raw, axis=1, kind='stable')[:, :layer.top_k]
    rows = np.arange(n_tokens)[:, None]
    weights = graph.softmax(graph.index(scores, (rows, selected)))

    out = None
    counts = np.zeros(n_experts, dtype=np.int64)
    for e, expert in enumerate(layer.experts):
        token_ids, slots = np.nonzero(selected == e)
        counts[e] = token_ids.size
        if token_ids.size == 0:
            continue
        y = expert_forward(graph, expert, graph.index(tokens, token_ids))
        w = graph.reshape(graph.index(weights, (token_ids, slots)), (token_ids.size, 1))
        contrib = graph.scatter(y * graph.broadcast(w, (token_ids.size, dim)), token_ids, (n_tokens, dim))
        out = contrib if out is None else out + contrib

    mean_probs = graph.mean(graph.softmax(scores), axis=0)
    balance = graph.mean(graph.square(mean_probs - 1.0 / n_experts))
    report = GateReport(counts, selected, graph.value(weights).copy(), mean_probs, balance)
    return out, report


def step_features(step_index, n_features):
    """Codificación sinusoidal del índice de paso"""
    half = n_features // 2
    freqs = 1.0 / (10000.0 ** (np.arange(half) / max(half, 1)))
    angles = step_index * freqs
    return np.concatenate([np.sin(angles), np.cos(angles)])


def _feed_forward(graph, nodes, prefix, x, variant, config, reports):
    if variant == 'moe_transformer_diffusion':
        out, report = moe_forward(graph, moe_layer(nodes, f'{prefix}.moe', config.n_experts, config.top_k), x)
        reports.append(report)
        return out
    return expert_forward(graph, (linear_layer(nodes, f'{prefix}.ffn.0'), linear_layer(nodes, f'{prefix}.ffn.1')), x)


def _as_batch(graph, x):
    if isinstance(x, np.ndarray):
        x = graph.constant(np.atleast_2d(x))
    elif len(graph.value(x).shape) == 1:
        x = graph.reshape(x, (1,) + graph.value(x).shape)
    return x


def actor_forward(graph, nodes, variant, config, state, noisy_action=None, step_index=0):
    """
    Paso hacia adelante del actor sobre nodos ligados con `bind`.
    Transformer: tokens [estado, paso, acción] con desplazamientos posicionales aprendidos,
    bloques pre-norm con residuo, lectura del token de acción por la cabeza de salida.
    """
    state = _as_batch(graph, state)
    batch = graph.value(state).shape[0]
    if variant == 'gaussian':
        h = graph.relu(linear(graph, linear_layer(nodes, 'embed.state'), state))
        h = graph.relu(linear(graph, linear_layer(nodes, 'mlp.0'), h))
        out = linear(graph, linear_layer(nodes, 'head'), h)
        a = config.action_dim
        mean = graph.index(out, (slice(None), slice(0, a)))
        log_std = graph.clip(graph.index(out, (slice(None), slice(a, 2 * a))), config.log_std_min, config.log_std_max)
        return ActorOutput(mean=mean, log_std=log_std)
    if variant not in DIFFUSION_VARIANTS:
        raise ValueError(f"variante desconocida: {variant}")
    if not 0 <= int(step_index) < config.n_steps:
        raise ValueError(f"índice de paso {step_index} fuera de [0, {config.n_steps})")

    noisy_action = _as_batch(graph, noisy_action)
    steps = graph.constant(np.tile(step_features(int(step_index), config.step_features), (batch, 1)))
    s = linear(graph, linear_layer(nodes, 'embed.state'), state)
    e = linear(graph, linear_layer(nodes, 'embed.step'), steps)
    a = linear(graph, linear_layer(nodes, 'embed.action'), noisy_action)

    if variant == 'mlp_diffusion':
        h = graph.relu(linear(graph, linear_layer(nodes, 'mlp.0'), graph.concat([s, e, a], axis=-1)))
        h = graph.relu(linear(graph, linear_layer(nodes, 'mlp.1'), h))
        return ActorOutput(noise=linear(graph, linear_layer(nodes, 'head'), h))

    width = graph.value(s).shape[-1]
    tokens = graph.concat([graph.reshape(t, (batch, 1, width)) for t in (s, e, a)], axis=1)
    x = tokens + graph.broadcast(nodes['pos'], (batch, N_TOKENS, width))
    reports = []
    for b in range(config.n_blocks):
        p = f'blocks.{b}'
        attn = attention_layer(nodes, f'{p}.attn', config.n_heads)
        x = x + attention_forward(graph, attn, layer_norm(graph, nodes, f'{p}.norm1', x))
        flat = graph.reshape(layer_norm(graph, nodes, f'{p}.norm2', x), (batch * N_TOKENS, width))
        ff = _feed_forward(graph, nodes, p, flat, variant, config, reports)
        x = x + graph.reshape(ff, (batch, N_TOKENS, width))
    x = layer_norm(graph, nodes, 'final_norm', x)
    action_token = graph.index(x, (slice(None), ACTION_TOKEN))
    noise = linear(graph, linear_layer(nodes, 'head'), action_token)

    balance = None
    if reports:
        total = reports[0].balance
        for report in reports[1:]:
            total = total + report.balance
        balance = total * (config.balance_coef / len(reports))
    return ActorOutput(noise=noise, balance_loss=balance, gate_reports=reports)


def critic_forward(graph, nodes, config, state, action):
    """Dos estimaciones escalares independientes Q1, Q2 de forma [B]"""
    state = _as_batch(graph, state)
    action = _as_batch(graph, action)
    x = graph.concat([state, action], axis=-1)
    outputs = []
    for q in ('q1', 'q2'):
        h = graph.relu(linear(graph, linear_layer(nodes, f'{q}.l0'), x))
        h = graph.relu(linear(graph, linear_layer(nodes, f'{q}.l1'), h))
        out = linear(graph, linear_layer(nodes, f'{q}.l2'), h)
        outputs.append(graph.reshape(out, (graph.value(out).shape[0],)))
    return outputs[0], outputs[1]


def expert_fractions(reports):
    """Fracción de activaciones por experto acumulada sobre los bloques; suma 1"""
    if not reports:
        return None
    counts = np.sum([r.counts for r in reports], axis=0).astype(np.float64)
    return counts / counts.sum()


# ----------------------------------------------------------------------
# conveniencias sobre arreglos (solo hacia adelante)
# ----------------------------------------------------------------------
def predict_noise(params, state, noisy_action, step_index):
    graph = Graph()
    out = actor_forward(graph, bind(graph, params, trainable=False), params.variant, params.config,
                        np.asarray(state, dtype=np.float64), np.asarray(noisy_action, dtype=np.float64), step_index)
    return graph.value(out.noise).copy()


def critic_values(critic, state, action):
    graph = Graph()
    q1, q2 = critic_forward(graph, bind(graph, critic, trainable=False), critic.config,
                            np.asarray(state, dtype=np.float64), np.asarray(action, dtype=np.float64))
    return graph.value(q1).copy(), graph.value(q2).copy()


# ----------------------------------------------------------------------
# formato binario: cabecera (variante, config, tabla de formas) + float64 little-endian
# ----------------------------------------------------------------------
def save_parameters(path, params):
    tag = params.variant.encode('utf-8')
    config_blob = json.dumps(asdict(params.config), sort_keys=True).encode('utf-8')
    header = [MAGIC, struct.pack('<H', len(tag)), tag, struct.pack('<I', len(config_blob)), config_blob,
              struct.pack('<I', len(params.tensors))]
    for name, value in params.tensors.items():
        raw = name.encode('utf-8')
        header.append(struct.pack('<H', len(raw)) + raw + struct.pack('<B', value.ndim))
        header.append(struct.pack(f'<{value.ndim}I', *value.shape))
    with open(path, 'wb') as f:
        f.write(b''.join(header))
        for value in params.tensors.values():
            f.write(np.ascontiguousarray(value, dtype='<f8').tobytes())


def load_parameters(path):
    with open(path, 'rb') as f:
        blob = f.read()
    if blob[:len(MAGIC)] != MAGIC:
        raise ValueError(f"{path}: no es un archivo de parámetros RobustBeam")
    pos = len(MAGIC)

    def take(fmt):
        nonlocal pos
        values = struct.unpack_from(fmt, blob, pos)
        pos += struct.calcsize(fmt)
        return values

    (tag_len,) = take('<H')
    variant = blob[pos:pos + tag_len].decode('utf-8')
    pos += tag_len
    (config_len,) = take('<I')
    config = NetworkConfig(**json.loads(blob[pos:pos + config_len].decode('utf-8')))
    pos += config_len
    (n_tensors,) = take('<I')
    table = []
    for _ in range(n_tensors):
        (name_len,) = take('<H')
        name = blob[pos:pos + name_len].decode('utf-8')
        pos += name_len
        (ndim,) = take('<B')
        shape = take(f'<{ndim}I') if ndim else ()
        table.append((name, tuple(shape)))
    tensors = {}
    for name, shape in table:
        count = int(np.prod(shape))
        tensors[name] = np.frombuffer(blob, dtype='<f8', count=count, offset=pos).astype(np.float64).reshape(shape)
        pos += 8 * count
    cls = CriticParameters if variant == 'critic' else ActorParameters
    return cls(variant, config, tensors)
