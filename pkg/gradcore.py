"""
gradcore - Motor de diferenciación automática en modo reverso

Grafo real sobre buffers numpy (float64). Los valores complejos se manejan como
pares de arreglos reales (re, im), así redes y acciones comparten un solo
mecanismo de gradiente verificable contra diferencias finitas reales.
"""
from dataclasses import dataclass

import numpy as np

from errors import GraphError, ShapeError

UNARY_OPS = ('tanh', 'relu', 'exp', 'log', 'square', 'sqrt', 'neg', 'sigmoid', 'softplus')
BINARY_OPS = ('add', 'sub', 'mul', 'div')
REDUCTIONS = ('sum', 'mean', 'max', 'min', 'softmax_lastdim', 'logsumexp')


class _Node:
    __slots__ = ('op', 'inputs', 'value', 'adjoint', 'needs_grad', 'ctx')

    def __init__(self, op, inputs, value, needs_grad, ctx=None):
        self.op = op
        self.inputs = inputs
        self.value = value
        self.adjoint = np.zeros_like(value)
        self.needs_grad = needs_grad
        self.ctx = ctx


@dataclass(frozen=True, eq=False)
class NodeRef:
    """Referencia a un nodo. Solo es valida contra el grafo que la emitió"""
    graph: 'Graph'
    id: int

    # escalares numpy a la izquierda delegan en los operadores reflejados
    __array_ufunc__ = None

    @property
    def value(self):
        return self.graph.value(self)

    @property
    def grad(self):
        return self.graph.grad(self)

    @property
    def shape(self):
        return self.graph.value(self).shape

    def _lift(self, other):
        if isinstance(other, NodeRef):
            return other
        return self.graph.constant(np.asarray(other, dtype=np.float64))

    def __add__(self, other):
        return self.graph.elementwise('add', self, self._lift(other))

    def __radd__(self, other):
        return self.graph.elementwise('add', self._lift(other), self)

    def __sub__(self, other):
        return self.graph.elementwise('sub', self, self._lift(other))

    def __rsub__(self, other):
        return self.graph.elementwise('sub', self._lift(other), self)

    def __mul__(self, other):
        return self.graph.elementwise('mul', self, self._lift(other))

    def __rmul__(self, other):
        return self.graph.elementwise('mul', self._lift(other), self)

    def __truediv__(self, other):
        return self.graph.elementwise('div', self, self._lift(other))

    def __neg__(self):
        return self.graph.elementwise('neg', self)

    def __matmul__(self, other):
        return self.graph.matmul(self, other)


def _unbroadcast(grad, shape):
    """Suma `grad` sobre los ejes que numpy difundió para llegar a `shape`"""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Graph:
    """Grafo de cálculo de solo-agregado. Un grafo por hilo; no hay estado global."""

    def __init__(self):
        self.nodes = []

    # ------------------------------------------------------------------
    # registro de nodos
    # ------------------------------------------------------------------
    def _get(self, ref):
        if not isinstance(ref, NodeRef) or ref.graph is not self:
            raise GraphError("NodeRef no pertenece a este grafo")
        return self.nodes[ref.id]

    def _push(self, op, inputs, value, ctx=None):
        needs_grad = any(self.nodes[i].needs_grad for i in inputs)
        node = _Node(op, tuple(inputs), value, needs_grad, ctx)
        self.nodes.append(node)
        return NodeRef(self, len(self.nodes) - 1)

    def value(self, ref):
        return self._get(ref).value

    def grad(self, ref):
        return self._get(ref).adjoint

    def __len__(self):
        return len(self.nodes)

    # ------------------------------------------------------------------
    # hojas
    # ------------------------------------------------------------------
    def _leaf_array(self, values, shape):
        arr = np.array(values, dtype=np.float64)
        if shape is not None:
            shape = tuple(int(s) for s in shape)
            if arr.size != int(np.prod(shape)):
                raise ShapeError(f"{arr.size} valores no llenan la forma {shape}")
            arr = arr.reshape(shape)
        return arr

    def constant(self, values, shape=None):
        """Nodo sin contribución de gradiente (entradas, canales, ruido)"""
        node = _Node('constant', (), self._leaf_array(values, shape), False)
        self.nodes.append(node)
        return NodeRef(self, len(self.nodes) - 1)

    def variable(self, values, shape=None):
        """Hoja con gradiente (parámetros, acciones)"""
        node = _Node('variable', (), self._leaf_array(values, shape), True)
        self.nodes.append(node)
        return NodeRef(self, len(self.nodes) - 1)

    # ------------------------------------------------------------------
    # operaciones elemento a elemento
    # ------------------------------------------------------------------
    def elementwise(self, op, a, b=None):
        x = self._get(a).value
        if op in UNARY_OPS:
            if b is not None:
                raise GraphError(f"'{op}' es unaria")
            if op == 'tanh':
                y = np.tanh(x)
            elif op == 'relu':
                y = np.maximum(x, 0.0)
            elif op == 'exp':
                y = np.exp(x)
            elif op == 'log':
                if np.any(x <= 0):
                    raise ValueError("log de un valor no positivo")
                y = np.log(x)
            elif op == 'square':
                y = x * x
            elif op == 'sqrt':
                if np.any(x < 0):
                    raise ValueError("sqrt de un valor negativo")
                y = np.sqrt(x)
            elif op == 'neg':
                y = -x
            elif op == 'sigmoid':
                y = 0.5 * (1.0 + np.tanh(0.5 * x))
            else:
                y = np.logaddexp(0.0, x)
            return self._push(op, (a.id,), y)

        if op not in BINARY_OPS:
            raise GraphError(f"operación desconocida: {op}")
        if b is None:
            raise GraphError(f"'{op}' requiere dos operandos")
        z = self._get(b).value
        if x.shape != z.shape and x.size != 1 and z.size != 1:
            raise ShapeError(f"{op}: formas {x.shape} y {z.shape} sin difusión escalar")
        if op == 'add':
            y = x + z
        elif op == 'sub':
            y = x - z
        elif op == 'mul':
            y = x * z
        else:
            if np.any(z == 0):
                raise ValueError("división por cero")
            y = x / z
        return self._push(op, (a.id, b.id), np.asarray(y, dtype=np.float64))

    def tanh(self, a):
        return self.elementwise('tanh', a)

    def relu(self, a):
        return self.elementwise('relu', a)

    def exp(self, a):
        return self.elementwise('exp', a)

    def log(self, a):
        return self.elementwise('log', a)

    def square(self, a):
        return self.elementwise('square', a)

    def sqrt(self, a):
        return self.elementwise('sqrt', a)

    def softplus(self, a):
        return self.elementwise('softplus', a)

    def sigmoid(self, a):
        return self.elementwise('sigmoid', a)

    # ------------------------------------------------------------------
    # álgebra lineal
    # ------------------------------------------------------------------
    def matmul(self, a, b):
        """Producto matricial con dimensiones de lote al estilo numpy"""
        x = self._get(a).value
        z = self._get(b).value
        if x.ndim < 2 or z.ndim < 2:
            raise ShapeError("matmul requiere operandos de al menos 2 dimensiones")
        if x.shape[-1] != z.shape[-2]:
            raise ShapeError(f"matmul: {x.shape} x {z.shape} dimensiones internas distintas")
        try:
            np.broadcast_shapes(x.shape[:-2], z.shape[:-2])
        except ValueError:
            raise ShapeError(f"matmul: lotes incompatibles {x.shape} x {z.shape}")
        return self._push('matmul', (a.id, b.id), np.matmul(x, z))

    # ------------------------------------------------------------------
    # reducciones
    # ------------------------------------------------------------------
    def reduce(self, op, a, axis=None, keepdims=False):
        if op not in REDUCTIONS:
            raise GraphError(f"reducción desconocida: {op}")
        x = self._get(a).value
        if op == 'softmax_lastdim':
            if axis not in (None, -1, x.ndim - 1):
                raise ShapeError("softmax_lastdim solo reduce el último eje")
            axis = -1
        if axis is None:
            if x.size == 0:
                raise ShapeError("reducción sobre eje vacío")
        else:
            if not -x.ndim <= axis < x.ndim:
                raise ShapeError(f"eje {axis} inválido para forma {x.shape}")
            axis = axis % x.ndim
            if x.shape[axis] == 0:
                raise ShapeError("reducción sobre eje vacío")

        if op == 'sum':
            y = np.sum(x, axis=axis, keepdims=keepdims)
        elif op == 'mean':
            y = np.mean(x, axis=axis, keepdims=keepdims)
        elif op == 'max':
            y = np.max(x, axis=axis, keepdims=keepdims)
        elif op == 'min':
            y = np.min(x, axis=axis, keepdims=keepdims)
        elif op == 'softmax_lastdim':
            shifted = np.exp(x - np.max(x, axis=-1, keepdims=True))
            y = shifted / np.sum(shifted, axis=-1, keepdims=True)
        else:
            m = np.max(x, axis=axis, keepdims=True)
            y = m + np.log(np.sum(np.exp(x - m), axis=axis, keepdims=True))
            if not keepdims:
                y = np.squeeze(y, axis=axis) if axis is not None else y.reshape(())
        ctx = {'axis': axis, 'keepdims': keepdims}
        return self._push(op, (a.id,), np.asarray(y, dtype=np.float64), ctx)

    def sum(self, a, axis=None, keepdims=False):
        return self.reduce('sum', a, axis, keepdims)

    def mean(self, a, axis=None, keepdims=False):
        return self.reduce('mean', a, axis, keepdims)

    def softmax(self, a):
        return self.reduce('softmax_lastdim', a)

    # ------------------------------------------------------------------
    # operaciones estructurales
    # ------------------------------------------------------------------
    def reshape(self, a, shape):
        x = self._get(a).value
        try:
            y = x.reshape(shape)
        except ValueError:
            raise ShapeError(f"no se puede reformar {x.shape} a {shape}")
        return self._push('reshape', (a.id,), y.copy())

    def transpose(self, a, axes=None):
        x = self._get(a).value
        if axes is None:
            axes = list(range(x.ndim))
            axes[-2], axes[-1] = axes[-1], axes[-2]
        axes = tuple(axes)
        return self._push('transpose', (a.id,), np.ascontiguousarray(np.transpose(x, axes)), {'axes': axes})

    def concat(self, refs, axis=-1):
        values = [self._get(r).value for r in refs]
        try:
            y = np.concatenate(values, axis=axis)
        except ValueError as exc:
            raise ShapeError(f"concat: {exc}")
        axis = axis % values[0].ndim
        sizes = [v.shape[axis] for v in values]
        return self._push('concat', tuple(r.id for r in refs), y, {'axis': axis, 'sizes': sizes})

    def index(self, a, key):
        """Selección (gather) con indexado numpy; el gradiente se dispersa con suma"""
        x = self._get(a).value
        return self._push('index', (a.id,), np.array(x[key], dtype=np.float64), {'key': key})

    def scatter(self, a, key, shape):
        """Inversa de index: coloca `a` en un arreglo de ceros de forma `shape`, sumando repetidos"""
        x = self._get(a).value
        out = np.zeros(shape, dtype=np.float64)
        np.add.at(out, key, x)
        return self._push('scatter', (a.id,), out, {'key': key})

    def broadcast(self, a, shape):
        x = self._get(a).value
        try:
            y = np.broadcast_to(x, shape).copy()
        except ValueError:
            raise ShapeError(f"no se puede difundir {x.shape} a {shape}")
        return self._push('broadcast', (a.id,), y)

    def clip(self, a, low, high):
        x = self._get(a).value
        return self._push('clip', (a.id,), np.clip(x, low, high), {'low': low, 'high': high})

    # ------------------------------------------------------------------
    # barrido inverso
    # ------------------------------------------------------------------
    def backward(self, root):
        """Propaga adjuntos desde un nodo escalar. Cada llamada reinicia los adjuntos."""
        root_node = self._get(root)
        if root_node.value.size != 1:
            raise ShapeError(f"la raíz debe ser escalar, forma {root_node.value.shape}")
        for node in self.nodes:
            node.adjoint.fill(0.0)
        root_node.adjoint.fill(1.0)
        for node_id in range(root.id, -1, -1):
            node = self.nodes[node_id]
            if not node.needs_grad or not node.inputs:
                continue
            _BACKWARD[node.op](self, node)
        return self

    def _acc(self, node_id, grad):
        node = self.nodes[node_id]
        if node.needs_grad:
            node.adjoint += grad


# ----------------------------------------------------------------------
# reglas de retropropagación (registro por etiqueta de operación)
# ----------------------------------------------------------------------
def _inputs(graph, node):
    return [graph.nodes[i] for i in node.inputs]


def _bw_unary(graph, node):
    (src,) = _inputs(graph, node)
    g, x, y = node.adjoint, src.value, node.value
    if node.op == 'tanh':
        local = g * (1.0 - y * y)
    elif node.op == 'relu':
        local = g * (x > 0)
    elif node.op == 'exp':
        local = g * y
    elif node.op == 'log':
        local = g / x
    elif node.op == 'square':
        local = 2.0 * x * g
    elif node.op == 'sqrt':
        local = g / (2.0 * y)
    elif node.op == 'neg':
        local = -g
    elif node.op == 'sigmoid':
        local = g * y * (1.0 - y)
    else:
        local = g * 0.5 * (1.0 + np.tanh(0.5 * x))
    graph._acc(node.inputs[0], local)


def _bw_binary(graph, node):
    a, b = _inputs(graph, node)
    g = node.adjoint
    if node.op == 'add':
        ga, gb = g, g
    elif node.op == 'sub':
        ga, gb = g, -g
    elif node.op == 'mul':
        ga, gb = g * b.value, g * a.value
    else:
        ga = g / b.value
        gb = -g * a.value / (b.value * b.value)
    if a.value.shape != node.value.shape:
        ga = np.asarray(_unbroadcast(ga, a.value.shape)).reshape(a.value.shape)
    if b.value.shape != node.value.shape:
        gb = np.asarray(_unbroadcast(gb, b.value.shape)).reshape(b.value.shape)
    graph._acc(node.inputs[0], ga)
    graph._acc(node.inputs[1], gb)


def _bw_matmul(graph, node):
    a, b = _inputs(graph, node)
    g = node.adjoint
    ga = np.matmul(g, np.swapaxes(b.value, -1, -2))
    gb = np.matmul(np.swapaxes(a.value, -1, -2), g)
    graph._acc(node.inputs[0], _unbroadcast(ga, a.value.shape))
    graph._acc(node.inputs[1], _unbroadcast(gb, b.value.shape))


def _expand(g, ctx, ndim):
    if ctx['axis'] is None:
        return g.reshape((1,) * ndim) if ndim else g
    if not ctx['keepdims']:
        return np.expand_dims(g, ctx['axis'])
    return g


def _bw_reduce(graph, node):
    (src,) = _inputs(graph, node)
    x, g, ctx = src.value, node.adjoint, node.ctx
    axis = ctx['axis']
    if node.op in ('sum', 'mean'):
        local = np.broadcast_to(_expand(g, ctx, x.ndim), x.shape)
        if node.op == 'mean':
            count = x.size if axis is None else x.shape[axis]
            local = local / count
        graph._acc(node.inputs[0], local)
        return
    if node.op in ('max', 'min'):
        pick = np.argmax if node.op == 'max' else np.argmin
        local = np.zeros_like(x)
        if axis is None:
            flat = local.reshape(-1)
            flat[pick(x.reshape(-1))] = np.asarray(g).reshape(-1)[0]
        else:
            idx = np.expand_dims(pick(x, axis=axis), axis)
            np.put_along_axis(local, idx, _expand(g, ctx, x.ndim), axis=axis)
        graph._acc(node.inputs[0], local)
        return
    if node.op == 'softmax_lastdim':
        y = node.value
        graph._acc(node.inputs[0], y * (g - np.sum(g * y, axis=-1, keepdims=True)))
        return
    # logsumexp
    lse = node.value if ctx['keepdims'] else _expand(node.value, ctx, x.ndim)
    weights = np.exp(x - lse)
    graph._acc(node.inputs[0], weights * _expand(g, ctx, x.ndim))


def _bw_reshape(graph, node):
    src = graph.nodes[node.inputs[0]]
    graph._acc(node.inputs[0], node.adjoint.reshape(src.value.shape))


def _bw_transpose(graph, node):
    inverse = np.argsort(node.ctx['axes'])
    graph._acc(node.inputs[0], np.transpose(node.adjoint, inverse))


def _bw_concat(graph, node):
    splits = np.cumsum(node.ctx['sizes'])[:-1]
    for node_id, piece in zip(node.inputs, np.split(node.adjoint, splits, axis=node.ctx['axis'])):
        graph._acc(node_id, piece)


def _bw_index(graph, node):
    src = graph.nodes[node.inputs[0]]
    local = np.zeros_like(src.value)
    np.add.at(local, node.ctx['key'], node.adjoint)
    graph._acc(node.inputs[0], local)


def _bw_scatter(graph, node):
    graph._acc(node.inputs[0], node.adjoint[node.ctx['key']])


def _bw_broadcast(graph, node):
    src = graph.nodes[node.inputs[0]]
    graph._acc(node.inputs[0], _unbroadcast(node.adjoint, src.value.shape).reshape(src.value.shape))


def _bw_clip(graph, node):
    x = graph.nodes[node.inputs[0]].value
    inside = (x >= node.ctx['low']) & (x <= node.ctx['high'])
    graph._acc(node.inputs[0], node.adjoint * inside)


_BACKWARD = {op: _bw_unary for op in UNARY_OPS}
_BACKWARD.update({op: _bw_binary for op in BINARY_OPS})
_BACKWARD.update({op: _bw_reduce for op in REDUCTIONS})
_BACKWARD.update({
    'matmul': _bw_matmul,
    'reshape': _bw_reshape,
    'transpose': _bw_transpose,
    'concat': _bw_concat,
    'index': _bw_index,
    'scatter': _bw_scatter,
    'broadcast': _bw_broadcast,
    'clip': _bw_clip,
})


def finite_difference(fn, array, indices=None, h=1e-5):
    """
    Gradiente numérico por diferencias centrales de `fn(array) -> float`.
    Modifica `array` in situ y lo restaura. `indices` limita las coordenadas evaluadas.
    """
    flat = array.reshape(-1)
    if indices is None:
        indices = range(flat.size)
    grads = {}
    for i in indices:
        original = flat[i]
        flat[i] = original + h
        plus = fn(array)
        flat[i] = original - h
        minus = fn(array)
        flat[i] = original
        grads[int(i)] = (plus - minus) / (2.0 * h)
    return grads


def relative_error(analytic, numeric, floor=1e-8):
    """Error relativo simétrico usado en las verificaciones de gradiente"""
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    scale = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return float(np.max(np.abs(analytic - numeric) / scale))
