#   Neural Implicit Dictionary
#      Released under the MIT license
#

import itertools

import numpy as np

from .Tensor import Tensor, DimensionError, NonFiniteError


def _unbroadcast(grad, shape):
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad.reshape(shape)


class Tape(object):
    """Records the forward pass of the fixed op set for reverse-mode gradients.

    Records are appended in creation order, which is already a topological
    order of the graph; `backward` walks them in reverse. A tape belongs to
    one thread of execution.
    """

    def __init__(self, dtype=np.float64, check_finite=True):
        self.dtype = np.dtype(dtype)
        self.check_finite = check_finite

        self._ids = itertools.count()
        self._records = []
        self._params = dict()
        self._variables = []

    def __len__(self):
        return len(self._records)

    def _check(self, data, name):
        if self.check_finite and not np.all(np.isfinite(data)):
            raise NonFiniteError('{} produced non-finite values.'.format(name))

    def _lift(self, value):
        if isinstance(value, Tensor):
            if value.node is not None and value.tape is not self:
                raise ValueError('Tensor was recorded on a different tape.')
            return value
        return self.constant(value)

    def constant(self, value):
        data = np.asarray(value, dtype=self.dtype)
        self._check(data, 'constant')
        return Tensor(data, self)

    def variable(self, value):
        data = np.array(value, dtype=self.dtype)
        self._check(data, 'variable')
        tensor = Tensor(data, self, next(self._ids))
        self._variables.append(tensor)
        return tensor

    def param(self, store, name):
        entry = self._params.get(name)
        if entry is not None:
            return entry[1]

        data = store[name]
        if data.dtype != self.dtype:
            data = data.astype(self.dtype)
        tensor = Tensor(data, self, next(self._ids))
        self._params[name] = (store, tensor)
        return tensor

    def param_names(self):
        return list(self._params)

    def record(self, data, inputs, rule, name='op'):
        """Register the output of a custom op; `rule(g)` returns one gradient per input."""
        self._check(data, name)
        nodes = tuple(tensor.node for tensor in inputs)
        if all(node is None for node in nodes):
            return Tensor(data, self)

        out = Tensor(data, self, next(self._ids))
        self._records.append((out.node, nodes, rule))
        return out

    # Elementwise arithmetic

    def add(self, a, b):
        a, b = self._lift(a), self._lift(b)
        return self.record(a.data + b.data, (a, b), lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)), 'add')

    def sub(self, a, b):
        a, b = self._lift(a), self._lift(b)
        return self.record(a.data - b.data, (a, b), lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)), 'sub')

    def mul(self, a, b):
        a, b = self._lift(a), self._lift(b)

        def rule(g):
            return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

        return self.record(a.data * b.data, (a, b), rule, 'mul')

    def div(self, a, b):
        a, b = self._lift(a), self._lift(b)

        def rule(g):
            return _unbroadcast(g / b.data, a.shape), _unbroadcast(-g * a.data / (b.data * b.data), b.shape)

        return self.record(a.data / b.data, (a, b), rule, 'div')

    def abs(self, x):
        x = self._lift(x)
        return self.record(np.abs(x.data), (x,), lambda g: (g * np.sign(x.data),), 'abs')

    def square(self, x):
        x = self._lift(x)
        return self.record(x.data * x.data, (x,), lambda g: (2.0 * g * x.data,), 'square')

    def sine(self, x, omega0=1.0):
        if not omega0 > 0:
            raise ValueError('sine: omega0 must be positive, got {}'.format(omega0))

        x = self._lift(x)
        self._check(x.data, 'sine input')
        scaled = omega0 * x.data
        return self.record(np.sin(scaled), (x,), lambda g: (g * omega0 * np.cos(scaled),), 'sine')

    def relu(self, x):
        x = self._lift(x)
        return self.record(np.maximum(x.data, 0), (x,), lambda g: (g * (x.data > 0),), 'relu')

    # Linear algebra

    def matmul(self, a, b):
        a, b = self._lift(a), self._lift(b)
        if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
            raise DimensionError('matmul: a is {} but b is {}'.format(a.shape, b.shape))
        return self.record(a.data @ b.data, (a, b), lambda g: (g @ b.data.T, a.data.T @ g), 'matmul')

    def affine(self, x, W, b):
        x, W, b = self._lift(x), self._lift(W), self._lift(b)
        if x.ndim != 2 or W.ndim != 2 or b.ndim != 1:
            raise DimensionError('affine: expected x[B×din], W[din×dout], b[dout]; got x{}, W{}, b{}'.format(x.shape, W.shape, b.shape))
        if x.shape[1] != W.shape[0]:
            raise DimensionError('affine: x has {} columns but W has {} rows'.format(x.shape[1], W.shape[0]))
        if W.shape[1] != b.shape[0]:
            raise DimensionError('affine: W has {} columns but b has {} entries'.format(W.shape[1], b.shape[0]))

        def rule(g):
            return g @ W.data.T, x.data.T @ g, g.sum(axis=0)

        return self.record(x.data @ W.data + b.data, (x, W, b), rule, 'affine')

    def expert_affine(self, x, W, b):
        """Per-expert affine map: W[E×din×dout], b[E×dout].

        x is either shared features [B×din] or per-expert features
        [B×E×din]; the result is [B×E×dout].
        """
        x, W, b = self._lift(x), self._lift(W), self._lift(b)
        if W.ndim != 3 or b.ndim != 2 or W.shape[0] != b.shape[0] or W.shape[2] != b.shape[1]:
            raise DimensionError('expert_affine: expected W[E×din×dout], b[E×dout]; got W{}, b{}'.format(W.shape, b.shape))

        experts, din, dout = W.shape
        if x.ndim == 2:
            if x.shape[1] != din:
                raise DimensionError('expert_affine: x has {} columns but W expects {}'.format(x.shape[1], din))
            batch = x.shape[0]
            flat_W = W.data.transpose(1, 0, 2).reshape(din, experts * dout)
            data = (x.data @ flat_W).reshape(batch, experts, dout) + b.data

            def rule(g):
                flat_g = g.reshape(batch, experts * dout)
                dW = (x.data.T @ flat_g).reshape(din, experts, dout).transpose(1, 0, 2)
                return flat_g @ flat_W.T, dW, g.sum(axis=0)

        elif x.ndim == 3:
            if x.shape[1] != experts or x.shape[2] != din:
                raise DimensionError('expert_affine: x is {} but W is {}'.format(x.shape, W.shape))
            xe = x.data.transpose(1, 0, 2)
            data = np.matmul(xe, W.data).transpose(1, 0, 2) + b.data

            def rule(g):
                ge = g.transpose(1, 0, 2)
                dx = np.matmul(ge, W.data.transpose(0, 2, 1)).transpose(1, 0, 2)
                dW = np.matmul(xe.transpose(0, 2, 1), ge)
                return dx, dW, g.sum(axis=0)

        else:
            raise DimensionError('expert_affine: x must be 2-D or 3-D, got {}'.format(x.shape))

        return self.record(data, (x, W, b), rule, 'expert_affine')

    def mix(self, basis, codes):
        """Code-weighted sum over experts.

        basis [B×E×C] with codes [I×E] gives [I×B×C]; per-instance basis
        [I×B×E×C] with codes [I×E] also gives [I×B×C].
        """
        basis, codes = self._lift(basis), self._lift(codes)
        if codes.ndim != 2:
            raise DimensionError('mix: codes must be [I×E], got {}'.format(codes.shape))

        instances, experts = codes.shape
        if basis.ndim == 3:
            if basis.shape[1] != experts:
                raise DimensionError('mix: basis has {} experts but codes have {}'.format(basis.shape[1], experts))
            batch, _, channels = basis.shape
            flat_basis = basis.data.transpose(1, 0, 2).reshape(experts, batch * channels)
            data = (codes.data @ flat_basis).reshape(instances, batch, channels)

            def rule(g):
                flat_g = g.reshape(instances, batch * channels)
                dbasis = (codes.data.T @ flat_g).reshape(experts, batch, channels).transpose(1, 0, 2)
                return dbasis, flat_g @ flat_basis.T

        elif basis.ndim == 4:
            if basis.shape[0] != instances or basis.shape[2] != experts:
                raise DimensionError('mix: basis is {} but codes are {}'.format(basis.shape, codes.shape))
            data = np.einsum('ibec,ie->ibc', basis.data, codes.data)

            def rule(g):
                return np.einsum('ibc,ie->ibec', g, codes.data), np.einsum('ibec,ibc->ie', basis.data, g)

        else:
            raise DimensionError('mix: basis must be 3-D or 4-D, got {}'.format(basis.shape))

        return self.record(data, (basis, codes), rule, 'mix')

    # Shape manipulation and reductions

    def sum(self, x, axis=None, keepdims=False):
        x = self._lift(x)
        shape = x.shape

        def rule(g):
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            return (np.broadcast_to(g, shape),)

        return self.record(np.asarray(x.data.sum(axis=axis, keepdims=keepdims)), (x,), rule, 'sum')

    def mean(self, x, axis=None, keepdims=False):
        x = self._lift(x)
        count = x.size if axis is None else np.prod([x.shape[a] for a in np.atleast_1d(axis)])
        return self.mul(self.sum(x, axis=axis, keepdims=keepdims), 1.0 / count)

    def reshape(self, x, shape):
        x = self._lift(x)
        original = x.shape
        return self.record(x.data.reshape(shape), (x,), lambda g: (g.reshape(original),), 'reshape')

    def take(self, x, indices, axis=0):
        x = self._lift(x)
        indices = np.asarray(indices, dtype=np.intp)
        shape = x.shape

        def rule(g):
            dx = np.zeros(shape, dtype=g.dtype)
            np.add.at(np.moveaxis(dx, axis, 0), indices, np.moveaxis(g, axis, 0))
            return (dx,)

        return self.record(np.take(x.data, indices, axis=axis), (x,), rule, 'take')

    def scatter(self, values, indices, size, axis=0):
        """Inverse of take: sums slices of `values` into a zero block of `size` slices along `axis`."""
        values = self._lift(values)
        indices = np.asarray(indices, dtype=np.intp)
        shape = list(values.shape)
        shape[axis] = size
        data = np.zeros(shape, dtype=self.dtype)
        np.add.at(np.moveaxis(data, axis, 0), indices, np.moveaxis(values.data, axis, 0))
        return self.record(data, (values,), lambda g: (np.take(g, indices, axis=axis),), 'scatter')

    def stack(self, tensors, axis=0):
        tensors = [self._lift(t) for t in tensors]

        def rule(g):
            return tuple(np.take(g, i, axis=axis) for i in range(len(tensors)))

        return self.record(np.stack([t.data for t in tensors], axis=axis), tensors, rule, 'stack')

    # Losses

    def _pair(self, pred, target, name):
        pred, target = self._lift(pred), self._lift(target)
        if pred.shape != target.shape:
            raise DimensionError('{}: pred is {} but target is {}'.format(name, pred.shape, target.shape))
        return pred, target

    def loss_l2(self, pred, target):
        pred, target = self._pair(pred, target, 'loss_l2')
        diff = pred.data - target.data
        count = diff.size

        def rule(g):
            grad = g * 2.0 * diff / count
            return grad, -grad

        return self.record(np.asarray(np.mean(diff * diff)), (pred, target), rule, 'loss_l2')

    def loss_l1(self, pred, target):
        pred, target = self._pair(pred, target, 'loss_l1')
        diff = pred.data - target.data
        count = diff.size

        def rule(g):
            grad = g * np.sign(diff) / count
            return grad, -grad

        return self.record(np.asarray(np.mean(np.abs(diff))), (pred, target), rule, 'loss_l1')


def backward(tape, seed, store=None):
    """Propagate d(seed)/d(node) to every recorded node.

    Parameter gradients are added into the gradient buffers of the store
    they were read from (or `store` when given); variables receive `.grad`.
    Returns the gradient map keyed by node id.
    """
    if seed.size != 1:
        raise DimensionError('backward: seed must be a scalar, got shape {}'.format(seed.shape))

    grads = dict()
    if seed.node is not None:
        grads[seed.node] = np.ones_like(seed.data)

    for out_node, in_nodes, rule in reversed(tape._records):
        g = grads.pop(out_node, None)
        if g is None:
            continue

        for node, input_grad in zip(in_nodes, rule(g)):
            if node is None or input_grad is None:
                continue
            if node in grads:
                grads[node] = grads[node] + input_grad
            else:
                grads[node] = input_grad

    for name, (param_store, tensor) in tape._params.items():
        target = store if store is not None else param_store
        g = grads.get(tensor.node)
        if g is None or name not in target.grads:
            continue
        tape._check(g, 'gradient of "{}"'.format(name))
        target.grads[name] += g.astype(target.dtype, copy=False)

    for tensor in tape._variables:
        g = grads.get(tensor.node)
        tensor.grad = np.zeros_like(tensor.data) if g is None else np.array(g)

    return grads
