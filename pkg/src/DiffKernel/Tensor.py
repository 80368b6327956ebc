#   Neural Implicit Dictionary
#      Released under the MIT license
#

import hashlib

import numpy as np


class DimensionError(ValueError):
    pass


class NonFiniteError(ValueError):
    pass


class Tensor(object):
    """Dense array plus the tape node it was recorded under.

    Tensors without a node are constants: nothing upstream of them needs a
    gradient, so the tape never records the ops that consume only constants.
    """

    __slots__ = ('data', 'tape', 'node', 'grad')

    def __init__(self, data, tape=None, node=None):
        self.data = data
        self.tape = tape
        self.node = node
        self.grad = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    @property
    def requires_grad(self):
        return self.node is not None

    def item(self):
        return float(self.data)

    def numpy(self):
        return self.data

    def __repr__(self):
        return 'Tensor(shape={}, node={})'.format(self.shape, self.node)

    def __add__(self, other):
        return self.tape.add(self, other)

    def __radd__(self, other):
        return self.tape.add(other, self)

    def __sub__(self, other):
        return self.tape.sub(self, other)

    def __rsub__(self, other):
        return self.tape.sub(other, self)

    def __mul__(self, other):
        return self.tape.mul(self, other)

    def __rmul__(self, other):
        return self.tape.mul(other, self)

    def __truediv__(self, other):
        return self.tape.div(self, other)

    def __neg__(self):
        return self.tape.mul(self, -1.0)

    def __matmul__(self, other):
        return self.tape.matmul(self, other)

    def sum(self, axis=None, keepdims=False):
        return self.tape.sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return self.tape.mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return self.tape.reshape(self, shape)

    def abs(self):
        return self.tape.abs(self)

    def square(self):
        return self.tape.square(self)


class ParamStore(object):
    """Named parameters and their gradient buffers."""

    def __init__(self, dtype=np.float64):
        self.dtype = np.dtype(dtype)
        self.params = dict()
        self.grads = dict()

    def add(self, name, value):
        if name in self.params:
            raise KeyError('Parameter "{}" is already registered.'.format(name))

        value = np.array(value, dtype=self.dtype)
        self.params[name] = value
        self.grads[name] = np.zeros_like(value)
        return value

    def __getitem__(self, name):
        return self.params[name]

    def __setitem__(self, name, value):
        if name not in self.params:
            raise KeyError('Unknown parameter "{}".'.format(name))

        value = np.asarray(value, dtype=self.dtype)
        if value.shape != self.params[name].shape:
            raise DimensionError('Parameter "{}" has shape {}, got {}.'.format(name, self.params[name].shape, value.shape))
        self.params[name][...] = value

    def __contains__(self, name):
        return name in self.params

    def __len__(self):
        return len(self.params)

    def names(self, prefix=None):
        if prefix is None:
            return list(self.params)
        return [name for name in self.params if name.startswith(prefix)]

    def zero_grad(self, names=None):
        for name in (names if names is not None else self.params):
            self.grads[name][...] = 0

    def count(self, prefix=None):
        return int(sum(self.params[name].size for name in self.names(prefix)))

    def checksum(self, prefix=None):
        digest = hashlib.sha256()
        for name in sorted(self.names(prefix)):
            digest.update(name.encode('utf-8'))
            digest.update(np.ascontiguousarray(self.params[name]).tobytes())
        return digest.hexdigest()

    def astype(self, dtype):
        other = ParamStore(dtype)
        for name, value in self.params.items():
            other.add(name, value)
        return other
