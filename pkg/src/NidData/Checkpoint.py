#   Neural Implicit Dictionary
#      Released under the MIT license
#
#   Layout (all little-endian):
#     "NIDC" | u32 version
#     u32 n, k, m, C, n_freq, trunk_width, trunk_layers, head_width, activation
#     f32 omega0 | u32 patch count per axis (m values) | f32 overlap
#     u32 gate kind (0 table, 1 encoder) | u32 a, b
#         table: a = rows, b = 0; encoder: a = summary size, b = hidden width
#     f32 blocks, per patch: embedding W, embedding b, trunk layers (W, b),
#         then heads in ascending index (W1, b1, W2, b2)
#     f32 gate blocks: table, or encoder (hidden W, hidden b,) out W, out b
#

import logging
import struct

import numpy as np

from DiffKernel.Tensor import ParamStore
from NidLayer.Gating import GateTable
from NidTasks.Model import ArchSpec, attach_model


MAGIC = b'NIDC'
VERSION = 2
ACTIVATION_TAGS = {'sine': 0, 'relu': 1}
GATE_TAGS = {'table': 0, 'encoder': 1}
FLOAT = np.dtype('<f4')


class CheckpointError(ValueError):
    pass


def _layout(arch, gate_kind, a, b):
    """(name, shape) of every stored block, in file order; head blocks index into the stacked arrays."""
    blocks = []
    for p in range(int(np.prod(arch.patch_counts))):
        prefix = 'p{}/'.format(p)
        blocks.append((prefix + 'embed/W', (arch.m, arch.n_freq), None))
        blocks.append((prefix + 'embed/b', (arch.n_freq,), None))
        fan_in = arch.n_freq
        for i in range(arch.trunk_layers):
            blocks.append(('{}trunk/{}/W'.format(prefix, i), (fan_in, arch.trunk_width), None))
            blocks.append(('{}trunk/{}/b'.format(prefix, i), (arch.trunk_width,), None))
            fan_in = arch.trunk_width
        for j in range(arch.n):
            blocks.append((prefix + 'heads/W1', (fan_in, arch.head_width), j))
            blocks.append((prefix + 'heads/b1', (arch.head_width,), j))
            blocks.append((prefix + 'heads/W2', (arch.head_width, arch.channels), j))
            blocks.append((prefix + 'heads/b2', (arch.channels,), j))

    width = arch.n * int(np.prod(arch.patch_counts))
    if gate_kind == 'table':
        blocks.append(('gate/table', (a, width), None))
    else:
        fan_in = a
        if b:
            blocks.append(('encoder/hidden/W', (a, b), None))
            blocks.append(('encoder/hidden/b', (b,), None))
            fan_in = b
        blocks.append(('encoder/out/W', (fan_in, width), None))
        blocks.append(('encoder/out/b', (width,), None))
    return blocks


def _header(arch, k, gate_kind, a, b):
    header = MAGIC + struct.pack('<I', VERSION)
    header += struct.pack('<9I', arch.n, k, arch.m, arch.channels, arch.n_freq, arch.trunk_width,
                          arch.trunk_layers, arch.head_width, ACTIVATION_TAGS[arch.activation])
    header += struct.pack('<f', arch.omega0)
    header += struct.pack('<{}I'.format(arch.m), *arch.patch_counts)
    header += struct.pack('<f', arch.overlap)
    header += struct.pack('<3I', GATE_TAGS[gate_kind], a, b)
    return header


def dumps(model):
    a, b = model.gate.shape_header
    chunks = [_header(model.arch, model.k, model.gating, a, b)]
    for name, shape, index in _layout(model.arch, model.gating, a, b):
        value = model.store[name] if index is None else model.store[name][index]
        if value.shape != shape:
            raise CheckpointError('Parameter "{}" has shape {} but the header implies {}'.format(name, value.shape, shape))
        chunks.append(np.ascontiguousarray(value, dtype=FLOAT).tobytes())
    return b''.join(chunks)


def save_checkpoint(path, model):
    with open(path, 'wb') as checkpoint_file:
        checkpoint_file.write(dumps(model))
    logging.info('Wrote checkpoint "{}" ({} parameters).'.format(path, model.parameter_count()))
    return path


class _Reader(object):
    def __init__(self, data):
        self.data = data
        self.offset = 0

    def unpack(self, fmt):
        size = struct.calcsize(fmt)
        if self.offset + size > len(self.data):
            raise CheckpointError('Checkpoint truncated in header at byte {}'.format(self.offset))
        values = struct.unpack_from(fmt, self.data, self.offset)
        self.offset += size
        return values


def loads(data, k=None):
    """Model from checkpoint bytes; `k` overrides the stored sparsity budget."""
    if data[:4] != MAGIC:
        raise CheckpointError('Bad checkpoint magic {!r}; expected {!r}'.format(bytes(data[:4]), MAGIC))

    reader = _Reader(data)
    reader.offset = 4
    version, = reader.unpack('<I')
    if version != VERSION:
        raise CheckpointError('Checkpoint version {} is not supported (expected {})'.format(version, VERSION))

    n, stored_k, m, channels, n_freq, trunk_width, trunk_layers, head_width, activation_tag = reader.unpack('<9I')
    omega0, = reader.unpack('<f')
    patch_counts = list(reader.unpack('<{}I'.format(m)))
    overlap, = reader.unpack('<f')
    gate_tag, a, b = reader.unpack('<3I')

    activations = {tag: name for name, tag in ACTIVATION_TAGS.items()}
    gates = {tag: name for name, tag in GATE_TAGS.items()}
    if activation_tag not in activations or gate_tag not in gates:
        raise CheckpointError('Unknown activation tag {} or gate tag {}'.format(activation_tag, gate_tag))
    if n < 1 or m < 1 or channels < 1 or n_freq < 1 or any(c < 1 for c in patch_counts):
        raise CheckpointError('Inconsistent dimension header (n={}, m={}, C={}, n_freq={})'.format(n, m, channels, n_freq))
    if not 1 <= stored_k <= n:
        raise CheckpointError('Stored sparsity budget k={} is outside [1, {}]'.format(stored_k, n))

    arch = ArchSpec(n, m, channels, n_freq=n_freq, trunk_width=trunk_width, trunk_layers=trunk_layers,
                    head_width=head_width, activation=activations[activation_tag], omega0=float(omega0),
                    patch_counts=patch_counts, overlap=float(overlap))
    gate_kind = gates[gate_tag]
    layout = _layout(arch, gate_kind, a, b)

    expected = reader.offset + FLOAT.itemsize * sum(int(np.prod(shape)) for _, shape, _ in layout)
    if len(data) < expected:
        raise CheckpointError('Checkpoint truncated: header implies {} bytes, found {}'.format(expected, len(data)))
    if len(data) > expected:
        raise CheckpointError('Checkpoint has {} trailing bytes after the parameter payload'.format(len(data) - expected))

    blocks = dict()
    offset = reader.offset
    for name, shape, index in layout:
        count = int(np.prod(shape))
        value = np.frombuffer(data, dtype=FLOAT, count=count, offset=offset).reshape(shape)
        offset += count * FLOAT.itemsize
        if index is None:
            blocks[name] = value
        else:
            blocks.setdefault(name, []).append(value)

    store = ParamStore(np.float32)
    for name, value in blocks.items():
        store.add(name, np.stack(value) if isinstance(value, list) else value)

    model = attach_model(store, arch, gate_kind, k if k is not None else stored_k)
    if isinstance(model.gate, GateTable) and model.gate.instances != a:
        raise CheckpointError('Gate table has {} rows but the header declares {}'.format(model.gate.instances, a))
    return model


def load_checkpoint(path, k=None):
    with open(path, 'rb') as checkpoint_file:
        data = checkpoint_file.read()
    model = loads(data, k=k)
    logging.info('Loaded checkpoint "{}": {} experts, {} gate.'.format(path, model.arch.n, model.gating))
    return model
