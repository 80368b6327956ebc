#   Neural Implicit Dictionary
#      Released under the MIT license
#

import logging

import numpy as np

from CoordNet.Embedding import PositionalEmbedding
from CoordNet.Network import Trunk, ExpertHeads
from DiffKernel.Tape import Tape
from DiffKernel.Tensor import ParamStore, DimensionError

from .Patches import PatchGrid
from .Sparse import SparseCode


class DictionaryPatch(object):
    """The trunk and expert heads owning one patch of the coordinate domain."""

    def __init__(self, embedding, trunk, heads):
        self.embedding = embedding
        self.trunk = trunk
        self.heads = heads

    def names(self):
        return self.trunk.names() + self.heads.names()


class Dictionary(object):
    """n coordinate-network atoms sharing a trunk, one trunk per patch when a PatchGrid is set.

    Codes are [I × P·n] with the n coefficients of patch p in columns
    p·n .. (p+1)·n - 1.
    """

    def __init__(self, store, patches, grid, omega0=30.0):
        self.store = store
        self.patches = patches
        self.grid = grid
        self.omega0 = omega0

        if len(patches) != grid.patch_count:
            raise ValueError('Dictionary has {} patches but the grid has {}'.format(len(patches), grid.patch_count))
        if self.n < 1:
            raise ValueError('A dictionary needs at least one expert.')

    @classmethod
    def create(cls, n, m, channels, n_freq=64, trunk_width=64, trunk_layers=2, head_width=32,
               omega0=30.0, activation='sine', grid=None, seed=0, dtype=np.float64, store=None):
        grid = grid if grid is not None else PatchGrid([1] * m)
        if grid.m != m:
            raise DimensionError('Patch grid is {}-D but the dictionary is {}-D'.format(grid.m, m))

        rng = np.random.default_rng(seed)
        store = store if store is not None else ParamStore(dtype)
        patches = []
        for p in range(grid.patch_count):
            prefix = 'p{}/'.format(p)
            embedding = PositionalEmbedding.create(store, m, n_freq, omega0=omega0, rng=rng, prefix=prefix + 'embed')
            trunk = Trunk.create(store, embedding, trunk_width, trunk_layers, activation=activation, rng=rng, prefix=prefix + 'trunk')
            heads = ExpertHeads.create(store, n, trunk.width, head_width, channels, activation=activation, rng=rng, prefix=prefix + 'heads')
            patches.append(DictionaryPatch(embedding, trunk, heads))
        return cls(store, patches, grid, omega0=omega0)

    @classmethod
    def attach(cls, store, m, trunk_layers, activation, grid, omega0):
        """Rebuild the views over an already populated store."""
        patches = []
        for p in range(grid.patch_count):
            prefix = 'p{}/'.format(p)
            embedding = PositionalEmbedding(store, omega0=omega0, prefix=prefix + 'embed')
            trunk = Trunk(store, embedding, trunk_layers, activation=activation, prefix=prefix + 'trunk')
            heads = ExpertHeads(store, activation=activation, prefix=prefix + 'heads')
            patches.append(DictionaryPatch(embedding, trunk, heads))
        return cls(store, patches, grid, omega0=omega0)

    @property
    def n(self):
        return len(self.patches[0].heads)

    @property
    def m(self):
        return self.grid.m

    @property
    def channels(self):
        return self.patches[0].heads.channels

    @property
    def code_width(self):
        return self.n * self.grid.patch_count

    @property
    def activation(self):
        return self.patches[0].trunk.activation

    def names(self):
        return [name for patch in self.patches for name in patch.names()]

    def parameter_count(self):
        return int(sum(self.store[name].size for name in self.names()))

    def checksum(self):
        return self.store.checksum('p')

    @property
    def trunk_evaluations(self):
        return sum(patch.trunk.evaluations for patch in self.patches)

    @property
    def head_evaluations(self):
        return sum(patch.heads.evaluations for patch in self.patches)

    def basis(self, tape, x, expert_ids, patch=0):
        """Atom values [B × |ids| × C] of one patch at coordinates given in that patch's local frame."""
        entry = self.patches[patch]
        return entry.heads(tape, entry.trunk(tape, x), expert_ids)

    def _active(self, codes):
        """Per patch, the experts with a nonzero coefficient in any instance."""
        columns = np.flatnonzero(np.any(codes != 0, axis=0))
        return [columns[(columns >= p * self.n) & (columns < (p + 1) * self.n)] - p * self.n
                for p in range(self.grid.patch_count)]

    def evaluate(self, tape, x, codes, active=None):
        """Blend of code-weighted atoms: f_i(x) = sum_p w_p(x) sum_j a_i[p·n + j] b_pj(x).

        `x` is shared [B × m] or per instance [I × B × m]; `codes` is a Tensor
        [I × P·n]. Returns [I × B × C]. Only experts listed in `active` (by
        default the nonzero columns of `codes`) are evaluated.
        """
        codes = tape._lift(codes)
        x = np.asarray(x, dtype=tape.dtype)
        if codes.ndim != 2 or codes.shape[1] != self.code_width:
            raise DimensionError('Codes must be [I × {}], got {}'.format(self.code_width, codes.shape))

        instances = codes.shape[0]
        shared = x.ndim == 2
        if not shared and (x.ndim != 3 or x.shape[0] != instances):
            raise DimensionError('Coordinates {} do not match {} code rows'.format(x.shape, instances))
        if x.shape[-1] != self.m:
            raise DimensionError('Dictionary is {}-D but coordinates are {}-D'.format(self.m, x.shape[-1]))

        batch = x.shape[-2]
        flat = self.grid.clamp(x.reshape(-1, self.m))
        dispatched = self.grid.dispatch(flat)
        active = active if active is not None else self._active(codes.data)

        parts = []
        for p, ids in enumerate(active):
            ids = np.asarray(ids, dtype=np.intp)
            if ids.size == 0:
                continue

            rows, weights = self.grid.covered(flat, p, dispatched)
            if rows.size == 0:
                continue
            whole = rows.size == flat.shape[0] and np.all(weights == 1.0)

            local = self.grid.local_coords(flat[rows], p)
            basis = self.basis(tape, local, ids, patch=p)
            coefficients = tape.take(codes, ids + p * self.n, axis=1)

            if shared:
                out = tape.mix(basis, coefficients)
                if not whole:
                    out = tape.scatter(tape.mul(out, weights[None, :, None]), rows, batch, axis=1)
            else:
                per_row = tape.take(coefficients, rows // batch, axis=0)
                out = tape.mix(tape.reshape(basis, (rows.size, 1) + basis.shape[1:]), per_row)
                out = tape.reshape(out, (rows.size, self.channels))
                if not whole:
                    out = tape.mul(out, weights[:, None])
                out = tape.reshape(tape.scatter(out, rows, flat.shape[0], axis=0), (instances, batch, self.channels))
            parts.append(out)

        if not parts:
            return tape.constant(np.zeros((instances, batch, self.channels)))

        total = parts[0]
        for part in parts[1:]:
            total = tape.add(total, part)
        return total


def combine(dictionary, code, x):
    """f(x) = sum of code-weighted atoms; only the experts listed in `code` are evaluated."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if not isinstance(code, SparseCode):
        code = SparseCode(code, len(code), dictionary.code_width)

    if len(code) == 0:
        logging.warning('Combining an empty code; returning the zero function.')
        return np.zeros((x.shape[0], dictionary.channels))

    indices = code.indices
    if indices.max() >= dictionary.code_width:
        raise IndexError('Code index {} out of range for {} experts'.format(indices.max(), dictionary.code_width))

    n = dictionary.n
    active = [indices[(indices >= p * n) & (indices < (p + 1) * n)] - p * n for p in range(dictionary.grid.patch_count)]
    codes = code.dense(dictionary.code_width)[None, :]
    return dictionary.evaluate(Tape(), x, codes, active=active).data[0]


def basis_values(dictionary, x, expert_ids, patch=0):
    """Numpy atom values [B × |ids| × C] at global coordinates inside one patch."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    local = dictionary.grid.local_coords(x, patch)
    return dictionary.basis(Tape(), local, expert_ids, patch=patch).data
