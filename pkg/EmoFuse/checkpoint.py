"""Binary checkpoints of named tensors, optimizer state and training progress.

Layout (little-endian)::

    magic       8 bytes  b'EMFCKPT\\0'
    version     uint16
    header_len  uint32
    header      utf-8 JSON: tensors [{name, shape, dtype}], optimizer, epoch, meta
    payload     raw tensor bytes in header order
    digest      32-byte SHA-256 over everything above
"""
import hashlib
import json
import logging
import struct
from collections import OrderedDict

import numpy as np

from .defaults import CKPT_MAGIC, CKPT_VERSION
from .errors import ChecksumError

logger = logging.getLogger(__name__)

_PREFIX = struct.Struct('<8sHI')
_DIGEST_SIZE = hashlib.sha256().digest_size
_OPT_PREFIX = 'optimizer/'


class Checkpoint(object):
    """Contents of a checkpoint file.

    Args:
        tensors (OrderedDict): name -> numpy array (model parameters and buffers)
        meta (dict): JSON-serializable description, e.g. model config and label space
        optimizer (dict): optimizer kind, hyperparameters, step and accumulator arrays
        epoch (int): last completed epoch

    """

    __slots__ = 'tensors', 'meta', 'optimizer', 'epoch'

    def __init__(self, tensors, meta=None, optimizer=None, epoch=0):
        self.tensors = OrderedDict(tensors)
        self.meta = dict(meta or {})
        self.optimizer = optimizer
        self.epoch = int(epoch)

    def __repr__(self):
        return "Checkpoint({} tensors, epoch {})".format(len(self.tensors), self.epoch)


def optimizer_to_dict(optimizer):
    """Snapshot an optim.Optimizer for storage"""
    state = optimizer.state
    return dict(kind=state.kind, hyper=dict(state.hyper), step=state.step, arrays=state.arrays())


def save_checkpoint(path, checkpoint):
    """Write a Checkpoint; returns the SHA-256 hex digest of the file body."""
    arrays = list(checkpoint.tensors.items())
    opt_header = None
    if checkpoint.optimizer is not None:
        opt = checkpoint.optimizer
        opt_header = dict(kind=opt['kind'], hyper=opt['hyper'], step=opt['step'])
        arrays += [(_OPT_PREFIX + k, v) for k, v in sorted(opt['arrays'].items())]
    entries, blobs = [], []
    for name, array in arrays:
        array = np.asarray(array)
        dtype = array.dtype.newbyteorder('<')
        entries.append(dict(name=name, shape=list(array.shape), dtype=dtype.str))
        blobs.append(np.ascontiguousarray(array, dtype=dtype).tobytes())
    header = json.dumps(dict(tensors=entries, optimizer=opt_header, epoch=checkpoint.epoch,
                             meta=checkpoint.meta), sort_keys=True).encode('utf-8')
    body = _PREFIX.pack(CKPT_MAGIC, CKPT_VERSION, len(header)) + header + b''.join(blobs)
    digest = hashlib.sha256(body)
    with open(path, 'wb') as f:
        f.write(body)
        f.write(digest.digest())
    logger.debug("Saved %d tensors to %s", len(entries), path)
    return digest.hexdigest()


def load_checkpoint(path):
    """Read and verify a checkpoint.

    Raises:
        ChecksumError: bad magic, unsupported version, truncation or digest mismatch
    """
    with open(path, 'rb') as f:
        blob = f.read()
    if len(blob) < _PREFIX.size + _DIGEST_SIZE:
        raise ChecksumError("{}: truncated checkpoint".format(path))
    body, digest = blob[:-_DIGEST_SIZE], blob[-_DIGEST_SIZE:]
    magic, version, header_len = _PREFIX.unpack_from(body, 0)
    if magic != CKPT_MAGIC:
        raise ChecksumError("{}: not a checkpoint file".format(path))
    if version != CKPT_VERSION:
        raise ChecksumError("{}: unsupported checkpoint version {}".format(path, version))
    if hashlib.sha256(body).digest() != digest:
        raise ChecksumError("{}: checksum mismatch".format(path))
    pos = _PREFIX.size
    header = json.loads(body[pos:pos + header_len].decode('utf-8'))
    pos += header_len
    tensors, opt_arrays = OrderedDict(), {}
    for entry in header['tensors']:
        dtype = np.dtype(entry['dtype'])
        count = int(np.prod(entry['shape'], dtype=np.int64))
        nbytes = count * dtype.itemsize
        if pos + nbytes > len(body):
            raise ChecksumError("{}: payload shorter than header declares".format(path))
        array = np.frombuffer(body, dtype=dtype, count=count, offset=pos).reshape(entry['shape'])
        array = array.astype(dtype.newbyteorder('='))
        pos += nbytes
        if entry['name'].startswith(_OPT_PREFIX):
            opt_arrays[entry['name'][len(_OPT_PREFIX):]] = array
        else:
            tensors[entry['name']] = array
    if pos != len(body):
        raise ChecksumError("{}: {} trailing payload bytes".format(path, len(body) - pos))
    optimizer = header['optimizer']
    if optimizer is not None:
        optimizer['arrays'] = opt_arrays
    return Checkpoint(tensors, header['meta'], optimizer, header['epoch'])


def file_digest(path):
    """SHA-256 hex digest of a file, used for input manifests"""
    h = hashlib.sha256()
    with open(path, 'rb') as f:
        for block in iter(lambda: f.read(1 << 16), b''):
            h.update(block)
    return h.hexdigest()


def tensors_digest(arrays):
    """SHA-256 over named arrays, for bit-identity checks on parameter sets"""
    h = hashlib.sha256()
    for name, array in arrays:
        h.update(name.encode('utf-8'))
        h.update(np.ascontiguousarray(array).tobytes())
    return h.hexdigest()
