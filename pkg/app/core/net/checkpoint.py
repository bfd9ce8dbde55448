"""
Versioned binary checkpoints.

Layout: magic b'EPD1', little-endian uint32 header length, UTF-8 JSON header
(version, model config, tensor names/shapes/dtypes, standardizer), then the
raw little-endian tensor payloads in header order.
"""
import json
import logging
import struct
from dataclasses import asdict
from pathlib import Path
from typing import Optional, Union

import numpy as np
import torch

from core.exceptions import CheckpointError, ConfigError, ShapeError
from core.net.model import ModelConfig, SceneDiffuser

logger = logging.getLogger(__name__)

MAGIC = b'EPD1'
VERSION = 1
DTYPES = {'float32': '<f4', 'float64': '<f8'}


def checkpoint_save(model: SceneDiffuser, path: Union[str, Path]) -> None:
    """Writes the model parameters, buffers and config"""

    state = model.state_dict()
    tensors, payloads = [], []
    for name, tensor in state.items():
        array = tensor.detach().cpu().numpy()
        dtype = str(array.dtype)
        if dtype not in DTYPES:
            raise CheckpointError(f'tensor {name}: unsupported dtype {dtype}')
        tensors.append(
            {'name': name, 'shape': list(array.shape), 'dtype': dtype}
        )
        payloads.append(array.astype(DTYPES[dtype]).tobytes())
    header = {
        'version': VERSION,
        'config': asdict(model.config),
        'tensors': tensors,
        'standardizer': {
            'mean': state['standardizer_mean'].tolist(),
            'std': state['standardizer_std'].tolist(),
        },
    }
    encoded = json.dumps(header, sort_keys=True, separators=(',', ':'))
    encoded = encoded.encode('utf-8')
    with open(path, 'wb') as handle:
        handle.write(MAGIC)
        handle.write(struct.pack('<I', len(encoded)))
        handle.write(encoded)
        for payload in payloads:
            handle.write(payload)
    logger.info('saved checkpoint %s (%d tensors)', path, len(tensors))


def _read_header(handle) -> dict:
    if handle.read(4) != MAGIC:
        raise CheckpointError('not a checkpoint file (bad magic bytes)')
    raw_length = handle.read(4)
    if len(raw_length) != 4:
        raise CheckpointError('truncated checkpoint header')
    (length,) = struct.unpack('<I', raw_length)
    try:
        header = json.loads(handle.read(length).decode('utf-8'))
    except (UnicodeDecodeError, json.JSONDecodeError) as error:
        raise CheckpointError(f'unreadable checkpoint header: {error}')
    if header.get('version') != VERSION:
        raise CheckpointError(
            f'unsupported checkpoint version {header.get("version")}'
        )

    return header


def checkpoint_load(
    path: Union[str, Path], expected: Optional[ModelConfig] = None
) -> SceneDiffuser:
    """
    Reads a checkpoint. With expected given, every stored tensor must have
    the shape a model built from expected would give it.
    """

    with open(path, 'rb') as handle:
        header = _read_header(handle)
        try:
            config = ModelConfig(**header['config'])
        except (TypeError, ConfigError) as error:
            raise CheckpointError(f'invalid stored config: {error}')
        model = SceneDiffuser(config)
        reference = (
            SceneDiffuser(expected).state_dict()
            if expected is not None
            else model.state_dict()
        )
        state = {}
        for entry in header['tensors']:
            name, shape = entry['name'], tuple(entry['shape'])
            if name not in reference:
                raise ShapeError(f'tensor {name} is not part of the model')
            wanted = tuple(reference[name].shape)
            if shape != wanted:
                raise ShapeError(
                    f'tensor {name} has shape {shape}, expected {wanted}'
                )
            dtype = np.dtype(DTYPES[entry['dtype']])
            size = int(np.prod(shape)) * dtype.itemsize
            raw = handle.read(size)
            if len(raw) != size:
                raise CheckpointError(f'truncated payload of tensor {name}')
            array = np.frombuffer(raw, dtype=dtype).reshape(shape)
            state[name] = torch.from_numpy(
                array.astype(entry['dtype'], copy=True)
            )
    missing = set(reference) - set(state)
    if missing:
        raise ShapeError(f'tensors missing: {", ".join(sorted(missing))}')
    if any(tensor.dtype == torch.float64 for tensor in state.values()):
        model = model.double()
    model.load_state_dict(state)
    model.eval()

    return model
