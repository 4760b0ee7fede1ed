"""Binary weight containers.

Plain file (``PDWM``)::

    magic "PDWM" | version u8 | layer count u16
    per layer: name (u16 length + UTF-8) | activation u8 | rows u32 | cols u32
               | weight f32[rows*cols] row-major | bias f32[rows]

Encrypted file (``PDWE``)::

    magic "PDWE" | version u8 | mode u8 | n_p u16 | n_d u16 | t_pre u32
    | challenge id [16] | b_p u8 | b_d u8 | flags u8 | layer count u16
    per layer: name | activation u8 | layer flags u8 | rows u32 | cols u32
               | weight block | bias block

Integers are little-endian. A block holds f32 when stored in the clear,
f64 for float-mode ciphertext and u32 for exact-mode ciphertext. Layer flag
bit 0 marks an encrypted weight and bit 1 an encrypted bias.
"""

from __future__ import annotations

import struct

import numpy as np

from ..cipher import EXACT, FLOAT, CipherConfig, LayerCiphertext
from ..errors import FormatError, ParameterError
from .nn import ACTIVATIONS, EncryptedLayer, EncryptedModel, Layer, ModelWeights

PLAIN_MAGIC = b"PDWM"
ENC_MAGIC = b"PDWE"
VERSION = 1
MODE_TAGS = {FLOAT: 0, EXACT: 1}
_BLOCK_DTYPES = {None: "<f4", FLOAT: "<f8", EXACT: "<u4"}


class _Reader:
    def __init__(self, data: bytes):
        self.data = memoryview(data)
        self.pos = 0

    def take(self, n: int, section: str) -> bytes:
        if self.pos + n > len(self.data):
            raise FormatError(f"truncated: need {n} bytes, {len(self.data) - self.pos} left",
                              section, self.pos)
        out = bytes(self.data[self.pos:self.pos + n])
        self.pos += n
        return out

    def unpack(self, fmt: str, section: str):
        s = struct.Struct("<" + fmt)
        return s.unpack(self.take(s.size, section))

    def array(self, dtype: str, count: int, section: str) -> np.ndarray:
        size = np.dtype(dtype).itemsize * count
        return np.frombuffer(self.take(size, section), dtype=dtype).astype(np.dtype(dtype).newbyteorder("="))

    def name(self, section: str) -> str:
        (n,) = self.unpack("H", section)
        raw = self.take(n, section)
        try:
            return raw.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise FormatError("layer name is not UTF-8", section, self.pos - n) from exc

    def finish(self):
        if self.pos != len(self.data):
            raise FormatError(f"{len(self.data) - self.pos} trailing bytes", "trailer", self.pos)


def _header(r: _Reader, magic: bytes):
    got = r.take(4, "magic")
    if got != magic:
        raise FormatError(f"bad magic {got!r}, expected {magic!r}", "magic", 0)
    (version,) = r.unpack("B", "version")
    if version != VERSION:
        raise FormatError(f"unsupported format version {version}", "version", 4)


def _name_bytes(name: str) -> bytes:
    raw = name.encode("utf-8")
    if len(raw) > 0xFFFF:
        raise ParameterError("layer name too long")
    return struct.pack("<H", len(raw)) + raw


def _act_tag(r: _Reader, section: str) -> str:
    (tag,) = r.unpack("B", section)
    if tag >= len(ACTIVATIONS):
        raise FormatError(f"unknown activation tag {tag}", section, r.pos - 1)
    return ACTIVATIONS[tag]


def model_to_bytes(model: ModelWeights) -> bytes:
    out = [PLAIN_MAGIC, struct.pack("<BH", VERSION, len(model))]
    for layer in model.layers:
        rows, cols = layer.weight.shape
        out.append(_name_bytes(layer.name))
        out.append(struct.pack("<BII", ACTIVATIONS.index(layer.activation), rows, cols))
        out.append(layer.weight.astype("<f4").tobytes())
        out.append(layer.bias.astype("<f4").tobytes())
    return b"".join(out)


def model_from_bytes(data: bytes) -> ModelWeights:
    r = _Reader(data)
    _header(r, PLAIN_MAGIC)
    (count,) = r.unpack("H", "layer-count")
    layers = []
    for j in range(count):
        sec = f"layer[{j}]"
        name = r.name(sec + ".name")
        act = _act_tag(r, sec + ".activation")
        rows, cols = r.unpack("II", sec + ".shape")
        w = r.array("<f4", rows * cols, sec + ".weight").reshape(rows, cols)
        b = r.array("<f4", rows, sec + ".bias")
        layers.append(Layer(name, w, b, act))
    r.finish()
    try:
        return ModelWeights(layers)
    except ParameterError as exc:
        raise FormatError(str(exc), "layers") from exc


def _block(part) -> bytes:
    if isinstance(part, LayerCiphertext):
        return part.values.astype(_BLOCK_DTYPES[part.mode]).tobytes()
    return np.asarray(part).astype("<f4").tobytes()


def encrypted_to_bytes(enc: EncryptedModel) -> bytes:
    cfg = enc.config
    out = [ENC_MAGIC, struct.pack("<BBHHI", VERSION, MODE_TAGS[cfg.mode], cfg.n_p, cfg.n_d, cfg.t_pre),
           enc.challenge_id,
           struct.pack("<BBBH", cfg.b_p, cfg.b_d, int(cfg.encrypt_biases), len(enc))]
    for layer in enc.layers:
        rows, cols = layer.shape
        flags = int(layer.weight_encrypted) | (int(layer.bias_encrypted) << 1)
        out.append(_name_bytes(layer.name))
        out.append(struct.pack("<BBII", ACTIVATIONS.index(layer.activation), flags, rows, cols))
        out.append(_block(layer.weight))
        out.append(_block(layer.bias))
    return b"".join(out)


def encrypted_from_bytes(data: bytes) -> EncryptedModel:
    r = _Reader(data)
    _header(r, ENC_MAGIC)
    (mode_tag,) = r.unpack("B", "mode")
    modes = {v: k for k, v in MODE_TAGS.items()}
    if mode_tag not in modes:
        raise FormatError(f"unknown cipher mode {mode_tag}", "mode", r.pos - 1)
    mode = modes[mode_tag]
    n_p, n_d, t_pre = r.unpack("HHI", "cipher-config")
    challenge_id = r.take(16, "challenge-id")
    b_p, b_d, flags, count = r.unpack("BBBH", "cipher-config")
    try:
        cfg = CipherConfig(n_p, n_d, mode, t_pre, bool(flags & 1), b_p, b_d)
    except ParameterError as exc:
        raise FormatError(str(exc), "cipher-config") from exc
    layers = []
    for j in range(count):
        sec = f"layer[{j}]"
        name = r.name(sec + ".name")
        act = _act_tag(r, sec + ".activation")
        (lflags,) = r.unpack("B", sec + ".flags")
        rows, cols = r.unpack("II", sec + ".shape")
        if lflags & 1:
            w = LayerCiphertext(r.array(_BLOCK_DTYPES[mode], rows * cols, sec + ".weight"),
                                (rows, cols), mode, j, "weight")
        else:
            w = r.array("<f4", rows * cols, sec + ".weight").reshape(rows, cols)
        if lflags & 2:
            b = LayerCiphertext(r.array(_BLOCK_DTYPES[mode], rows, sec + ".bias"), (rows,), mode, j, "bias")
        else:
            b = r.array("<f4", rows, sec + ".bias")
        layers.append(EncryptedLayer(name, act, w, b))
    r.finish()
    for prev, cur in zip(layers, layers[1:]):
        if cur.shape[1] != prev.shape[0]:
            raise FormatError(f"layer {cur.name!r} does not chain with {prev.name!r}", "layers")
    return EncryptedModel(layers, cfg, challenge_id, VERSION)


def _write(path, data: bytes):
    with open(path, "wb") as fh:
        fh.write(data)


def _read(path) -> bytes:
    with open(path, "rb") as fh:
        return fh.read()


def save_model(model: ModelWeights, path) -> None:
    _write(path, model_to_bytes(model))


def load_model(path) -> ModelWeights:
    return model_from_bytes(_read(path))


def save_encrypted(enc: EncryptedModel, path) -> None:
    _write(path, encrypted_to_bytes(enc))


def load_encrypted(path) -> EncryptedModel:
    return encrypted_from_bytes(_read(path))


def sniff(path) -> str:
    """``"plain"`` or ``"encrypted"`` from the file magic."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
    if magic == PLAIN_MAGIC:
        return "plain"
    if magic == ENC_MAGIC:
        return "encrypted"
    raise FormatError(f"bad magic {magic!r}", "magic", 0)
