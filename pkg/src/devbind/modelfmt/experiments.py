"""Desk-scale experiment harness: encrypted accuracy, fine-tuning attacks, parameter sweeps.

Keys come from simulated PUF devices so every experiment exercises the same
key path as deployment. All functions are deterministic given their seeds.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from ..chaos import SecretKey
from ..cipher import CipherConfig
from ..puf import new_device, random_challenge, reference_response
from .data import Dataset, synth_blobs
from .nn import encrypt_model, evaluate, finetune_attack, keyless_view, train_tiny

FRACTIONS = (0.01, 0.02, 0.04, 0.06, 0.08, 0.10)
DEFAULT_ARCH = (64, 64, 32, 10)


@dataclass(frozen=True)
class Setup:
    """Blob task: 10 classes in 64 dims, 300 rows per class, 30% held out."""

    classes: int = 10
    dims: int = 64
    per_class: int = 300
    separation: float = 0.5
    test_fraction: float = 0.3
    hidden: tuple = (64, 32)
    epochs: int = 30
    lr: float = 0.05

    @property
    def arch(self):
        return (self.dims, *self.hidden, self.classes)


def make_task(setup: Setup = Setup(), seed: int = 0):
    """Dataset split plus a trained plaintext model."""
    ds = synth_blobs(setup.classes, setup.dims, setup.per_class, seed=seed, separation=setup.separation)
    train, test = ds.split(setup.test_fraction, seed=seed + 1)
    model = train_tiny(train, setup.arch, epochs=setup.epochs, lr=setup.lr, seed=seed)
    return train, test, model


def device_key(seed: int, challenge_seed: int = 0) -> SecretKey:
    """Key of a simulated device: its noiseless response to a seeded challenge."""
    dev = new_device(seed)
    ch = random_challenge(np.random.default_rng(challenge_seed), dev.challenge_len)
    return SecretKey(reference_response(dev, ch))


def device_keys(count: int, first_seed: int = 1):
    return [device_key(first_seed + i) for i in range(count)]


def encrypted_accuracy(model, test: Dataset, key: SecretKey, cfg: CipherConfig, layers=None) -> float:
    """Accuracy of the keyless view after encrypting ``layers`` (default: all)."""
    enc = encrypt_model(model, key, cfg, layers=layers)
    return evaluate(keyless_view(enc), test).accuracy


def layer_count_sweep(model, test, keys, cfg: CipherConfig = CipherConfig()):
    """Mean keyless accuracy when encrypting the first k layers, k = 1..N_w."""
    out = {}
    for k in range(1, len(model) + 1):
        out[k] = float(np.mean([encrypted_accuracy(model, test, key, cfg, range(k)) for key in keys]))
    return out


def finetune_sweep(model, train, test, keys, layer_counts=None, fractions=FRACTIONS,
                   cfg: CipherConfig = CipherConfig(), epochs: int = 20, seed: int = 0):
    """Rows of ``(layers_encrypted, fraction, accuracy)``, accuracy averaged over keys."""
    layer_counts = layer_counts or range(1, len(model) + 1)
    rows = []
    for k in layer_counts:
        encs = [encrypt_model(model, key, cfg, layers=range(k)) for key in keys]
        for f in fractions:
            accs = [finetune_attack(enc, f, train, epochs=epochs, seed=seed + i, test=test).accuracy
                    for i, enc in enumerate(encs)]
            rows.append((k, f, float(np.mean(accs))))
    return rows


def scratch_accuracy(train, test, setup: Setup, fraction: float, epochs: int = 20, seeds=(0,)) -> float:
    """Retraining from random initialisation on the same data fraction."""
    accs = []
    for s in seeds:
        part = train.sample_fraction(fraction, s)
        accs.append(evaluate(train_tiny(part, setup.arch, epochs=epochs, lr=setup.lr, seed=s), test).accuracy)
    return float(np.mean(accs))


def parameter_sweep(model, test, keys, name: str, values=(1, 2, 3, 4, 5),
                    base: CipherConfig = CipherConfig()):
    """Mean keyless accuracy (all layers encrypted) as ``n_p`` or ``n_d`` varies."""
    if name not in ("n_p", "n_d"):
        raise ValueError("name must be 'n_p' or 'n_d'")
    out = {}
    for v in values:
        cfg = replace(base, **{name: v})
        out[v] = float(np.mean([encrypted_accuracy(model, test, key, cfg) for key in keys]))
    return out


def monotone_within(values, tol: float, increasing: bool = True) -> bool:
    """No later value falls (or rises) more than ``tol`` past any earlier one."""
    v = list(values)
    for i in range(len(v)):
        for j in range(i + 1, len(v)):
            if increasing and v[j] < v[i] - tol:
                return False
            if not increasing and v[j] > v[i] + tol:
                return False
    return True
