from .data import Dataset, load_csv, load_features, synth_blobs
from .fileformat import (encrypted_from_bytes, encrypted_to_bytes, load_encrypted, load_model,
                         model_from_bytes, model_to_bytes, save_encrypted, save_model)
from .nn import (EncryptedLayer, EncryptedModel, EvalReport, KeyRequiredError, Layer, ModelWeights,
                 decrypt_model, encrypt_model, evaluate, finetune_attack, forward, keyless_view,
                 loss_and_grads, predict, train_tiny)

__all__ = [
    "Dataset", "EncryptedLayer", "EncryptedModel", "EvalReport", "KeyRequiredError", "Layer",
    "ModelWeights", "decrypt_model", "encrypt_model", "encrypted_from_bytes", "encrypted_to_bytes",
    "evaluate", "finetune_attack", "forward", "keyless_view", "load_csv", "load_encrypted", "load_features",
    "load_model", "loss_and_grads", "model_from_bytes", "model_to_bytes", "predict", "save_encrypted",
    "save_model", "synth_blobs", "train_tiny",
]
