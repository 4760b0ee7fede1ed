"""Command-line entry point.

Exit codes: 0 success, 1 protocol or crypto failure, 2 usage or format error.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
import tempfile

import numpy as np

from . import puf
from .bits import to_bytes
from .chaos import SecretKey
from .cipher import EXACT, FLOAT, CipherConfig
from .ecc import (DEFAULT_CODE, DEFAULT_INTERLEAVER, conv_encode, deinterleave, free_distance,
                  interleave, viterbi_decode)
from .errors import DevbindError, FormatError, ParameterError, ProtocolError
from .modelfmt import (decrypt_model, encrypt_model, evaluate, finetune_attack, keyless_view,
                       load_csv, load_features, predict, synth_blobs, train_tiny)
from .modelfmt.experiments import FRACTIONS, Setup
from .modelfmt.fileformat import (load_encrypted, load_model, save_encrypted, save_model, sniff)
from .protocol import DELIVERED, CrpStore, DeviceNode, DeviceStore, Provider, deploy, register

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(DevbindError):
    pass


def _out(args, text: str):
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)


def _task(args):
    """Train/test split: CSV files when given, else the seeded blob task."""
    setup = Setup()
    if args.data:
        ds = load_csv(args.data, args.classes)
    else:
        ds = synth_blobs(setup.classes, setup.dims, setup.per_class, seed=args.data_seed,
                         separation=setup.separation)
    return ds.split(setup.test_fraction, seed=args.data_seed + 1)


def _key(args) -> SecretKey:
    if not args.device:
        raise UsageError("--device is required for this command")
    dev = puf.load_device(args.device)
    ch = puf.random_challenge(np.random.default_rng(args.challenge_seed), dev.challenge_len)
    return SecretKey(puf.reference_response(dev, ch))


def _cipher(args) -> CipherConfig:
    return CipherConfig(n_p=args.np, n_d=args.nd, mode=args.mode, encrypt_biases=args.biases)


def _layers(args, n: int):
    if args.layers is None:
        return range(n)
    if not 1 <= args.layers <= n:
        raise UsageError(f"--layers must lie in [1, {n}]")
    return range(args.layers)


# -- puf ---------------------------------------------------------------------

def cmd_puf(args) -> int:
    sigma = puf.calibrate_sigma(args.ber) if args.ber > 0 else 0.0
    if args.action == "new":
        if not args.out:
            raise UsageError("puf new needs --out")
        dev = puf.new_device(args.seed, sigma)
        puf.save_device(dev, args.out)
        print(f"device_id={dev.device_id.hex()} sigma={sigma:.6g} path={args.out}")
        return EXIT_OK
    rng = np.random.default_rng(args.seed)
    devices = [puf.new_device(args.seed * 1_000_003 + i, sigma) for i in range(args.devices)]
    challenges = [puf.random_challenge(rng) for _ in range(args.challenges)]
    uniq = puf.uniqueness(devices, challenges)
    bias = float(np.mean(puf.bit_bias(devices, challenges[0])))
    lines = [f"devices={args.devices}", f"uniqueness={uniq:.4f}", f"bit_bias={bias:.4f}"]
    if sigma > 0:
        ber = np.mean([puf.reliability_ber(d, challenges[0], rng, args.reads) for d in devices[:10]])
        lines += [f"target_ber={args.ber:.4f}", f"measured_ber={ber:.4f}"]
    _out(args, "\n".join(lines))
    return EXIT_OK


# -- code --------------------------------------------------------------------

def cmd_code(args) -> int:
    code = DEFAULT_CODE
    d, r = free_distance(code)
    if args.action == "dfree":
        _out(args, f"code={code!r}\nd_free={d}\nr={r}")
        return EXIT_OK
    errors = r if args.errors is None else args.errors
    rng = np.random.default_rng(args.seed)
    k = code.info_length(puf.RESPONSE_BITS)
    info = rng.integers(0, 2, size=(args.trials, k), dtype=np.uint8)
    coded = conv_encode(info, code)
    tx = coded if args.no_interleave else interleave(coded, DEFAULT_INTERLEAVER)
    n = tx.shape[1]
    if errors > n:
        raise UsageError(f"--errors must be <= {n}")
    noise = np.zeros_like(tx)
    for t in range(args.trials):
        if args.burst:
            start = int(rng.integers(0, n - errors + 1))
            noise[t, start:start + errors] = 1
        else:
            noise[t, rng.choice(n, size=errors, replace=False)] = 1
    rx = tx ^ noise
    rx = rx if args.no_interleave else deinterleave(rx, DEFAULT_INTERLEAVER)
    ok = int(np.sum(np.all(viterbi_decode(rx, code) == info, axis=1)))
    _out(args, f"errors={errors} burst={int(args.burst)} interleave={int(not args.no_interleave)} "
               f"trials={args.trials} success={ok} failures={args.trials - ok}")
    return EXIT_OK if ok == args.trials else EXIT_FAIL


# -- model -------------------------------------------------------------------

def cmd_model(args) -> int:
    if args.action == "train":
        if not args.out:
            raise UsageError("model train needs --out")
        train, test = _task(args)
        setup = Setup()
        arch = (train.width, *setup.hidden, train.classes)
        model = train_tiny(train, arch, epochs=args.epochs, lr=setup.lr, seed=args.seed)
        save_model(model, args.out)
        print(f"accuracy={evaluate(model, test).accuracy:.4f} path={args.out}")
        return EXIT_OK
    if not args.model:
        raise UsageError(f"model {args.action} needs --model")
    kind = sniff(args.model)
    if args.action == "encrypt":
        if kind != "plain":
            raise UsageError("model is already encrypted")
        model = load_model(args.model)
        chosen = _layers(args, len(model))
        cid = to_bytes(puf.random_challenge(np.random.default_rng(args.challenge_seed)))
        enc = encrypt_model(model, _key(args), _cipher(args), chosen, challenge_id=cid)
        path = args.out or args.model + ".enc"
        save_encrypted(enc, path)
        print(f"encrypted_layers={len(chosen)} mode={args.mode} path={path}")
        return EXIT_OK
    if args.action == "decrypt":
        if kind != "encrypted":
            raise UsageError("model is not encrypted")
        if not args.out:
            raise UsageError("model decrypt needs --out")
        save_model(decrypt_model(load_encrypted(args.model), _key(args)), args.out)
        print(f"path={args.out}")
        return EXIT_OK
    if kind == "plain":
        model, key = load_model(args.model), None
    else:
        enc = load_encrypted(args.model)
        # without a device the attacker's view of the ciphertext is evaluated
        model, key = (enc, _key(args)) if args.device else (keyless_view(enc), None)
    if args.action == "eval":
        _, test = _task(args)
        print(evaluate(model, test, key, model_file=os.path.basename(args.model),
                       keyed=int(key is not None)).to_text(), end="")
        return EXIT_OK
    if not args.input:
        raise UsageError("model infer needs --input")
    x = load_features(args.input)
    if x.shape[1] != model.layers[0].weight.shape[1]:
        raise UsageError(f"--input rows have {x.shape[1]} features, model expects {model.layers[0].weight.shape[1]}")
    preds = predict(model, x, key)
    print("\n".join(str(int(p)) for p in preds))
    return EXIT_OK


# -- attack ------------------------------------------------------------------

def cmd_attack(args) -> int:
    fractions = args.fraction if args.fraction else list(FRACTIONS)
    for f in fractions:
        if not 0.0 < f <= 1.0:
            raise UsageError(f"--fraction must lie in (0, 1], got {f}")
    if not args.model:
        raise UsageError("attack finetune needs --model")
    model = load_model(args.model)
    train, test = _task(args)
    key = _key(args)
    counts = [args.layers] if args.layers else range(1, len(model) + 1)
    rows = ["layers_encrypted,fraction,accuracy"]
    for k in counts:
        enc = encrypt_model(model, key, _cipher(args), range(k))
        for f in fractions:
            acc = finetune_attack(enc, f, train, epochs=args.epochs, seed=args.seed, test=test).accuracy
            rows.append(f"{k},{f:g},{acc:.4f}")
    text = "\n".join(rows)
    if args.out:
        with open(args.out, "w", newline="") as fh:
            csv.writer(fh).writerows(r.split(",") for r in rows)
    print(text)
    return EXIT_OK


# -- demo --------------------------------------------------------------------

def cmd_demo(args) -> int:
    if args.db_dir:
        return _demo(args, args.db_dir)
    with tempfile.TemporaryDirectory(prefix="devbind-demo-") as work:
        return _demo(args, work)


def _demo(args, work: str) -> int:
    rng = np.random.default_rng(args.seed)
    sigma = puf.calibrate_sigma(args.ber) if args.ber > 0 else 0.0
    setup = Setup(per_class=100, epochs=20)
    ds = synth_blobs(setup.classes, setup.dims, setup.per_class, seed=args.seed, separation=setup.separation)
    train, test = ds.split(setup.test_fraction, seed=args.seed + 1)
    model = train_tiny(train, setup.arch, epochs=setup.epochs, lr=setup.lr, seed=args.seed)
    base = evaluate(model, test).accuracy

    db_path = os.path.join(work, "provider.pfdb")
    dev_path = os.path.join(work, "device.pfdv")
    if os.path.exists(db_path):
        os.remove(db_path)
    provider = Provider(CrpStore(db_path), rng=np.random.default_rng(rng.integers(2**63)))
    chip = puf.new_device(args.seed + 1, 0.0)
    device = DeviceNode(chip, rng=np.random.default_rng(rng.integers(2**63)))
    register(provider, device, args.crps)
    device.store.save(dev_path)
    print(f"enrolled device={chip.device_id.hex()} crps={args.crps} ber={args.ber:g}")

    field_chip = chip.with_noise(sigma)
    if args.impostor:
        # different silicon presenting the victim's id and copied helper data
        field_chip = puf.new_device(args.seed + 2, sigma, device_id=chip.device_id)
    field = DeviceNode(field_chip, DeviceStore.load(dev_path), rng=np.random.default_rng(rng.integers(2**63)))
    cfg = CipherConfig(n_p=args.np, n_d=args.nd, mode=EXACT)
    got, outcome = deploy(provider, field, model, cfg, transport=args.transport)
    if outcome != DELIVERED:
        hint = " (key reproduction failed or device is not genuine)" if outcome == "auth-failed" else ""
        print(f"baseline_accuracy={base:.4f}\noutcome={outcome}{hint}\nresult=FAIL")
        return EXIT_FAIL
    acc = evaluate(got, test).accuracy
    ok = abs(acc - base) <= 1e-12
    print(f"baseline_accuracy={base:.4f}\ndelivered_accuracy={acc:.4f}\noutcome={outcome}\n"
          f"result={'PASS' if ok else 'FAIL'}")
    return EXIT_OK if ok else EXIT_FAIL


# -- parser ------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--out")

    data = argparse.ArgumentParser(add_help=False)
    data.add_argument("--data", help="CSV of label,features... (default: seeded blob task)")
    data.add_argument("--classes", type=int, default=10)
    data.add_argument("--data-seed", type=int, default=0)

    keyed = argparse.ArgumentParser(add_help=False)
    keyed.add_argument("--device", help="PUF device file supplying the key")
    keyed.add_argument("--challenge-seed", type=int, default=0)
    keyed.add_argument("--np", type=int, default=3)
    keyed.add_argument("--nd", type=int, default=2)
    keyed.add_argument("--mode", choices=(FLOAT, EXACT), default=FLOAT)
    keyed.add_argument("--biases", action="store_true", help="encrypt biases too")
    keyed.add_argument("--layers", type=int)

    p = argparse.ArgumentParser(prog="devbind", description="PUF-bound model encryption toolkit")
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("puf", parents=[common])
    sp.add_argument("action", choices=("new", "stats"))
    sp.add_argument("--ber", type=float, default=0.0)
    sp.add_argument("--devices", type=int, default=100)
    sp.add_argument("--challenges", type=int, default=4)
    sp.add_argument("--reads", type=int, default=200)

    sp = sub.add_parser("code", parents=[common])
    sp.add_argument("action", choices=("dfree", "roundtrip"))
    sp.add_argument("--errors", type=int)
    sp.add_argument("--burst", action="store_true")
    sp.add_argument("--no-interleave", action="store_true")
    sp.add_argument("--trials", type=int, default=1000)

    sp = sub.add_parser("model", parents=[common, data, keyed])
    sp.add_argument("action", choices=("train", "encrypt", "decrypt", "eval", "infer"))
    sp.add_argument("--model")
    sp.add_argument("--input", help="CSV feature rows, no label column (infer)")
    sp.add_argument("--epochs", type=int, default=30)

    sp = sub.add_parser("attack", parents=[common, data, keyed])
    sp.add_argument("action", choices=("finetune",))
    sp.add_argument("--model")
    sp.add_argument("--fraction", type=float, action="append")
    sp.add_argument("--epochs", type=int, default=20)

    sp = sub.add_parser("demo", parents=[common])
    sp.add_argument("--impostor", action="store_true")
    sp.add_argument("--ber", type=float, default=0.01)
    sp.add_argument("--np", type=int, default=3)
    sp.add_argument("--nd", type=int, default=2)
    sp.add_argument("--crps", type=int, default=4)
    sp.add_argument("--transport", choices=("tcp", "memory"), default="tcp")
    sp.add_argument("--db-dir", help="directory for the provider and device stores")
    return p


COMMANDS = {"puf": cmd_puf, "code": cmd_code, "model": cmd_model, "attack": cmd_attack, "demo": cmd_demo}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        return COMMANDS[args.command](args)
    except ProtocolError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except (UsageError, ParameterError, FormatError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
