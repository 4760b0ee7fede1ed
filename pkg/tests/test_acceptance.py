"""Acceptance suite: one test per criterion, each printing a single PASS/FAIL line.

Run directly (``python3 tests/test_acceptance.py``) for just the summary, or
through pytest where each line is written straight to the terminal.
Statistical protocols (key seeds, trial counts, model seeds) are fixed
here up front; nothing is re-drawn after seeing a result.
"""

from __future__ import annotations

import itertools
import os
import sys
import tempfile
import time

import numpy as np

sys.path.insert(0, os.path.dirname(__file__))

from oracles import DEFAULT_TAPS, brute_dfree, direct_encode, mp_logistic, mp_nca, numeric_grads  # noqa: E402

from devbind import puf  # noqa: E402
from devbind.bits import to_bytes  # noqa: E402
from devbind.chaos import (NcaParams, SecretKey, derive_logistic, derive_nca, logistic_sequence,  # noqa: E402
                           logistic_step, nca_step)
from devbind.cipher import EXACT, FLOAT, CipherConfig, decrypt_layer, encrypt_layer  # noqa: E402
from devbind.ecc import DEFAULT_CODE, conv_encode, fe_generate, fe_reproduce, free_distance  # noqa: E402
from devbind.modelfmt import Layer, ModelWeights, evaluate, loss_and_grads, save_encrypted  # noqa: E402
from devbind.modelfmt.experiments import (FRACTIONS, Setup, device_keys, encrypted_accuracy,  # noqa: E402
                                          finetune_sweep, make_task, monotone_within, parameter_sweep)
from devbind.modelfmt.nn import init_params  # noqa: E402
from devbind.protocol import (DELIVERED, CrpStore, DeviceNode, Provider, register,  # noqa: E402
                              run_session)
from devbind.protocol.wire import ERROR, decode_frame  # noqa: E402


def _line(num: int, title: str, ok: bool, detail: str, elapsed: float, limit: float) -> str:
    timing = f"{elapsed:.1f}s/{limit:.0f}s"
    return f"[{'PASS' if ok else 'FAIL'}] criterion {num}: {title} | {detail} | {timing}"


def _run(num, title, fn, limit):
    t0 = time.perf_counter()
    ok, detail = fn()
    elapsed = time.perf_counter() - t0
    ok = bool(ok) and elapsed < limit
    return ok, _line(num, title, ok, detail, elapsed, limit)


# -- 1 ------------------------------------------------------------------------

def criterion_1():
    d_oracle = brute_dfree(DEFAULT_TAPS)
    r = (d_oracle - 1) // 2
    d_impl, r_impl = free_distance(DEFAULT_CODE)
    rng = np.random.default_rng(101)

    exhaustive_ok, patterns = True, 0
    for k in range(1, 9):
        n = DEFAULT_CODE.coded_length(k)
        resp = rng.integers(0, 2, n, dtype=np.uint8)
        hd = fe_generate(resp, rng=rng)
        errs = []
        for w in range(r + 1):
            for pos in itertools.combinations(range(n), w):
                e = np.zeros(n, dtype=np.uint8)
                e[list(pos)] = 1
                errs.append(e)
        errs = np.array(errs)
        patterns += len(errs)
        exhaustive_ok &= bool(np.all(fe_reproduce(resp[None, :] ^ errs, hd) == resp))

    sigma = puf.calibrate_sigma(0.01)
    trials, ok = 1000, 0
    for i in range(trials):
        dev = puf.new_device(10_000 + i, sigma)
        ch = puf.random_challenge(rng)
        ref = puf.reference_response(dev, ch)
        hd = fe_generate(ref, rng=rng)
        ok += np.array_equal(fe_reproduce(puf.evaluate(dev, ch, rng), hd), ref)
    rate = ok / trials
    passed = exhaustive_ok and rate >= 0.99 and (d_impl, r_impl) == (d_oracle, r)
    detail = (f"d_free={d_impl} (oracle {d_oracle}) r={r}; {patterns} patterns k<=8 "
              f"{'all corrected' if exhaustive_ok else 'NOT all corrected'}; BER 1% success {rate:.3f} (>=0.99)")
    return passed, detail


# -- 2 ------------------------------------------------------------------------

def criterion_2():
    rng = np.random.default_rng(202)
    layers = 100_000
    exact_cfg, float_cfg = CipherConfig(mode=EXACT), CipherConfig(mode=FLOAT)
    # randomness drawn in bulk: a fresh key, shape, layer index and weights per layer
    key_bits = rng.integers(0, 2, (layers, 384), dtype=np.uint8)
    shapes = rng.integers(1, 9, (layers, 2))
    index = rng.integers(0, 8, layers)
    w32 = rng.normal(0, 4, (layers, 64)).astype(np.float32)
    w64 = rng.uniform(-16, 16, (layers, 64))
    exact_bad = 0
    float_err = 0.0
    for i in range(layers):
        key = SecretKey(key_bits[i])
        shape = (int(shapes[i, 0]), int(shapes[i, 1]))
        size, j = shape[0] * shape[1], int(index[i])
        w = w32[i, :size].reshape(shape)
        back = decrypt_layer(encrypt_layer(w, key, exact_cfg, j), key, exact_cfg)
        exact_bad += not np.array_equal(back.view(np.uint32), w.view(np.uint32))
        wf = w64[i, :size].reshape(shape)
        backf = decrypt_layer(encrypt_layer(wf, key, float_cfg, j), key, float_cfg)
        float_err = max(float_err, float(np.max(np.abs(backf - wf))))
    passed = exact_bad == 0 and float_err <= 1e-12
    return passed, (f"{layers} layers per mode, fresh key each; exact mismatches={exact_bad}; "
                    f"float max error={float_err:.2e} (<=1e-12)")


# -- 3 ------------------------------------------------------------------------

CHANCE_KEYS = 20


def criterion_3():
    train, test, model = make_task(Setup(), seed=0)
    base = evaluate(model, test).accuracy
    keys = device_keys(CHANCE_KEYS)
    cfg = CipherConfig()
    all_acc = np.array([encrypted_accuracy(model, test, k, cfg) for k in keys])
    first_acc = np.array([encrypted_accuracy(model, test, k, cfg, layers=[0]) for k in keys])
    chance = 1.0 / Setup().classes
    collapse = abs(all_acc.mean() - chance) <= 0.05
    first_higher = first_acc.mean() > all_acc.mean()
    se = np.std(first_acc - all_acc, ddof=1) / np.sqrt(len(keys))
    wins = int(np.sum(first_acc > all_acc))
    passed = base >= 0.90 and collapse and first_higher
    return passed, (f"plain={base:.3f}; all layers mean={all_acc.mean():.4f} (target {chance:.2f}+/-0.05); "
                    f"first layer only mean={first_acc.mean():.4f} vs all {all_acc.mean():.4f} "
                    f"(diff {first_acc.mean() - all_acc.mean():+.4f}, SE {se:.4f}, "
                    f"first>all in {wins}/{len(keys)} keys)")


# -- 4 ------------------------------------------------------------------------

FINETUNE_KEYS = 10


def criterion_4():
    train, test, model = make_task(Setup(), seed=0)
    keys = device_keys(FINETUNE_KEYS)
    rows = finetune_sweep(model, train, test, keys, fractions=FRACTIONS)
    by_k = {}
    for k, f, acc in rows:
        by_k.setdefault(k, []).append(acc)
    frac_ok = all(monotone_within(v, 0.02, increasing=True) for v in by_k.values())
    at_one = [by_k[k][0] for k in sorted(by_k)]
    layer_ok = all(a > b for a, b in zip(at_one, at_one[1:]))
    curves = "; ".join(f"k={k}: " + ",".join(f"{a:.3f}" for a in v) for k, v in sorted(by_k.items()))
    return frac_ok and layer_ok, (f"fractions {','.join(f'{f:g}' for f in FRACTIONS)} -> {curves}; "
                                  f"at 1%: {' > '.join(f'{a:.3f}' for a in at_one)}")


# -- 5 ------------------------------------------------------------------------

SWEEP_KEYS = 10


def criterion_5():
    _, test, model = make_task(Setup(), seed=0)
    keys = device_keys(SWEEP_KEYS)
    by_np = parameter_sweep(model, test, keys, "n_p")
    by_nd = parameter_sweep(model, test, keys, "n_d")
    weakest = float(np.mean([encrypted_accuracy(model, test, k, CipherConfig(n_p=1, n_d=1)) for k in keys]))
    chance = 1.0 / Setup().classes
    ok = (monotone_within(by_np.values(), 0.02, increasing=False)
          and monotone_within(by_nd.values(), 0.02, increasing=False)
          and abs(weakest - chance) <= 0.10)
    fmt = lambda d: ",".join(f"{v:.3f}" for v in d.values())  # noqa: E731
    return ok, f"n_p 1..5: {fmt(by_np)}; n_d 1..5: {fmt(by_nd)}; n_p=n_d=1: {weakest:.3f} (chance {chance:.2f}+/-0.10)"


# -- 6 ------------------------------------------------------------------------

def criterion_6():
    rng = np.random.default_rng(606)
    devices = [puf.new_device(50_000 + i) for i in range(100)]
    challenges = [puf.random_challenge(rng) for _ in range(3)]
    uniq = puf.uniqueness(devices, challenges)
    errs = []
    for target in (0.005, 0.01, 0.05, 0.1):
        sigma = puf.calibrate_sigma(target)
        noisy = [d.with_noise(sigma) for d in devices[:20]]
        measured = np.mean([puf.reliability_ber(d, puf.random_challenge(rng), rng, 100) for d in noisy])
        errs.append((target, measured))
    ber_ok = all(abs(m - t) <= 0.005 for t, m in errs)
    detail = (f"inter-device FHD mean={uniq:.4f} over 100 devices (in [0.45,0.55]); "
              + ", ".join(f"target {t:g} -> {m:.4f}" for t, m in errs))
    return 0.45 <= uniq <= 0.55 and ber_ok, detail


# -- 7 ------------------------------------------------------------------------

def _protocol_model():
    rng = np.random.default_rng(7)
    return ModelWeights([Layer("dense1", rng.normal(size=(16, 8)), rng.normal(size=16), "relu"),
                         Layer("dense2", rng.normal(size=(4, 16)), rng.normal(size=4), "softmax")])


def criterion_7():
    model = _protocol_model()
    sigma = puf.calibrate_sigma(0.01)
    sessions = 1000

    prov = Provider(rng=np.random.default_rng(71))
    dev = DeviceNode(puf.new_device(700, sigma), rng=np.random.default_rng(72))
    register(prov, dev, sessions)
    honest = 0
    for _ in range(sessions):
        got, outcome = run_session(prov, dev, model)
        honest += outcome == DELIVERED and got == model

    prov = Provider(rng=np.random.default_rng(73))
    victim = DeviceNode(puf.new_device(701, sigma), rng=np.random.default_rng(74))
    register(prov, victim, sessions)
    impostor = 0
    for i in range(sessions):
        chip = puf.new_device(80_000 + i, sigma, device_id=victim.device_id)
        clone = DeviceNode(chip, victim.store, rng=np.random.default_rng(i))
        impostor += run_session(prov, clone, model)[1] == DELIVERED

    prov = Provider(rng=np.random.default_rng(75))
    dev = DeviceNode(puf.new_device(702, sigma), rng=np.random.default_rng(76))
    replays = 100
    register(prov, dev, replays)
    rejected = 0
    for _ in range(replays):
        ps, ds = prov.session(), dev.session()
        stale = ps.handle_request(ds.request())
        ds.verify_and_reply(stale)
        fresh = dev.session()
        fresh.request()
        reply = fresh.verify_and_reply(stale)
        rejected += decode_frame(reply)[0] == ERROR

    leaks = _key_scan(model)
    ok = honest >= 0.99 * sessions and impostor == 0 and rejected == replays and leaks == 0
    return ok, (f"honest {honest}/{sessions} delivered; impostor {impostor}/{sessions}; "
                f"replayed M_p1 rejected {rejected}/{replays}; key substrings found in device files: {leaks}")


def _key_scan(model) -> int:
    with tempfile.TemporaryDirectory() as work:
        prov = Provider(CrpStore(os.path.join(work, "provider.pfdb")), rng=np.random.default_rng(77))
        dev = DeviceNode(puf.new_device(703, 0.0), rng=np.random.default_rng(78))
        register(prov, dev, 8)
        device_dir = os.path.join(work, "device")
        os.mkdir(device_dir)
        for i in range(4):
            ps, ds = prov.session(), dev.session()
            m4 = ps.handle_reply(ds.verify_and_reply(ps.handle_request(ds.request())), model)
            ds.receive_model(m4)
            save_encrypted(ds.encrypted, os.path.join(device_dir, f"model{i}.pdwe"))
        dev.store.save(os.path.join(device_dir, "helpers.pfdv"))
        puf.save_device(dev.puf, os.path.join(device_dir, "chip.pufd"))
        # sigma = 0: the enrolled responses are exactly the keys
        keys = [to_bytes(puf.reference_response(dev.puf, np.unpackbits(np.frombuffer(c, np.uint8))))
                for c in dev.store.pairs]
        leaks = 0
        for name in os.listdir(device_dir):
            with open(os.path.join(device_dir, name), "rb") as fh:
                blob = fh.read()
            for k in keys:
                leaks += sum(k[i:i + 8] in blob for i in range(len(k) - 7))
        return leaks


# -- 8 ------------------------------------------------------------------------

def criterion_8():
    rng = np.random.default_rng(808)
    enc_ok = True
    for B in range(1, 11):
        for word in itertools.product([0, 1], repeat=B):
            if B > 8 and rng.random() > 0.1:
                continue
            enc_ok &= conv_encode(list(word)).tolist() == direct_encode(list(word), DEFAULT_TAPS)
    for _ in range(300):
        word = rng.integers(0, 2, int(rng.integers(11, 400))).tolist()
        enc_ok &= conv_encode(word).tolist() == direct_encode(word, DEFAULT_TAPS)

    step_err = 0.0
    for _ in range(2000):
        s, lam = rng.random(), rng.uniform(3.5901, 3.9899)
        step_err = max(step_err, abs(logistic_step(s, lam) - mp_logistic(s, lam)))
        p = NcaParams(0.5, rng.uniform(1.0001, 1.4), rng.uniform(5.0, 43.0))
        step_err = max(step_err, abs(nca_step(s, p) - mp_nca(s, p.alpha, p.beta)))
    key = SecretKey(rng.integers(0, 2, 384))
    lp, dp = derive_logistic(key.kp), derive_nca(key.kd)
    for s in logistic_sequence(lp, 100, 200):
        step_err = max(step_err, abs(logistic_step(s, lp.lam) - mp_logistic(s, lp.lam)))
        step_err = max(step_err, abs(nca_step(s, dp) - mp_nca(s, dp.alpha, dp.beta)))

    grad_err = 0.0
    for arch, seed in (([2, 1, 3], 1), ([5, 4, 3, 3], 2), ([6, 8, 4], 3)):
        g = np.random.default_rng(seed)
        params = [(w, g.normal(0, 0.1, b.shape)) for w, b in init_params(arch, g)]
        x = g.normal(size=(8, arch[0]))
        y = g.integers(0, arch[-1], 8)
        _, grads = loss_and_grads(params, x, y)
        num = numeric_grads(lambda p: loss_and_grads(p, x, y)[0], params)
        for (aw, ab), (nw, nb) in zip(grads, num):
            for a, n in ((aw, nw), (ab, nb)):
                grad_err = max(grad_err, float(np.linalg.norm(a - n) / max(np.linalg.norm(n), 1e-12)))
    ok = enc_ok and step_err <= 1e-12 and grad_err <= 1e-4
    return ok, (f"encoder vs triple loop {'identical' if enc_ok else 'MISMATCH'}; "
                f"map step max error={step_err:.1e} (<=1e-12); gradient max rel error={grad_err:.1e} (<=1e-4)")


CRITERIA = [
    (1, "fuzzy-extractor correctness", criterion_1, 60),
    (2, "round-trip fidelity", criterion_2, 30),
    (3, "chance-level collapse", criterion_3, 120),
    (4, "fine-tuning trend", criterion_4, 300),
    (5, "parameter sweeps", criterion_5, 300),
    (6, "PUF statistics", criterion_6, 30),
    (7, "protocol soundness", criterion_7, 120),
    (8, "oracle equivalences", criterion_8, 60),
]


def _check(capsys, num):
    _, title, fn, limit = CRITERIA[num - 1]
    ok, line = _run(num, title, fn, limit)
    with capsys.disabled():
        print("\n" + line)
    assert ok, line


def test_criterion_1_fuzzy_extractor(capsys):
    _check(capsys, 1)


def test_criterion_2_round_trip(capsys):
    _check(capsys, 2)


def test_criterion_3_chance_collapse(capsys):
    _check(capsys, 3)


def test_criterion_4_finetune_trend(capsys):
    _check(capsys, 4)


def test_criterion_5_parameter_sweeps(capsys):
    _check(capsys, 5)


def test_criterion_6_puf_statistics(capsys):
    _check(capsys, 6)


def test_criterion_7_protocol(capsys):
    _check(capsys, 7)


def test_criterion_8_oracles(capsys):
    _check(capsys, 8)


if __name__ == "__main__":
    failures = 0
    for num, title, fn, limit in CRITERIA:
        ok, line = _run(num, title, fn, limit)
        print(line, flush=True)
        failures += not ok
    sys.exit(1 if failures else 0)
