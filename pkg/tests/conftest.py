"""Shared fixtures: synthetic datasets, cached training runs, golden pipeline.

The heavier end-to-end runs (small trace-equivalence runs, full dataset
runs at the CI profile) are session-scoped so the equivalence, accuracy,
interaction-count and audit tests all reuse one execution.
"""

import math
import os
import random

import pytest

from phetrain import blocks, phe
from phetrain.data import (
    DatasetSchema,
    FeatureSpec,
    Table,
    feature_ranges,
    load_csv,
    load_schema,
    normalize,
    split,
)
from phetrain.encoding import fx_encode
from phetrain.net import DEMANDER, derive_rng, open_session, owner_id
from phetrain.oracle import TrainConfig, plain_lr_sgd, plain_svm_sgd
from phetrain.protocols import ProtocolConfig, run_training

HERE = os.path.dirname(os.path.abspath(__file__))
DATA_DIR = os.path.join(HERE, "..", "data")
BCWD_CSV = os.path.join(DATA_DIR, "bcwd.csv")
BCWD_SCHEMA = os.path.join(DATA_DIR, "bcwd_schema.json")

# CI profile for the full-dataset runs: hyperparameters fixed per protocol.
CI_PROFILE = {
    "svm": dict(key_bits=1024, rsa_bits=1024, iters=200, lam=0.02, alpha=1.0),
    "lr": dict(key_bits=1024, rsa_bits=6144, iters=200, lam=0.05, alpha=1.0),
    "nb": dict(key_bits=1024, rsa_bits=512, iters=1, lam=0.05, alpha=1.0),
}


def synthetic_table(n_rows=20, seed=7, d=2):
    """Small separable-with-noise binary dataset, features already in [0,1]."""
    rng = random.Random(seed)
    schema = DatasetSchema(
        features=tuple(FeatureSpec(name=f"f{j}", kind="numeric")
                       for j in range(d)),
        label="y", positive_label="1",
        columns=tuple(f"f{j}" for j in range(d)) + ("y",))
    table = Table(schema=schema)
    for _ in range(n_rows):
        row = tuple(round(rng.uniform(0, 1), 3) for _ in range(d))
        y = 1 if sum(row) > 0.55 * d else 0
        if rng.random() < 0.1:
            y = 1 - y
        table.rows.append(row)
        table.labels.append(str(y))
    # make sure both classes are present (tiny tables may be single-class)
    if n_rows >= 15:
        assert len(set(table.labels)) == 2
    return table


@pytest.fixture(scope="session")
def small_table():
    return synthetic_table()


def run_protocol(train_table, test_table, protocol, seed=0, n_owners=3,
                 key_bits=512, rsa_bits=512, iters=50, lam=0.05, alpha=1.0,
                 **kw):
    cfg = ProtocolConfig(protocol=protocol, n_owners=n_owners,
                         key_bits=key_bits, rsa_bits=rsa_bits, iters=iters,
                         lam=lam, alpha=alpha, seed=seed,
                         dataset_name="test", **kw)
    return run_training(train_table, test_table, cfg), cfg


@pytest.fixture(scope="session")
def small_runs(small_table):
    """Secure SVM and LR on the 20-record set: 3 owners, 50 iterations,
    512-bit keys, plus the matching quantized-oracle traces."""
    out = {}
    for protocol in ("svm", "lr"):
        # the sigmoid trainer's fractional exponents outgrow a 512-bit
        # multiplicative modulus even at this size
        rsa_bits = 1024 if protocol == "lr" else 512
        result, cfg = run_protocol(small_table, small_table, protocol,
                                   rsa_bits=rsa_bits)
        ocfg = TrainConfig(lam=cfg.lam, alpha=cfg.alpha, iters=cfg.iters,
                           seed=cfg.seed)
        rows, labels = result.global_train
        trainer = plain_svm_sgd if protocol == "svm" else plain_lr_sgd
        oracle = trainer(rows, labels, ocfg, quantized=True)
        out[protocol] = (result, oracle, cfg)
    return out


@pytest.fixture(scope="session")
def bcwd_table():
    return load_csv(BCWD_CSV, load_schema(BCWD_SCHEMA))


def bcwd_split(table, seed, test_fraction=0.3):
    train, test = split(table, test_fraction, derive_rng(seed, "split"))
    ranges = feature_ranges(train)
    return normalize(train, ranges), normalize(test, ranges)


@pytest.fixture(scope="session")
def bcwd_runner(bcwd_table):
    """Memoized full-dataset run at the CI profile: runner(protocol, seed)
    -> (RunResult, train_table, test_table)."""
    cache = {}

    def run(protocol, seed):
        key = (protocol, seed)
        if key not in cache:
            train, test = bcwd_split(bcwd_table, seed)
            prof = CI_PROFILE[protocol]
            cfg = ProtocolConfig(protocol=protocol, n_owners=5, seed=seed,
                                 dataset_name="bcwd.csv", **prof)
            cache[key] = (run_training(train, test, cfg), train, test)
        return cache[key]

    return run


# ---------------------------------------------------------------------------
# Golden two-feature pipeline: x=(0.1, 0.2), theta=(1.31, 2.42), blind -2.


def golden_pipeline(seed=99, paillier_bits=512, rsa_bits=1024):
    """Run the power function -> blind -> convert -> unblind chain on the
    fixed two-feature case and return every intermediate."""
    session = open_session(1, 0, seed)
    pk_o, sk_o = phe.paillier_keygen(paillier_bits,
                                     derive_rng(seed, "key-owner-1"))
    pk_d, sk_d = phe.paillier_keygen(paillier_bits,
                                     derive_rng(seed, "key-demander"))
    rsa = phe.cloudrsa_keygen(rsa_bits, derive_rng(seed, "rsa-owner-1"))
    dem = blocks.DemanderState(pk_d, sk_d, session)
    dem.add_owner(1, pk_o, rsa.n, rsa.enc_exp, rsa.key_id)
    owner = blocks.OwnerBlocks(1, pk_o, sk_o, rsa, {pk_d.key_id: pk_d},
                               session)
    session.register(owner_id(1), owner)

    x = (0.1, 0.2)
    pos_m = [fx_encode(math.exp(v), 2) for v in x]
    neg_m = [fx_encode(math.exp(-v), 2) for v in x]

    def enc(m):
        return phe.cloudrsa_encrypt(rsa.n, rsa.enc_exp, m, key_id=rsa.key_id)

    ev = blocks.ExpEncodedVector(pos=[enc(m) for m in pos_m],
                                 neg=[enc(m) for m in neg_m])
    theta = [131, 242]
    pr = blocks.secure_pow(rsa.n, ev, theta, negate=False)
    blinded = blocks.blind_pow_result(dem, 1, pr, -2)
    w_sc = blocks.send_convert_request(dem, owner_id(1), blinded,
                                       session.new_nonce_id())
    out, dec = blocks.unblind_converted(pk_o, w_sc, -2)
    return {
        "pos_mantissas": pos_m,
        "neg_mantissas": neg_m,
        "int": phe.cloudrsa_decrypt(rsa, pr.int_ct.ct),
        "int_scale": pr.int_ct.scale,
        "frac": phe.cloudrsa_decrypt(rsa, pr.frac_ct.ct),
        "frac_scale": pr.frac_ct.scale,
        "blind_int": phe.cloudrsa_decrypt(rsa, blinded.int_ct.ct),
        "blind_int_scale": blinded.int_ct.scale,
        "blind_frac_scale": blinded.frac_ct.scale,
        "owner_reply": phe.paillier_decrypt(sk_o, w_sc.ct),
        "owner_reply_scale": w_sc.scale,
        "decomposition": (dec.int_part, dec.frac_part),
        "final": phe.paillier_decrypt(sk_o, out.ct),
        "final_scale": out.scale,
        "transcript": session.transcript,
    }


@pytest.fixture(scope="session")
def golden():
    return golden_pipeline()
