#!/usr/bin/env python3
"""Train all three models on the bundled dataset through the library API.

Five data owners each hold a shard of the dataset; the model demander
drives the protocols and ends up with the model, seeing only blinded
values along the way.  A quantized plaintext oracle retrains on the same
record stream and must match the secure coefficient trace integer for
integer.

Short iteration counts keep this demo around a minute; see the command
line front end (`phetrain run --help`) for full-scale runs.
"""

import os

from phetrain.data import feature_ranges, load_csv, load_schema, normalize, split
from phetrain.net import derive_rng
from phetrain.oracle import TrainConfig, plain_lr_sgd, plain_svm_sgd
from phetrain.protocols import ProtocolConfig, run_training

HERE = os.path.dirname(os.path.abspath(__file__))
DATA = os.path.join(HERE, "..", "data")

PROFILES = {
    "nb": dict(key_bits=1024, rsa_bits=512, iters=1, lam=0.05),
    "svm": dict(key_bits=512, rsa_bits=512, iters=60, lam=0.02),
    "lr": dict(key_bits=512, rsa_bits=2048, iters=60, lam=0.05),
}


def main():
    seed = 0
    schema = load_schema(os.path.join(DATA, "bcwd_schema.json"))
    table = load_csv(os.path.join(DATA, "bcwd.csv"), schema)
    print(f"dataset: {len(table)} usable records "
          f"({table.dropped_missing} dropped for missing values)")
    train, test = split(table, 0.3, derive_rng(seed, "split"))
    ranges = feature_ranges(train)
    train_n, test_n = normalize(train, ranges), normalize(test, ranges)

    for protocol, prof in PROFILES.items():
        cfg = ProtocolConfig(protocol=protocol, n_owners=5, seed=seed,
                             dataset_name="bcwd.csv", **prof)
        result = run_training(train_n, test_n, cfg)
        m = result.metrics
        line = (f"{protocol:>3}: accuracy {m['accuracy']:.4f}  "
                f"interactions {m['interactions']:>4}  "
                f"bytes {m['bytes']:>9}  audit "
                f"{'pass' if result.audit.passed else 'FAIL'}")
        if protocol in ("svm", "lr"):
            rows, labels = result.global_train
            ocfg = TrainConfig(lam=cfg.lam, alpha=cfg.alpha,
                               iters=cfg.iters, seed=seed)
            trainer = plain_svm_sgd if protocol == "svm" else plain_lr_sgd
            oracle = trainer(rows, labels, ocfg, quantized=True)
            line += ("  oracle trace "
                     + ("identical" if oracle == result.trace else "DIVERGED"))
        print(line)


if __name__ == "__main__":
    main()
