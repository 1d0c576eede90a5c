"""Command-line front end: protocol runs, block microbenchmarks, keygen.

Exit codes: 0 success; 2 invalid configuration (key size or digit budget);
3 transcript audit failure; 4 oracle trace divergence (--quantized-oracle);
1 other errors.
"""

import argparse
import csv
import json
import os
import sys
import time

import jsonschema

from . import phe
from .blocks import (
    DemanderState,
    ExpEncodedVector,
    convert_paillier_key,
    convert_rsa_to_paillier,
    secure_add,
    secure_ct_mul,
    secure_dot,
    secure_pow,
    secure_sign,
    secure_sub,
)
from .data import load_csv, load_schema, feature_ranges, normalize, split
from .encoding import (
    BudgetError,
    DEFAULT_SCALE,
    ScaledCiphertext,
    budget_check_lr,
    fx_encode,
    key_digits,
)
from .net import DEMANDER, TAINT_CIPHER, derive_rng, owner_id
from .oracle import TrainConfig, plain_lr_sgd, plain_nb, plain_svm_sgd
from .protocols import OwnerParty, ProtocolConfig, run_training, setup_training

METRICS_SCHEMA = {
    "type": "object",
    "required": ["protocol", "dataset", "n_owners", "key_bits", "iters",
                 "accuracy", "interactions", "bytes", "sim_latency_ms",
                 "wall_ms_demander", "wall_ms_owner_total", "seed"],
    "properties": {
        "protocol": {"enum": ["svm", "lr", "nb"]},
        "dataset": {"type": "string"},
        "n_owners": {"type": "integer", "minimum": 1},
        "key_bits": {"type": "integer"},
        "iters": {"type": "integer", "minimum": 1},
        "accuracy": {"type": "number", "minimum": 0, "maximum": 1},
        "interactions": {"type": "integer", "minimum": 0},
        "bytes": {"type": "integer", "minimum": 0},
        "sim_latency_ms": {"type": "number", "minimum": 0},
        "wall_ms_demander": {"type": "number", "minimum": 0},
        "wall_ms_owner_total": {"type": "number", "minimum": 0},
        "seed": {"type": "integer"},
    },
    "additionalProperties": False,
}


def _add_run_args(p):
    p.add_argument("--protocol", required=True, choices=["lr", "svm", "nb"])
    p.add_argument("--dataset", required=True)
    p.add_argument("--schema", required=True)
    p.add_argument("--owners", type=int, default=5)
    p.add_argument("--key-bits", type=int, default=1024)
    p.add_argument("--rsa-bits", type=int, default=2048,
                   help="modulus size of the multiplicative cryptosystem "
                        "(sized by the digit budget, may exceed --key-bits)")
    p.add_argument("--iters", type=int, default=200)
    p.add_argument("--lambda", dest="lam", type=float, default=0.05)
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--latency-ms", type=int, default=0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None, help="metrics JSON path")
    p.add_argument("--test-fraction", type=float, default=0.3)
    p.add_argument("--quantized-oracle", action="store_true",
                   help="run the quantized plaintext oracle side by side "
                        "and diff the coefficient traces")
    p.add_argument("--transcript", default=None,
                   help="write the session transcript as JSON lines")
    p.add_argument("--theta-bound", type=float, default=50.0,
                   help="assumed bound on the coefficient L1 norm for the "
                        "digit-budget pre-flight check")


def cmd_run(args):
    seed = int(os.environ.get("HEDA_SEED", args.seed))
    for label, bits in (("--key-bits", args.key_bits),
                        ("--rsa-bits", args.rsa_bits)):
        if bits not in phe.VALID_KEY_BITS:
            print(f"error: {label} {bits} unsupported; valid sizes: "
                  f"{', '.join(map(str, phe.VALID_KEY_BITS))}",
                  file=sys.stderr)
            return 2
    if args.protocol == "lr":
        schema0 = load_schema(args.schema)
        ok, req, dig = budget_check_lr(schema0.d + 1, args.theta_bound,
                                       args.rsa_bits)
        if not ok:
            print(f"error: digit budget violated: coefficient bound "
                  f"{args.theta_bound} with {schema0.d + 1} features needs "
                  f"{req} decimal digits but a {args.rsa_bits}-bit modulus "
                  f"provides {dig} (margin {dig - req})", file=sys.stderr)
            return 2

    schema = load_schema(args.schema)
    table = load_csv(args.dataset, schema)
    train, test = split(table, args.test_fraction, derive_rng(seed, "split"))
    ranges = feature_ranges(train)
    train_n, test_n = normalize(train, ranges), normalize(test, ranges)

    cfg = ProtocolConfig(
        protocol=args.protocol, n_owners=args.owners,
        key_bits=args.key_bits, rsa_bits=args.rsa_bits, iters=args.iters,
        lam=args.lam, alpha=args.alpha, latency_ms=args.latency_ms,
        seed=seed, theta_l1_bound=args.theta_bound,
        dataset_name=os.path.basename(args.dataset))
    try:
        result = run_training(train_n, test_n, cfg)
    except BudgetError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2

    m = result.metrics
    print(f"protocol={m['protocol']} accuracy={m['accuracy']} "
          f"interactions={m['interactions']} bytes={m['bytes']} "
          f"sim_latency_ms={m['sim_latency_ms']}")

    if args.transcript:
        result.transcript.write_jsonl(args.transcript)
    jsonschema.validate(m, METRICS_SCHEMA)
    if args.out:
        with open(args.out, "w") as f:
            json.dump(m, f, sort_keys=True, indent=2)
            f.write("\n")

    if not result.audit.passed:
        print("audit FAILED:", file=sys.stderr)
        for v in result.audit.violations:
            print(f"  {v['code']}: {v['detail']}", file=sys.stderr)
        return 3

    if args.quantized_oracle:
        code = _diff_oracle(args, cfg, result, train_n)
        if code:
            return code
    return 0


def _diff_oracle(args, cfg, result, train_n):
    rows, labels = result.global_train
    ocfg = TrainConfig(lam=cfg.lam, alpha=cfg.alpha, iters=cfg.iters,
                       seed=cfg.seed)
    if cfg.protocol == "svm":
        ref = plain_svm_sgd(rows, labels, ocfg, quantized=True)
    elif cfg.protocol == "lr":
        ref = plain_lr_sgd(rows, labels, ocfg, quantized=True)
    else:
        kinds = tuple(f.kind for f in train_n.schema.features)
        ref_model = plain_nb(
            [tuple(r) for r in rows], labels, kinds)
        same = (ref_model.priors == result.model.priors
                and ref_model.gaussian == result.model.gaussian
                and ref_model.categorical == result.model.categorical)
        print(f"oracle check: model {'identical' if same else 'DIVERGED'}")
        return 0 if same else 4
    mismatches = sum(1 for a, b in zip(result.trace, ref) if a != b)
    print(f"oracle check: {len(ref)} iterations, "
          f"{mismatches} mismatching steps")
    return 0 if mismatches == 0 else 4


def cmd_bench_blocks(args):
    """Per-block timings/bytes with 5-dimensional vectors, averaged over
    the requested number of trials."""
    seed = int(os.environ.get("HEDA_SEED", args.seed))
    d = 5
    rng = derive_rng(seed, "bench-data")
    rows = [[rng.uniform(0, 1) for _ in range(d - 1)]]
    cfg = ProtocolConfig(protocol="svm", n_owners=1, key_bits=args.key_bits,
                         rsa_bits=args.key_bits, iters=1, seed=seed)
    ts = setup_training([(rows, [1])], cfg)
    session, dem = ts.session, ts.dem
    pk1 = dem.owner_pks[1]
    owner = ts.owners[0]
    results = []

    def measure(block, fn, interactions):
        total = 0.0
        owner0 = session.owner_wall_ms
        bytes0 = session.transcript.bytes
        for _ in range(args.trials):
            t0 = time.perf_counter()
            fn()
            total += time.perf_counter() - t0
        total_ms = total * 1000.0 / args.trials
        owner_ms = (session.owner_wall_ms - owner0) / args.trials
        nbytes = (session.transcript.bytes - bytes0) // args.trials
        results.append({
            "block": block,
            "owner_ms": round(owner_ms, 4),
            "demander_ms": round(max(total_ms - owner_ms, 0.0), 4),
            "total_ms": round(total_ms, 4),
            "interactions": interactions,
            "bytes": nbytes,
        })

    vec = [dem.encrypt_for(1, fx_encode(rng.uniform(0, 1), 2), 2)
           for _ in range(d)]
    w = [fx_encode(rng.uniform(-1, 1), 2) for _ in range(d)]
    measure("add", lambda: secure_add(pk1, vec[0], vec[1]), 0)
    measure("sub", lambda: secure_sub(pk1, vec[0], vec[1]), 0)
    measure("pcmul", lambda: ScaledCiphertext(
        phe.paillier_scalar_pow(pk1, vec[0].ct, w[0]), 4), 0)
    measure("dot", lambda: secure_dot(pk1, vec, w), 0)

    rsa = owner.rsa
    rc = [ScaledCiphertext(
        phe.cloudrsa_encrypt(rsa.n, rsa.enc_exp,
                             fx_encode(rng.uniform(1, 2), 2),
                             key_id=rsa.key_id), 2) for _ in range(2)]
    measure("ccmul", lambda: secure_ct_mul(rsa.n, rc[0], rc[1]), 0)

    # small fixed coefficients keep the power function inside the digit
    # budget even at the smallest key size
    theta = [10, 5, 7, 3, 6]

    def do_pow():
        reply = session.rpc(DEMANDER, owner_id(1), "exp-fetch", {"t": 0},
                            scale=2, taint=TAINT_CIPHER)
        exp_vec = ExpEncodedVector(
            pos=[phe.CloudRsaCiphertext(int(doc["value"], 16), doc["key_id"])
                 for doc in reply.payload["pos"]],
            neg=[phe.CloudRsaCiphertext(int(doc["value"], 16), doc["key_id"])
                 for doc in reply.payload["neg"]])
        return secure_pow(rsa.n, exp_vec, theta)

    measure("pow", do_pow, 1)
    pr = do_pow()
    measure("conv7",
            lambda: convert_rsa_to_paillier(dem, owner_id(1), 1, pr), 1)
    measure("conv8",
            lambda: convert_paillier_key(dem, owner_id(1), pk1, dem.pk,
                                         vec[0]), 1)
    measure("sign",
            lambda: secure_sign(dem, owner_id(1), 1, vec[0]), 1)

    out = args.out or "-"
    fieldnames = ["block", "owner_ms", "demander_ms", "total_ms",
                  "interactions", "bytes"]
    f = sys.stdout if out == "-" else open(out, "w", newline="")
    try:
        writer = csv.DictWriter(f, fieldnames=fieldnames)
        writer.writeheader()
        writer.writerows(results)
    finally:
        if f is not sys.stdout:
            f.close()
    return 0


def cmd_keygen(args):
    seed = int(os.environ.get("HEDA_SEED", args.seed))
    if args.bits not in phe.VALID_KEY_BITS:
        print(f"error: unsupported key size {args.bits}", file=sys.stderr)
        return 2
    rng = derive_rng(seed, f"keygen-{args.kind}")
    if args.kind == "paillier":
        pk, sk = phe.paillier_keygen(args.bits, rng)
        doc = {"public": phe.serialize_key(pk)}
        if not args.public_only:
            doc["private"] = phe.serialize_key(sk)
        key_id = pk.key_id
    else:
        key = phe.cloudrsa_keygen(args.bits, rng)
        doc = phe.serialize_key(key, public_only=args.public_only)
        key_id = key.key_id
    with open(args.out, "w") as f:
        json.dump(doc, f, sort_keys=True, indent=2)
        f.write("\n")
    print(f"key_id={key_id}")
    return 0


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="phetrain",
        description="Privacy-preserving multi-party training over "
                    "partially homomorphic encryption")
    sub = parser.add_subparsers(dest="cmd", required=True)

    run_p = sub.add_parser("run", help="train a model in the simulator")
    _add_run_args(run_p)

    bench_p = sub.add_parser("bench-blocks",
                             help="microbenchmark the building blocks")
    bench_p.add_argument("--key-bits", type=int, default=1024)
    bench_p.add_argument("--trials", type=int, default=3)
    bench_p.add_argument("--seed", type=int, default=0)
    bench_p.add_argument("--out", default="-")

    key_p = sub.add_parser("keygen", help="generate and serialize a key")
    key_p.add_argument("--kind", required=True,
                       choices=["paillier", "cloudrsa"])
    key_p.add_argument("--bits", type=int, required=True)
    key_p.add_argument("--out", required=True)
    key_p.add_argument("--seed", type=int, default=0)
    key_p.add_argument("--public-only", action="store_true")

    args = parser.parse_args(argv)
    if args.cmd == "run":
        return cmd_run(args)
    if args.cmd == "bench-blocks":
        return cmd_bench_blocks(args)
    return cmd_keygen(args)


if __name__ == "__main__":
    sys.exit(main())
