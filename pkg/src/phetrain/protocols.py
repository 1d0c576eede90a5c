"""The three training protocols, orchestrated over the building blocks.

One model demander drives T iterations of SGD (margin trainer, sigmoid
trainer) or one batched-summation pass per statistic family (count-based
trainer) against n data owners.  The demander holds the model coefficients
in plaintext between iterations (the per-iteration disclosure is the
framework's accepted posture); owners only ever see blinded values.

Round-trip budget per iteration:
  * sigmoid trainer: exactly 4 (exponential fetch, conversion, sigmoid,
    key switch);
  * margin trainer: at most 3 (record fetch, sign test, key switch — the
    switch is skipped when the margin is satisfied);
  * count-based trainer: n+1 per batched statistic family.
"""

import math
import time
from dataclasses import dataclass, field

from . import phe
from .blocks import (
    DemanderState,
    ExpEncodedVector,
    OwnerBlocks,
    ProtocolAbort,
    blind_pow_result,
    convert_paillier_key_vec,
    secure_add,
    secure_dot,
    secure_pow,
    secure_sign,
    secure_sub,
    secure_sum,
    send_convert_request,
)
from .data import labels_01, labels_pm1, partition
from .encoding import (
    BudgetError,
    DEFAULT_SCALE,
    ScaledCiphertext,
    budget_check_lr,
    fx_encode,
    round_div,
    to_residue,
)
from .net import (
    DEMANDER,
    TAINT_CIPHER,
    TAINT_PUBLIC,
    audit_transcript,
    derive_rng,
    open_session,
    owner_id,
    taint_blinded,
)
from .oracle import (
    NbStats,
    SIG_SCALE,
    UPDATE_SCALE,
    accuracy,
    local_nb_stats,
    lr_predict,
    model_from_stats,
    nb_predict,
    svm_predict,
)

LR_BLIND_RANGE = (1, 8)  # positive keeps the blinded exponential large


@dataclass
class ProtocolConfig:
    protocol: str                 # "svm" | "lr" | "nb"
    n_owners: int = 5
    key_bits: int = 1024          # Paillier modulus size
    rsa_bits: int = 2048          # multiplicative-RSA modulus size
    iters: int = 200
    lam: float = 0.05
    alpha: float = 1.0
    latency_ms: int = 0
    seed: int = 0
    theta_l1_bound: float = 50.0  # digit-budget pre-flight bound
    dataset_name: str = "synthetic"
    nb_smoothing: bool = False


@dataclass
class ModelParams:
    theta: list                   # scale-2 mantissas, bias last
    scale: int = DEFAULT_SCALE
    iteration: int = 0


# ---------------------------------------------------------------------------
# Owner party


class OwnerParty(OwnerBlocks):
    """Data owner: building-block handler plus stored (mantissa-encoded)
    records and the protocol-specific fetch/sigmoid/statistics kinds."""

    def __init__(self, index, paillier_pk, paillier_sk, rsa_key, peer_pks,
                 session, rows, labels, kinds=None, classes=(0, 1)):
        super().__init__(index, paillier_pk, paillier_sk, rsa_key, peer_pks,
                         session)
        # rows arrive as floats in [0, 1]; store scale-2 mantissas with the
        # bias feature appended for the SGD trainers
        self.x_mant = [[fx_encode(v, DEFAULT_SCALE) for v in row] + [100]
                       for row in rows]
        self.raw_rows = [tuple(row) for row in rows]
        self.labels = list(labels)
        self.kinds = tuple(kinds) if kinds else ()
        self.classes = tuple(classes)
        self._exp_cache = {}

    # --- SGD record service ------------------------------------------------

    def _xy_cts(self, t):
        y = self.labels[t]
        out = []
        for xm in self.x_mant[t]:
            m = to_residue(xm * y, self.pk.n)
            ct = phe.paillier_encrypt(self.pk, m, self.session.rng_crypto)
            out.append(phe.serialize_ciphertext(ct))
        return out

    def on_record_fetch(self, env):
        t = env.payload["t"]
        return "record-reply", {"xy": self._xy_cts(t)}, DEFAULT_SCALE, TAINT_CIPHER

    def _exp_bases(self, t):
        if t not in self._exp_cache:
            pos, neg = [], []
            for xm in self.x_mant[t]:
                x = xm / 10 ** DEFAULT_SCALE
                pos.append(fx_encode(math.exp(x), DEFAULT_SCALE))
                neg.append(fx_encode(math.exp(-x), DEFAULT_SCALE))
            self._exp_cache[t] = (pos, neg)
        return self._exp_cache[t]

    def on_exp_fetch(self, env):
        t = env.payload["t"]
        pos, neg = self._exp_bases(t)
        enc = lambda m: phe.serialize_ciphertext(
            phe.cloudrsa_encrypt(self.rsa.n, self.rsa.enc_exp, m,
                                 key_id=self.rsa.key_id))
        payload = {
            "pos": [enc(m) for m in pos],
            "neg": [enc(m) for m in neg],
            "xy": self._xy_cts(t),
        }
        return "exp-reply", payload, DEFAULT_SCALE, TAINT_CIPHER

    def on_sigmoid_request(self, env):
        t = env.payload["t"]
        denom = self._decrypt_paillier(env.payload["ct"])
        if denom <= 0:
            raise ProtocolAbort("non-positive sigmoid denominator")
        out = []
        for xm in self.x_mant[t]:
            q = fx_encode(xm / denom, SIG_SCALE)
            ct = phe.paillier_encrypt(self.pk, to_residue(q, self.pk.n),
                                      self.session.rng_crypto)
            out.append(phe.serialize_ciphertext(ct))
        return "sigmoid-reply", {"cts": out}, SIG_SCALE, TAINT_CIPHER

    # --- statistics service --------------------------------------------------

    def _nb_stats(self):
        return local_nb_stats(self.raw_rows, self.labels, self.kinds,
                              self.classes)

    def nb_family_values(self, family, cat_keys=None):
        st = self._nb_stats()
        numeric = [j for j, k in enumerate(self.kinds) if k == "numeric"]
        if family == "counts":
            return [st.counts[c] for c in self.classes]
        if family == "sum-x":
            return [st.sum_x[(c, j)] for c in self.classes for j in numeric]
        if family == "sum-xsq":
            return [st.sum_xsq[(c, j)] for c in self.classes for j in numeric]
        if family == "cat":
            return [st.cat_counts.get(k, 0) for k in cat_keys]
        raise ProtocolAbort(f"unknown statistic family {family}")

    def on_sum_share_request(self, env):
        family = env.payload["family"]
        cat_keys = [tuple(k) for k in env.payload.get("cat_keys", [])]
        values = self.nb_family_values(family, cat_keys)
        return self.make_sum_share(values, env.payload["scale"])


# ---------------------------------------------------------------------------
# Session setup


@dataclass
class TrainingSession:
    session: object
    dem: DemanderState
    owners: list                  # OwnerParty, index 1..n
    owner_sizes: list             # public record counts


def setup_training(owner_data, cfg, kinds=None, classes=(0, 1)):
    """Generate all key material, open a session and wire the parties.

    owner_data: list of (rows, labels) per owner, rows as floats in [0,1].
    """
    n = len(owner_data)
    session = open_session(n, cfg.latency_ms, cfg.seed)
    pk_d, sk_d = phe.paillier_keygen(cfg.key_bits,
                                     derive_rng(cfg.seed, "key-demander"))
    dem = DemanderState(pk_d, sk_d, session)
    owner_keys = []
    for i in range(1, n + 1):
        pk, sk = phe.paillier_keygen(cfg.key_bits,
                                     derive_rng(cfg.seed, f"key-owner-{i}"))
        rsa = phe.cloudrsa_keygen(cfg.rsa_bits,
                                  derive_rng(cfg.seed, f"rsa-owner-{i}"))
        owner_keys.append((pk, sk, rsa))
        dem.add_owner(i, pk, rsa.n, rsa.enc_exp, rsa.key_id)
    peer_pks = {pk_d.key_id: pk_d}
    for pk, _, _ in owner_keys:
        peer_pks[pk.key_id] = pk
    owners = []
    for i, ((pk, sk, rsa), (rows, labels)) in enumerate(
            zip(owner_keys, owner_data), start=1):
        party = OwnerParty(i, pk, sk, rsa, peer_pks, session, rows, labels,
                           kinds=kinds, classes=classes)
        session.register(owner_id(i), party)
        owners.append(party)
    return TrainingSession(session=session, dem=dem, owners=owners,
                           owner_sizes=[len(rows) for rows, _ in owner_data])


def locate(owner_sizes, t_global):
    """Global record index -> (owner index 1-based, local index)."""
    for i, size in enumerate(owner_sizes, start=1):
        if t_global < size:
            return i, t_global
        t_global -= size
    raise IndexError("record index out of range")


# ---------------------------------------------------------------------------
# Margin trainer


def svm_train(ts, cfg, d):
    """T hinge-SGD iterations; theta has d+1 entries (bias last)."""
    session, dem = ts.session, ts.dem
    m = sum(ts.owner_sizes)
    a = fx_encode(1 - cfg.lam * cfg.alpha, DEFAULT_SCALE)
    b = fx_encode(cfg.lam * cfg.alpha, DEFAULT_SCALE)
    theta = [0] * (d + 1)
    trace = []
    for it in range(cfg.iters):
        t_global = session.rng_records.randrange(m)
        i, t = locate(ts.owner_sizes, t_global)
        pk_i = dem.owner_pks[i]
        reply = session.rpc(DEMANDER, owner_id(i), "record-fetch",
                            {"t": t}, scale=DEFAULT_SCALE, taint=TAINT_CIPHER)
        xy = [_paillier_sc(doc, pk_i, DEFAULT_SCALE)
              for doc in reply.payload["xy"]]
        u = secure_dot(pk_i, xy, theta, w_scale=DEFAULT_SCALE)        # scale 4
        one = dem.encrypt_for(i, 10 ** 4, 4)
        margin = secure_sub(pk_i, one, u)
        v = secure_sign(dem, owner_id(i), i, margin)
        if v == 1:
            new_cts = []
            for j in range(d + 1):
                keep = dem.encrypt_for(i, a * theta[j], 4)
                step = ScaledCiphertext(
                    phe.paillier_scalar_pow(pk_i, xy[j].ct, b), 4)
                new_cts.append(secure_add(pk_i, keep, step))
            switched = convert_paillier_key_vec(dem, owner_id(i), pk_i,
                                                dem.pk, new_cts)
            theta = [round_div(dem.decrypt_signed(c), 100) for c in switched]
        else:
            theta = [round_div(a * theta[j], 100) for j in range(d + 1)]
        trace.append(list(theta))
    return ModelParams(theta=theta, iteration=cfg.iters), trace


# ---------------------------------------------------------------------------
# Sigmoid trainer


def lr_train(ts, cfg, d):
    """T sigmoid-SGD iterations, 4 round trips each."""
    session, dem = ts.session, ts.dem
    passed, required, digits = budget_check_lr(d + 1, cfg.theta_l1_bound,
                                               cfg.rsa_bits)
    if not passed:
        raise BudgetError(
            f"digit budget violated before start: coefficient bound "
            f"{cfg.theta_l1_bound} with {d + 1} features needs {required} "
            f"decimal digits, a {cfg.rsa_bits}-bit key provides only "
            f"{digits} (margin {digits - required})")
    m = sum(ts.owner_sizes)
    lam_m = fx_encode(cfg.lam, DEFAULT_SCALE)
    theta = [0] * (d + 1)
    trace = []
    for it in range(cfg.iters):
        t_global = session.rng_records.randrange(m)
        i, t = locate(ts.owner_sizes, t_global)
        pk_i = dem.owner_pks[i]
        rsa_n, _, rsa_kid = dem.owner_rsa_pub[i]

        # 1. fetch the exponential encodings and the label product
        reply = session.rpc(DEMANDER, owner_id(i), "exp-fetch", {"t": t},
                            scale=DEFAULT_SCALE, taint=TAINT_CIPHER)
        exp_vec = ExpEncodedVector(
            pos=[_rsa_ct(doc) for doc in reply.payload["pos"]],
            neg=[_rsa_ct(doc) for doc in reply.payload["neg"]])
        xy = [_paillier_sc(doc, pk_i, DEFAULT_SCALE)
              for doc in reply.payload["xy"]]

        # 2. power function + blinded conversion to the owner's additive key
        pr = secure_pow(rsa_n, exp_vec, theta)
        blind_r = session.rng_blind.randint(*LR_BLIND_RANGE)
        blinded = blind_pow_result(dem, i, pr, blind_r)
        w_sc = send_convert_request(dem, owner_id(i), blinded,
                                    session.new_nonce_id())

        # 3. sigmoid round on the blinded denominator (e^{-u}+1)*e^{cr}
        unblind = math.exp((1 + 1 / 100) * blind_r)
        denom_ct = secure_add(
            pk_i, w_sc,
            dem.encrypt_for(i, fx_encode(unblind, DEFAULT_SCALE),
                            DEFAULT_SCALE))
        reply = session.rpc(DEMANDER, owner_id(i), "sigmoid-request",
                            {"t": t, "ct": phe.serialize_ciphertext(denom_ct.ct)},
                            scale=DEFAULT_SCALE,
                            taint=taint_blinded(session.new_nonce_id()))
        e8 = fx_encode(unblind, SIG_SCALE)
        new_cts = []
        for j, doc in enumerate(reply.payload["cts"]):
            q = _paillier_sc(doc, pk_i, SIG_SCALE)
            sig = ScaledCiphertext(
                phe.paillier_scalar_pow(pk_i, q.ct, e8), UPDATE_SCALE)
            xy_up = ScaledCiphertext(
                phe.paillier_scalar_pow(
                    pk_i, xy[j].ct, 10 ** (UPDATE_SCALE - DEFAULT_SCALE)),
                UPDATE_SCALE)
            g = secure_sub(pk_i, xy_up, sig)
            keep = dem.encrypt_for(i, theta[j] * 10 ** UPDATE_SCALE,
                                   UPDATE_SCALE + DEFAULT_SCALE)
            step = ScaledCiphertext(
                phe.paillier_scalar_pow(pk_i, g.ct, lam_m),
                UPDATE_SCALE + DEFAULT_SCALE)
            new_cts.append(secure_add(pk_i, keep, step))

        # 4. switch the updated coefficients to the demander's key
        switched = convert_paillier_key_vec(dem, owner_id(i), pk_i, dem.pk,
                                            new_cts)
        theta = [round_div(dem.decrypt_signed(c), 10 ** UPDATE_SCALE)
                 for c in switched]
        trace.append(list(theta))
    return ModelParams(theta=theta, iteration=cfg.iters), trace


# ---------------------------------------------------------------------------
# Count-based trainer


def nb_train(ts, cfg, kinds, classes=(0, 1), vocab_mantissas=None):
    """One batched summation per statistic family, then local model
    construction from the global integer statistics."""
    dem = ts.dem
    session = ts.session
    n = len(ts.owners)
    pids = [owner_id(i) for i in range(1, n + 1)]
    numeric = [j for j, k in enumerate(kinds) if k == "numeric"]

    def gather(family, scale, cat_keys=None):
        def make_request(dst):
            payload = {"family": family, "scale": scale}
            if cat_keys is not None:
                payload["cat_keys"] = [list(k) for k in cat_keys]
            return "sum-share-request", payload, scale, TAINT_PUBLIC
        return _sum_family(dem, pids, make_request, scale)

    counts = gather("counts", 0)
    sums = gather("sum-x", DEFAULT_SCALE)
    sumsq = gather("sum-xsq", 2 * DEFAULT_SCALE)
    st = NbStats(classes=tuple(classes), kinds=tuple(kinds))
    st.counts = {c: v for c, v in zip(classes, counts)}
    pairs = [(c, j) for c in classes for j in numeric]
    st.sum_x = dict(zip(pairs, sums))
    st.sum_xsq = dict(zip(pairs, sumsq))
    if any(k == "discrete" for k in kinds):
        cat_keys = [(c, j, mant)
                    for c in classes
                    for j, k in enumerate(kinds) if k == "discrete"
                    for mant in (vocab_mantissas or {}).get(j, ())]
        if cat_keys:
            vals = gather("cat", 0, cat_keys=cat_keys)
            st.cat_counts = dict(zip(cat_keys, vals))
    return model_from_stats(st)


def _sum_family(dem, pids, make_request, scale):
    """secure_sum with a custom gather request (statistic family tag)."""
    session = dem.session
    replies = session.broadcast_rpc(DEMANDER, pids, make_request)
    shares, r_cts = [], []
    for reply in replies:
        shares.append([int(s, 16) for s in reply.payload["shares"]])
        r_cts.append([phe.PaillierCiphertext(int(d["value"], 16), d["key_id"])
                      for d in reply.payload["r_cts"]])
    width = len(shares[0])
    totals = [sum(s[k] for s in shares) for k in range(width)]
    first_pk = dem.owner_pks[1]
    cur = [ScaledCiphertext(
        phe.paillier_encrypt(first_pk, t % first_pk.n, session.rng_crypto),
        scale) for t in totals]
    for i, pid in enumerate(pids, start=1):
        pk_i = dem.owner_pks[i]
        cur = [ScaledCiphertext(phe.paillier_sub(pk_i, c.ct, r), c.scale)
               for c, r in zip(cur, r_cts[i - 1])]
        target = dem.owner_pks[i + 1] if i < len(pids) else dem.pk
        cur = convert_paillier_key_vec(dem, pid, pk_i, target, cur)
    return [dem.decrypt_signed(c) for c in cur]


# ---------------------------------------------------------------------------
# End-to-end run harness


def _paillier_sc(doc, pk, scale):
    ct = phe.PaillierCiphertext(int(doc["value"], 16), doc["key_id"])
    phe.validate_paillier_ciphertext(pk, ct)
    return ScaledCiphertext(ct, scale)


def _rsa_ct(doc):
    return phe.CloudRsaCiphertext(int(doc["value"], 16), doc["key_id"])


@dataclass
class RunResult:
    metrics: dict
    model: object                 # ModelParams | NbModel
    trace: list
    transcript: object
    audit: object
    global_train: tuple           # (rows, labels) in owner concatenation order


def run_training(train_table, test_table, cfg):
    """Partition, set up keys, train, evaluate, audit, report metrics."""
    kinds = tuple(f.kind for f in train_table.schema.features)
    parts = partition(train_table, cfg.n_owners,
                      derive_rng(cfg.seed, "partition"))
    owner_data = []
    for p in parts:
        y = labels_pm1(p) if cfg.protocol == "svm" else labels_01(p)
        owner_data.append(([list(r) for r in p.rows], y))
    global_rows = [row for rows, _ in owner_data for row in rows]
    global_labels = [yy for _, ys in owner_data for yy in ys]

    vocab_mantissas = _vocab_mantissas(train_table.schema)
    ts = setup_training(owner_data, cfg, kinds=kinds)
    d = train_table.schema.d
    t0 = time.perf_counter()
    trace = []
    if cfg.protocol == "svm":
        model, trace = svm_train(ts, cfg, d)
    elif cfg.protocol == "lr":
        model, trace = lr_train(ts, cfg, d)
    elif cfg.protocol == "nb":
        model = nb_train(ts, cfg, kinds, vocab_mantissas=vocab_mantissas)
    else:
        raise ValueError(f"unknown protocol {cfg.protocol}")
    wall_total_ms = (time.perf_counter() - t0) * 1000.0
    ts.session.close()

    test_y = labels_pm1(test_table) if cfg.protocol == "svm" \
        else labels_01(test_table)
    preds = predict_all(model, cfg.protocol, test_table.rows)
    acc = accuracy(preds, test_y)

    tr = ts.session.transcript
    owner_ms = getattr(ts.session, "owner_wall_ms", 0.0)
    metrics = {
        "protocol": cfg.protocol,
        "dataset": cfg.dataset_name,
        "n_owners": cfg.n_owners,
        "key_bits": cfg.key_bits,
        "iters": cfg.iters if cfg.protocol != "nb" else 1,
        "accuracy": round(acc, 4),
        "interactions": tr.interactions,
        "bytes": tr.bytes,
        "sim_latency_ms": tr.latency_ms,
        "wall_ms_demander": round(max(wall_total_ms - owner_ms, 0.0), 3),
        "wall_ms_owner_total": round(owner_ms, 3),
        "seed": cfg.seed,
    }
    report = audit_transcript(tr)
    return RunResult(metrics=metrics, model=model, trace=trace,
                     transcript=tr, audit=report,
                     global_train=(global_rows, global_labels))


def predict_all(model, protocol, rows):
    if protocol == "svm":
        return [svm_predict(model.theta, r) for r in rows]
    if protocol == "lr":
        return [lr_predict(model.theta, r) for r in rows]
    return [nb_predict(model, r) for r in rows]


def _vocab_mantissas(schema):
    out = {}
    for j, f in enumerate(schema.features):
        if f.kind == "discrete":
            hi = len(f.vocabulary) - 1
            out[j] = tuple(
                fx_encode(i / hi if hi > 0 else 0.0, DEFAULT_SCALE)
                for i in range(len(f.vocabulary)))
    return out
