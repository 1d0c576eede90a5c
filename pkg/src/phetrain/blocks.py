"""Secure building blocks composed by the training protocols.

Eight blocks plus one sign primitive, each split into a demander half
(functions below, driving the session) and an owner half (OwnerBlocks
handler).  Local blocks (add, sub, dot, ciphertext product, power) cost
zero interactions; the conversions, the sign test and the summation cost
one round trip each (the summation's chain is one per owner plus the
gather round).

Blinding conventions:
  * additive nonces are sampled from [0, 2^(bits-80)) rather than all of
    Z_N so a blinded value never wraps the smaller of the two moduli in a
    cross-key switch (statistical rather than perfect hiding);
  * exponential-multiplicative nonces are small integers r, transmitted as
    the scale-4 encoding of e^r;
  * sign blinding uses a positive multiplier rho in [1, 2^32].
"""

import math
from dataclasses import dataclass
from fractions import Fraction

from . import phe
from .encoding import (
    BLIND_SCALE,
    DEFAULT_SCALE,
    FRAC_ROOT,
    ScaledCiphertext,
    check_scale_budget,
    decompose_coeff,
    ensure_coprime,
    from_residue,
    fx_encode,
    rescale_ct,
    to_residue,
)
from .net import TAINT_CIPHER, TAINT_PUBLIC, taint_blinded

ADDITIVE_SLACK_BITS = 80   # statistical hiding margin for additive nonces
SIGN_RHO_BITS = 32
EXP_BLIND_RANGE = 8        # |r| bound for exponential blinding


class ScaleMismatchError(Exception):
    pass


class ProtocolAbort(Exception):
    pass


@dataclass
class PowResult:
    """Output of the power function: integer-part and fractional-part
    ciphertexts whose recovered value is dec(int) * dec(frac)^(1/100)."""

    int_ct: ScaledCiphertext
    frac_ct: ScaledCiphertext
    frac_root: int = FRAC_ROOT


@dataclass
class ExpEncodedVector:
    """Per-record encryptions of e^{+x_j} and e^{-x_j} (scale 2) under one
    owner's multiplicative-RSA key."""

    pos: list  # CloudRsaCiphertext per feature
    neg: list


# ---------------------------------------------------------------------------
# Local blocks (no interaction)


def secure_add(pk, c1, c2):
    if c1.scale != c2.scale:
        raise ScaleMismatchError(f"scales {c1.scale} != {c2.scale}")
    return ScaledCiphertext(phe.paillier_add(pk, c1.ct, c2.ct), c1.scale)


def secure_sub(pk, c1, c2):
    if c1.scale != c2.scale:
        raise ScaleMismatchError(f"scales {c1.scale} != {c2.scale}")
    return ScaledCiphertext(phe.paillier_sub(pk, c1.ct, c2.ct), c1.scale)


def secure_scalar_mul(pk, c, k):
    return ScaledCiphertext(phe.paillier_scalar_pow(pk, c.ct, k), c.scale)


def secure_dot(pk, xs, ws, w_scale=DEFAULT_SCALE):
    """Sum of x_j * w_j over encrypted xs and plaintext integer weights."""
    if not xs:
        raise ValueError("empty vector")
    if len(xs) != len(ws):
        raise ValueError("length mismatch")
    scale = xs[0].scale
    acc = None
    for x, w in zip(xs, ws):
        if x.scale != scale:
            raise ScaleMismatchError("mixed scales in dot product")
        term = phe.paillier_scalar_pow(pk, x.ct, w)
        acc = term if acc is None else phe.paillier_add(pk, acc, term)
    out_scale = scale + w_scale
    check_scale_budget(out_scale, pk.n)
    return ScaledCiphertext(acc, out_scale)


def secure_ct_mul(n, c1, c2):
    out = phe.cloudrsa_mul(n, c1.ct, c2.ct)
    return ScaledCiphertext(out, c1.scale + c2.scale)


def theta_exponents(theta_mantissas):
    """Per-coefficient (sign, integer exponent, fraction exponent) from
    scale-2 mantissas."""
    out = []
    for m in theta_mantissas:
        sign = 1 if m >= 0 else -1
        out.append((sign, abs(m) // FRAC_ROOT, abs(m) % FRAC_ROOT))
    return out


def secure_pow(rsa_n, exp_vec, theta_mantissas, negate=True):
    """Power function: ciphertext of e^{-theta.x} (or e^{+theta.x}).

    For each coefficient the base is chosen so the exponent is the
    non-negative integer |theta_j| split into its integer part and its
    two-digit fraction; with negate=True a positive theta_j selects the
    e^{-x_j} encryption.
    """
    if len(exp_vec.pos) != len(theta_mantissas):
        raise ValueError("dimension mismatch")
    one = phe.CloudRsaCiphertext(1, exp_vec.pos[0].key_id)
    int_acc, frac_acc = one, one
    int_scale = frac_scale = 0
    for (sign, e_int, e_frac), pos, neg in zip(
            theta_exponents(theta_mantissas), exp_vec.pos, exp_vec.neg):
        base = (neg if sign > 0 else pos) if negate else (pos if sign > 0 else neg)
        if e_int:
            int_acc = phe.cloudrsa_mul(rsa_n, int_acc, phe.cloudrsa_pow(rsa_n, base, e_int))
            int_scale += DEFAULT_SCALE * e_int
        if e_frac:
            frac_acc = phe.cloudrsa_mul(rsa_n, frac_acc, phe.cloudrsa_pow(rsa_n, base, e_frac))
            frac_scale += DEFAULT_SCALE * e_frac
    check_scale_budget(int_scale, rsa_n)
    check_scale_budget(frac_scale, rsa_n)
    return PowResult(int_ct=ScaledCiphertext(int_acc, int_scale),
                     frac_ct=ScaledCiphertext(frac_acc, frac_scale))


def recover_pow_value(int_m, int_scale, frac_m, frac_scale, frac_root=FRAC_ROOT):
    """Owner-side recovery dec(int)/10^s1 * (dec(frac)/10^s2)^(1/root).

    Fraction keeps the huge integers exact until the final correctly
    rounded float conversion.
    """
    a = float(Fraction(int_m, 10 ** int_scale))
    b = float(Fraction(frac_m, 10 ** frac_scale))
    if a <= 0 or b <= 0:
        raise ProtocolAbort("power-function component not positive")
    return a * b ** (1.0 / frac_root)


# ---------------------------------------------------------------------------
# Nonce sampling


def additive_nonce(rng, *moduli):
    bits = min(m.bit_length() for m in moduli) - ADDITIVE_SLACK_BITS
    if bits < 16:
        raise ValueError("modulus too small for additive blinding")
    return rng.randrange(0, 1 << bits)


def exp_blind_nonce(rng, lo=-EXP_BLIND_RANGE, hi=EXP_BLIND_RANGE):
    while True:
        r = rng.randint(lo, hi)
        if r != 0:
            return r


def sign_blind_nonce(rng):
    return rng.randrange(1, 1 << SIGN_RHO_BITS)


# ---------------------------------------------------------------------------
# Owner half


class OwnerBlocks:
    """Owner-side handler for the interactive blocks.

    Holds the owner's Paillier key pair, its RSA key material and the
    Paillier public keys of every other party (needed for key switching).
    Subclasses add protocol-specific message kinds.
    """

    def __init__(self, index, paillier_pk, paillier_sk, rsa_key, peer_pks, session):
        self.index = index
        self.pid_label = f"owner:{index}"
        self.pk = paillier_pk
        self.sk = paillier_sk
        self.rsa = rsa_key
        self.peer_pks = dict(peer_pks)  # key_id -> PaillierPublicKey
        self.peer_pks[paillier_pk.key_id] = paillier_pk
        self.session = session

    # handler entry point
    def __call__(self, env):
        method = getattr(self, "on_" + env.kind.replace("-", "_"), None)
        if method is None:
            raise ProtocolAbort(f"owner {self.index}: unknown kind {env.kind}")
        return method(env)

    def _pid(self):
        from .net import owner_id
        return owner_id(self.index)

    def _decrypt_paillier(self, ct_doc):
        ct = phe.PaillierCiphertext(int(ct_doc["value"], 16), ct_doc["key_id"])
        phe.validate_paillier_ciphertext(self.pk, ct)
        m = phe.paillier_decrypt(self.sk, ct)
        self.session.transcript.note_plaintext(self._pid(), m)
        return m

    def _encrypt_under(self, key_id, m):
        pk = self.peer_pks.get(key_id)
        if pk is None:
            raise ProtocolAbort(f"owner {self.index} lacks public key {key_id}")
        ct = phe.paillier_encrypt(pk, m % pk.n, self.session.rng_crypto)
        return phe.serialize_ciphertext(ct)

    def on_switch_request(self, env):
        p = env.payload
        out = [self._encrypt_under(p["target_key_id"], self._decrypt_paillier(doc))
               for doc in p["cts"]]
        return "switch-reply", {"cts": out}, env.scale, TAINT_CIPHER

    def on_convert_request(self, env):
        p = env.payload
        int_ct = phe.CloudRsaCiphertext(int(p["int_ct"]["value"], 16), p["int_ct"]["key_id"])
        frac_ct = phe.CloudRsaCiphertext(int(p["frac_ct"]["value"], 16), p["frac_ct"]["key_id"])
        for ct in (int_ct, frac_ct):
            phe.validate_cloudrsa_ciphertext(self.rsa.n, ct)
        int_m = phe.cloudrsa_decrypt(self.rsa, int_ct)
        frac_m = phe.cloudrsa_decrypt(self.rsa, frac_ct)
        v = recover_pow_value(int_m, p["int_scale"], frac_m, p["frac_scale"], p["frac_root"])
        self.session.transcript.note_plaintext(self._pid(), v)
        w = fx_encode(v, DEFAULT_SCALE)
        ct = phe.paillier_encrypt(self.pk, w % self.pk.n, self.session.rng_crypto)
        return "convert-reply", {"ct": phe.serialize_ciphertext(ct)}, DEFAULT_SCALE, TAINT_CIPHER

    def on_sign_query(self, env):
        m = self._decrypt_paillier(env.payload["ct"])
        signed = from_residue(m, self.pk.n)
        return "sign-bit", {"bit": 1 if signed > 0 else 0}, 0, TAINT_PUBLIC

    def on_sum_share_request(self, env):
        values = [int(v, 16) for v in env.payload.get("values", [])]
        return self.make_sum_share(values, env.payload["scale"])

    def make_sum_share(self, values, scale):
        rng = self.session.rng_noise
        shares, r_cts = [], []
        for a in values:
            r = additive_nonce(rng, self.pk.n)
            shares.append(format(a + r, "x"))
            r_cts.append(phe.serialize_ciphertext(
                phe.paillier_encrypt(self.pk, r, self.session.rng_crypto)))
        nonce = self.session.new_nonce_id()
        payload = {"shares": shares, "r_cts": r_cts, "scale": scale}
        return "sum-share", payload, scale, taint_blinded(nonce)


# ---------------------------------------------------------------------------
# Demander half


class DemanderState:
    """Demander-side session state: own Paillier keys plus every owner's
    Paillier public key and RSA public part (n, e)."""

    def __init__(self, pk, sk, session):
        self.pk = pk
        self.sk = sk
        self.session = session
        self.owner_pks = {}        # index -> PaillierPublicKey
        self.owner_rsa_pub = {}    # index -> (n, enc_exp, key_id)

    def add_owner(self, index, paillier_pk, rsa_n, rsa_enc_exp, rsa_key_id):
        self.owner_pks[index] = paillier_pk
        self.owner_rsa_pub[index] = (rsa_n, rsa_enc_exp, rsa_key_id)

    def encrypt_for(self, index, mantissa, scale):
        pk = self.owner_pks[index]
        ct = phe.paillier_encrypt(pk, to_residue(mantissa, pk.n),
                                  self.session.rng_crypto)
        return ScaledCiphertext(ct, scale)

    def decrypt_signed(self, sc):
        return from_residue(phe.paillier_decrypt(self.sk, sc.ct), self.pk.n)


def _ct_doc(sc):
    return phe.serialize_ciphertext(sc.ct)


def convert_paillier_key_vec(dem, owner_pid, src_pk, target_pk, scs):
    """Key switch for a batch of ciphertexts in one round trip (block 8)."""
    session = dem.session
    rng = session.rng_noise
    blinded, noises = [], []
    for sc in scs:
        r = additive_nonce(rng, src_pk.n, target_pk.n)
        noises.append(r)
        b = phe.paillier_add(src_pk, sc.ct,
                             phe.paillier_encrypt(src_pk, r, session.rng_crypto))
        blinded.append(phe.serialize_ciphertext(b))
    nonce = session.new_nonce_id()
    reply = session.rpc(
        src=_demander_pid(), dst=owner_pid, kind="switch-request",
        payload={"cts": blinded, "target_key_id": target_pk.key_id},
        scale=scs[0].scale if scs else 0, taint=taint_blinded(nonce))
    out = []
    for doc, r, sc in zip(reply.payload["cts"], noises, scs):
        ct = phe.PaillierCiphertext(int(doc["value"], 16), doc["key_id"])
        phe.validate_paillier_ciphertext(target_pk, ct)
        unblinded = phe.paillier_sub(
            target_pk, ct, phe.paillier_encrypt(target_pk, r, session.rng_crypto))
        out.append(ScaledCiphertext(unblinded, sc.scale))
    return out


def convert_paillier_key(dem, owner_pid, src_pk, target_pk, sc):
    return convert_paillier_key_vec(dem, owner_pid, src_pk, target_pk, [sc])[0]


def _demander_pid():
    from .net import DEMANDER
    return DEMANDER


def blind_pow_result(dem, owner_index, pr, blind_r):
    """Multiply e^{blind_r} (scale-4 encoding) into both power-function
    components; the effective blinding on the recovered value is
    e^{(1 + 1/root) * blind_r}."""
    rsa_n, rsa_e, rsa_kid = dem.owner_rsa_pub[owner_index]
    ehat_r = ensure_coprime(fx_encode(math.exp(blind_r), BLIND_SCALE), rsa_n)
    r_ct = phe.cloudrsa_encrypt(rsa_n, rsa_e, ehat_r, key_id=rsa_kid)
    b_int = secure_ct_mul(rsa_n, pr.int_ct, ScaledCiphertext(r_ct, BLIND_SCALE))
    b_frac = secure_ct_mul(rsa_n, pr.frac_ct, ScaledCiphertext(r_ct, BLIND_SCALE))
    check_scale_budget(b_frac.scale, rsa_n)
    return PowResult(int_ct=b_int, frac_ct=b_frac, frac_root=pr.frac_root)


def send_convert_request(dem, owner_pid, blinded_pr, nonce):
    """Round trip of block 7: owner decrypts the blinded components,
    recovers the (still blinded) value and returns its scale-2 Paillier
    encryption under the owner's key."""
    reply = dem.session.rpc(
        src=_demander_pid(), dst=owner_pid, kind="convert-request",
        payload={
            "int_ct": _ct_doc(blinded_pr.int_ct),
            "int_scale": blinded_pr.int_ct.scale,
            "frac_ct": _ct_doc(blinded_pr.frac_ct),
            "frac_scale": blinded_pr.frac_ct.scale,
            "frac_root": blinded_pr.frac_root,
        },
        scale=blinded_pr.int_ct.scale, taint=taint_blinded(nonce))
    doc = reply.payload["ct"]
    return ScaledCiphertext(
        phe.PaillierCiphertext(int(doc["value"], 16), doc["key_id"]), DEFAULT_SCALE)


def unblind_converted(owner_pk, w_sc, blind_r, frac_root=FRAC_ROOT):
    """Remove e^{(1+1/root)r} from the owner's scale-2 encryption by the
    integer/fraction decomposition of the inverse factor."""
    factor = math.exp(-(1 + 1 / frac_root) * blind_r)
    dec = decompose_coeff(factor)
    int_term = rescale_ct(owner_pk, secure_scalar_mul(owner_pk, w_sc, dec.int_part), 2)
    frac_term = ScaledCiphertext(
        phe.paillier_scalar_pow(owner_pk, w_sc.ct, dec.frac_part),
        w_sc.scale + 2)
    return secure_add(owner_pk, int_term, frac_term), dec


def convert_rsa_to_paillier(dem, owner_pid, owner_index, pr, blind_r=None):
    """Block 7 end to end: RSA ciphertext pair -> Paillier ciphertext of
    the recovered value (scale 4, owner's key)."""
    session = dem.session
    if blind_r is None:
        blind_r = exp_blind_nonce(session.rng_blind)
    blinded = blind_pow_result(dem, owner_index, pr, blind_r)
    nonce = session.new_nonce_id()
    w_sc = send_convert_request(dem, owner_pid, blinded, nonce)
    owner_pk = dem.owner_pks[owner_index]
    out, _ = unblind_converted(owner_pk, w_sc, blind_r, pr.frac_root)
    return out


def secure_sign(dem, owner_pid, owner_index, sc):
    """Comparison against zero: the demander learns only the sign bit, the
    owner only a positively scaled multiple of the plaintext."""
    session = dem.session
    owner_pk = dem.owner_pks[owner_index]
    if "skip_sign_blinding" in session.faults:
        rho, taint = 1, TAINT_PUBLIC
    else:
        rho = sign_blind_nonce(session.rng_blind)
        nonce = session.new_nonce_id()
        if "reuse_nonce" in session.faults and session._nonce_counter > 1:
            nonce = "n000001"
        taint = taint_blinded(nonce)
    blinded = phe.paillier_scalar_pow(owner_pk, sc.ct, rho)
    reply = session.rpc(
        src=_demander_pid(), dst=owner_pid, kind="sign-query",
        payload={"ct": phe.serialize_ciphertext(blinded)},
        scale=sc.scale, taint=taint)
    return reply.payload["bit"]


def secure_sum(dem, owner_pids, values_scale=0):
    """Summation over all owners (block 6).

    Each owner is asked (one broadcast round) for its additively noised
    values plus the encrypted noise; the demander then denoises along a
    key-switch chain through every owner, ending under its own key.
    Owners push their local values through their handler's
    `sum_values(scale)` hook.
    """
    session = dem.session
    if len(owner_pids) < 2:
        raise ValueError("summation needs at least two owners")

    def make_request(dst):
        return "sum-share-request", {"scale": values_scale}, values_scale, TAINT_PUBLIC

    replies = session.broadcast_rpc(_demander_pid(), owner_pids, make_request)
    shares, r_cts = [], []
    for reply in replies:
        shares.append([int(s, 16) for s in reply.payload["shares"]])
        r_cts.append([phe.PaillierCiphertext(int(d["value"], 16), d["key_id"])
                      for d in reply.payload["r_cts"]])
    width = len(shares[0])
    if any(len(s) != width for s in shares):
        raise ProtocolAbort("owners disagree on summation width")
    totals = [sum(s[k] for s in shares) for k in range(width)]

    first_pk = dem.owner_pks[1]
    cur = [ScaledCiphertext(
        phe.paillier_encrypt(first_pk, t % first_pk.n, session.rng_crypto),
        values_scale) for t in totals]
    for i, pid in enumerate(owner_pids, start=1):
        pk_i = dem.owner_pks[i]
        cur = [ScaledCiphertext(phe.paillier_sub(pk_i, c.ct, r), c.scale)
               for c, r in zip(cur, r_cts[i - 1])]
        target = dem.owner_pks[i + 1] if i < len(owner_pids) else dem.pk
        cur = convert_paillier_key_vec(dem, pid, pk_i, target, cur)
    return [dem.decrypt_signed(c) for c in cur]
