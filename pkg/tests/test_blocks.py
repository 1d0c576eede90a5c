"""Building blocks against plaintext oracles, the frozen two-feature
pipeline values, nonce sampling, summation and the sign test."""

import math

import pytest

from phetrain import blocks, phe
from phetrain.blocks import (
    DemanderState,
    ExpEncodedVector,
    OwnerBlocks,
    ProtocolAbort,
    ScaleMismatchError,
    additive_nonce,
    convert_paillier_key,
    convert_rsa_to_paillier,
    exp_blind_nonce,
    recover_pow_value,
    secure_add,
    secure_ct_mul,
    secure_dot,
    secure_pow,
    secure_scalar_mul,
    secure_sign,
    secure_sub,
    secure_sum,
    sign_blind_nonce,
    theta_exponents,
)
from phetrain.encoding import ScaledCiphertext, from_residue, fx_encode, to_residue
from phetrain.net import DEMANDER, derive_rng, open_session, owner_id


# ---------------------------------------------------------------------------
# Frozen two-feature pipeline (x=(0.1, 0.2), theta=(1.31, 2.42), blind -2)


def test_golden_exponential_bases(golden):
    assert golden["pos_mantissas"] == [110, 122]
    assert golden["neg_mantissas"] == [90, 81]


def test_golden_power_function(golden):
    # 110^1 * 122^2 = 110 * 14884 = 1637240 at scale 2*(1+2)=6
    assert golden["int"] == 1637240
    assert golden["int_scale"] == 6
    assert golden["frac"] == 110 ** 31 * 122 ** 42
    assert golden["frac_scale"] == 146


def test_golden_blinding(golden):
    # e^-2 encodes to 1353 at scale 4; 1637240 * 1353 = 2215185720 at scale 10
    assert fx_encode(math.exp(-2), 4) == 1353
    assert golden["blind_int"] == 2215185720
    assert golden["blind_int_scale"] == 10
    assert golden["blind_frac_scale"] == 150


def test_golden_owner_reply(golden):
    assert golden["owner_reply"] == 24
    assert golden["owner_reply_scale"] == 2


def test_golden_unblinding(golden):
    # e^(1.01*2) = e^2.02 = 7.53832... decomposes to (7, 54)
    assert golden["decomposition"] == (7, 54)
    # 24*7 at scale 2 rescaled + 24*54 -> 16800 + 1296 = 18096 at scale 4
    assert golden["final"] == 18096
    assert golden["final_scale"] == 4
    # recovered value approximates e^{1.31*0.1 + 2.42*0.2} = 1.8496...
    assert abs(golden["final"] / 10 ** 4
               - math.exp(1.31 * 0.1 + 2.42 * 0.2)) < 0.05


def test_golden_audit_clean(golden):
    from phetrain.net import audit_transcript
    assert audit_transcript(golden["transcript"]).passed


# ---------------------------------------------------------------------------
# Shared wiring for the interactive blocks


class ValueOwner(OwnerBlocks):
    """OwnerBlocks with a fixed local value vector for the summation."""

    def __init__(self, *args, values=(), **kw):
        super().__init__(*args, **kw)
        self.values = list(values)

    def on_sum_share_request(self, env):
        return self.make_sum_share(self.values, env.payload["scale"])


def wire(n_owners, seed=3, bits=512, rsa_bits=512, values_by_owner=None):
    session = open_session(n_owners, 0, seed)
    pk_d, sk_d = phe.paillier_keygen(bits, derive_rng(seed, "key-demander"))
    dem = DemanderState(pk_d, sk_d, session)
    owners = []
    peer_pks = {pk_d.key_id: pk_d}
    keymats = []
    for i in range(1, n_owners + 1):
        pk, sk = phe.paillier_keygen(bits, derive_rng(seed, f"key-owner-{i}"))
        rsa = phe.cloudrsa_keygen(rsa_bits, derive_rng(seed, f"rsa-owner-{i}"))
        peer_pks[pk.key_id] = pk
        keymats.append((pk, sk, rsa))
        dem.add_owner(i, pk, rsa.n, rsa.enc_exp, rsa.key_id)
    for i, (pk, sk, rsa) in enumerate(keymats, start=1):
        vals = (values_by_owner or {}).get(i, ())
        owner = ValueOwner(i, pk, sk, rsa, peer_pks, session, values=vals)
        session.register(owner_id(i), owner)
        owners.append(owner)
    return session, dem, owners


@pytest.fixture(scope="module")
def rig():
    return wire(1)


@pytest.fixture(scope="module")
def rig_wide():
    # larger multiplicative modulus: room for multi-coefficient exponents
    return wire(1, seed=4, rsa_bits=1024)


# ---------------------------------------------------------------------------
# Local blocks against the integer oracle


def test_local_blocks_match_oracle(rig):
    session, dem, owners = rig
    sk1 = owners[0].sk
    pk1 = dem.owner_pks[1]
    rng = derive_rng(31, "vals")
    for _ in range(100):
        a = rng.randrange(-10 ** 6, 10 ** 6)
        b = rng.randrange(-10 ** 6, 10 ** 6)
        k = rng.randrange(-1000, 1000)
        ca = dem.encrypt_for(1, a, 2)
        cb = dem.encrypt_for(1, b, 2)
        dec = lambda sc: from_residue(phe.paillier_decrypt(sk1, sc.ct), pk1.n)
        assert dec(secure_add(pk1, ca, cb)) == a + b
        assert dec(secure_sub(pk1, ca, cb)) == a - b
        assert dec(secure_scalar_mul(pk1, ca, k)) == a * k


def test_scale_mismatch_rejected(rig):
    _, dem, _ = rig
    pk1 = dem.owner_pks[1]
    with pytest.raises(ScaleMismatchError):
        secure_add(pk1, dem.encrypt_for(1, 1, 2), dem.encrypt_for(1, 1, 4))
    with pytest.raises(ScaleMismatchError):
        secure_sub(pk1, dem.encrypt_for(1, 1, 2), dem.encrypt_for(1, 1, 3))


def test_secure_dot_matches_oracle(rig):
    _, dem, owners = rig
    pk1, sk1 = dem.owner_pks[1], owners[0].sk
    rng = derive_rng(32, "dot")
    for _ in range(20):
        xs = [rng.randrange(-10 ** 4, 10 ** 4) for _ in range(5)]
        ws = [rng.randrange(-10 ** 4, 10 ** 4) for _ in range(5)]
        cts = [dem.encrypt_for(1, x, 2) for x in xs]
        out = secure_dot(pk1, cts, ws)
        assert out.scale == 4
        assert from_residue(phe.paillier_decrypt(sk1, out.ct), pk1.n) \
            == sum(x * w for x, w in zip(xs, ws))


def test_secure_ct_mul_matches_oracle(rig):
    _, dem, owners = rig
    rsa = owners[0].rsa
    rng = derive_rng(33, "ccm")
    for _ in range(20):
        a = rng.randrange(2, 10 ** 8)
        b = rng.randrange(2, 10 ** 8)
        enc = lambda m: ScaledCiphertext(
            phe.cloudrsa_encrypt(rsa.n, rsa.enc_exp, m, key_id=rsa.key_id), 2)
        out = secure_ct_mul(rsa.n, enc(a), enc(b))
        assert out.scale == 4
        assert phe.cloudrsa_decrypt(rsa, out.ct) == a * b % rsa.n


def test_theta_exponents():
    assert theta_exponents([131, -242, 7, 0]) \
        == [(1, 1, 31), (-1, 2, 42), (1, 0, 7), (1, 0, 0)]


def test_secure_pow_matches_oracle(rig_wide):
    _, dem, owners = rig_wide
    rsa = owners[0].rsa
    rng = derive_rng(34, "pow")
    for _ in range(30):
        d = rng.randrange(2, 5)
        xs = [rng.uniform(0.1, 1) for _ in range(d)]
        # |theta_j| <= 1.25 keeps the fractional exponent sum inside the
        # 1024-bit digit budget
        theta = [rng.choice([-1, 1]) * (100 * rng.randrange(0, 2)
                                        + rng.randrange(0, 26))
                 for _ in range(d)]
        pos = [fx_encode(math.exp(x), 2) for x in xs]
        neg = [fx_encode(math.exp(-x), 2) for x in xs]
        enc = lambda m: phe.cloudrsa_encrypt(rsa.n, rsa.enc_exp, m,
                                             key_id=rsa.key_id)
        ev = ExpEncodedVector(pos=[enc(m) for m in pos],
                              neg=[enc(m) for m in neg])
        pr = secure_pow(rsa.n, ev, theta)
        int_m = phe.cloudrsa_decrypt(rsa, pr.int_ct.ct)
        frac_m = phe.cloudrsa_decrypt(rsa, pr.frac_ct.ct)
        # integer-domain oracle
        oi, of = 1, 1
        for (s, ei, ef), p, ng in zip(theta_exponents(theta), pos, neg):
            base = ng if s > 0 else p
            oi *= base ** ei
            of *= base ** ef
        assert int_m == oi and frac_m == of
        # exact recombination oracle on the quantized bases
        expect_q = 1.0
        for (s, ei, ef), p, ng in zip(theta_exponents(theta), pos, neg):
            base = (ng if s > 0 else p) / 100
            expect_q *= base ** (ei + ef / 100)
        v = recover_pow_value(int_m, pr.int_ct.scale, frac_m, pr.frac_ct.scale)
        assert v == pytest.approx(expect_q, rel=1e-9)
        # and it approximates the true exponential
        expect = math.exp(-sum(t / 100 * x for t, x in zip(theta, xs)))
        assert v == pytest.approx(expect, rel=0.25)


def test_recover_pow_value_rejects_nonpositive():
    with pytest.raises(ProtocolAbort):
        recover_pow_value(0, 2, 1, 2)


# ---------------------------------------------------------------------------
# Nonce sampling


def test_additive_nonce_bounds():
    rng = derive_rng(40, "nonce")
    n1, n2 = 2 ** 512 - 1, 2 ** 1024 - 1
    for _ in range(200):
        r = additive_nonce(rng, n1, n2)
        assert 0 <= r < 2 ** (512 - 80)
    with pytest.raises(ValueError):
        additive_nonce(rng, 2 ** 64)


def test_exp_blind_nonce_range():
    rng = derive_rng(41, "exp")
    seen = {exp_blind_nonce(rng) for _ in range(500)}
    assert 0 not in seen
    assert seen <= set(range(-8, 9))
    pos = {exp_blind_nonce(rng, 1, 8) for _ in range(200)}
    assert pos <= set(range(1, 9))


def test_sign_blind_nonce_positive():
    rng = derive_rng(42, "rho")
    for _ in range(200):
        assert 1 <= sign_blind_nonce(rng) < 2 ** 32


# ---------------------------------------------------------------------------
# Interactive blocks


def test_key_switch_preserves_plaintext(rig):
    session, dem, owners = rig
    pk1 = dem.owner_pks[1]
    rng = derive_rng(50, "switch")
    for _ in range(20):
        m = rng.randrange(-10 ** 8, 10 ** 8)
        sc = ScaledCiphertext(phe.paillier_encrypt(
            pk1, to_residue(m, pk1.n), session.rng_crypto), 2)
        out = convert_paillier_key(dem, owner_id(1), pk1, dem.pk, sc)
        assert out.scale == 2
        assert dem.decrypt_signed(out) == m


def test_rsa_to_paillier_conversion(rig_wide):
    session, dem, owners = rig_wide
    rsa = owners[0].rsa
    sk1 = owners[0].sk
    pk1 = dem.owner_pks[1]
    rng = derive_rng(51, "conv")
    for k in range(10):
        x = rng.uniform(0.1, 1.0)
        t = rng.randrange(10, 120)
        pos = fx_encode(math.exp(x), 2)
        neg = fx_encode(math.exp(-x), 2)
        enc = lambda m: phe.cloudrsa_encrypt(rsa.n, rsa.enc_exp, m,
                                             key_id=rsa.key_id)
        ev = ExpEncodedVector(pos=[enc(pos)], neg=[enc(neg)])
        pr = secure_pow(rsa.n, ev, [t])
        # small positive blinding: keeps the blinded value above the
        # scale-2 quantum and the two-decimal unblinding factor accurate
        out = convert_rsa_to_paillier(dem, owner_id(1), 1, pr,
                                      blind_r=1 + k % 2)
        assert out.scale == 4
        got = from_residue(phe.paillier_decrypt(sk1, out.ct), pk1.n) / 10 ** 4
        assert got == pytest.approx(math.exp(-t / 100 * x), rel=0.1, abs=0.02)


def test_secure_sign_matches_oracle(rig):
    session, dem, owners = rig
    rng = derive_rng(52, "sign")
    for _ in range(100):
        m = rng.randrange(-10 ** 9, 10 ** 9)
        sc = dem.encrypt_for(1, m, 4)
        bit = secure_sign(dem, owner_id(1), 1, sc)
        assert bit == (1 if m > 0 else 0)
    # exact zero -> 0
    assert secure_sign(dem, owner_id(1), 1, dem.encrypt_for(1, 0, 4)) == 0


def test_secure_sum_matches_totals():
    for n in (2, 5, 10):
        values = {i: [i * 10 + k for k in range(3)] for i in range(1, n + 1)}
        session, dem, owners = wire(n, seed=60 + n, values_by_owner=values)
        pids = [owner_id(i) for i in range(1, n + 1)]
        totals = secure_sum(dem, pids)
        expect = [sum(values[i][k] for i in values) for k in range(3)]
        assert totals == expect
        # gather counts once, then one switch round per owner
        assert session.transcript.interactions == n + 1
        from phetrain.net import audit_transcript
        assert audit_transcript(session.transcript).passed


def test_secure_sum_requires_two_owners():
    session, dem, owners = wire(1, seed=70, values_by_owner={1: [1]})
    with pytest.raises(ValueError):
        secure_sum(dem, [owner_id(1)])
