"""Paillier and multiplicative-RSA ("cloud RSA") cryptosystems.

Both schemes share the same modulus generation: N = p*q with p, q distinct
primes of equal bit length.  Paillier is additively homomorphic
(Enc(a)*Enc(b) decrypts to a+b mod N), cloud RSA keeps the multiplicative
homomorphism of textbook RSA by treating the encryption exponent e as part
of the owner-held key material instead of publishing it.

All values are plain Python ints; gmpy2 is used internally for the modular
exponentiations, which dominate the cost at real key sizes.
"""

import hashlib
import random
from dataclasses import dataclass

import gmpy2

VALID_KEY_BITS = (512, 768, 1024, 1536, 2048, 3072, 4096, 6144, 8192)
MILLER_RABIN_ROUNDS = 40
PRIME_RETRY_BOUND = 10_000

_SMALL_PRIMES = []


def _small_primes(limit=50_000):
    global _SMALL_PRIMES
    if not _SMALL_PRIMES:
        sieve = bytearray([1]) * limit
        sieve[0] = sieve[1] = 0
        for i in range(2, int(limit ** 0.5) + 1):
            if sieve[i]:
                sieve[i * i :: i] = bytearray(len(sieve[i * i :: i]))
        _SMALL_PRIMES = [i for i in range(limit) if sieve[i]]
    return _SMALL_PRIMES


class KeyGenError(Exception):
    """Prime generation exceeded its retry bound."""


class KeyMismatchError(Exception):
    """Ciphertext used with a key it does not belong to."""


class MalformedCiphertextError(Exception):
    """Ciphertext value outside the valid group for its key."""


def powmod(base, exp, mod):
    return int(gmpy2.powmod(base, exp, mod))


def invmod(a, n):
    return int(gmpy2.invert(a, n))


def gcd(a, b):
    return int(gmpy2.gcd(a, b))


def is_probable_prime(n, rng, rounds=MILLER_RABIN_ROUNDS):
    """Miller-Rabin test with witnesses drawn from rng."""
    if n < 2:
        return False
    for p in _small_primes():
        if n == p:
            return True
        if n % p == 0:
            return False
    d = n - 1
    r = 0
    while d % 2 == 0:
        d //= 2
        r += 1
    for _ in range(rounds):
        a = rng.randrange(2, n - 1)
        x = powmod(a, d, n)
        if x == 1 or x == n - 1:
            continue
        for _ in range(r - 1):
            x = powmod(x, 2, n)
            if x == n - 1:
                break
        else:
            return False
    return True


def generate_prime(bits, rng):
    """Uniform random prime with the top two bits set (so p*q keeps full length)."""
    for _ in range(PRIME_RETRY_BOUND):
        candidate = rng.getrandbits(bits) | (3 << (bits - 2)) | 1
        if is_probable_prime(candidate, rng):
            return candidate
    raise KeyGenError(f"no {bits}-bit prime found in {PRIME_RETRY_BOUND} tries")


def _gen_modulus(bits, rng):
    half = bits // 2
    for _ in range(PRIME_RETRY_BOUND):
        p = generate_prime(half, rng)
        q = generate_prime(half, rng)
        if p == q:
            continue
        n = p * q
        phi = (p - 1) * (q - 1)
        if n.bit_length() != bits or gcd(n, phi) != 1:
            continue
        return n, p, q, phi
    raise KeyGenError("modulus generation exceeded retry bound")


def _key_id(kind, n):
    return hashlib.sha256(f"{kind}:{n:x}".encode()).hexdigest()[:12]


# ---------------------------------------------------------------------------
# Paillier


@dataclass(frozen=True)
class PaillierPublicKey:
    n: int
    n_sq: int
    key_id: str

    def digit_budget(self):
        return len(str(self.n)) - 1  # floor(log10 N)


@dataclass(frozen=True)
class PaillierPrivateKey:
    n: int
    phi: int
    phi_inv: int
    key_id: str


@dataclass(frozen=True)
class PaillierCiphertext:
    value: int
    key_id: str


def paillier_keygen(bits, rng):
    if bits not in VALID_KEY_BITS:
        raise ValueError(f"unsupported key size {bits}")
    n, p, q, phi = _gen_modulus(bits, rng)
    kid = _key_id("paillier", n)
    pk = PaillierPublicKey(n=n, n_sq=n * n, key_id=kid)
    sk = PaillierPrivateKey(n=n, phi=phi, phi_inv=invmod(phi, n), key_id=kid)
    return pk, sk


def paillier_keypair_from_primes(p, q):
    """Build a key pair from known primes; used for tiny hand-checkable keys."""
    n = p * q
    phi = (p - 1) * (q - 1)
    kid = _key_id("paillier", n)
    pk = PaillierPublicKey(n=n, n_sq=n * n, key_id=kid)
    sk = PaillierPrivateKey(n=n, phi=phi, phi_inv=invmod(phi, n), key_id=kid)
    return pk, sk


def _sample_unit(n, rng):
    while True:
        r = rng.randrange(1, n)
        if gcd(r, n) == 1:
            return r


def paillier_encrypt(pk, m, rng, r=None):
    """c = (1+N)^m * r^N mod N^2 with r uniform in Z_N*."""
    if not 0 <= m < pk.n:
        raise ValueError(f"plaintext {m} outside [0, N)")
    if r is None:
        r = _sample_unit(pk.n, rng)
    c = (powmod(1 + pk.n, m, pk.n_sq) * powmod(r, pk.n, pk.n_sq)) % pk.n_sq
    return PaillierCiphertext(value=c, key_id=pk.key_id)


def paillier_decrypt(sk, c):
    """m = L(c^phi mod N^2) * phi^-1 mod N, with L(u) = (u-1)/N."""
    if c.key_id != sk.key_id:
        raise KeyMismatchError(f"ciphertext for {c.key_id}, key is {sk.key_id}")
    n_sq = sk.n * sk.n
    u = powmod(c.value, sk.phi, n_sq)
    return ((u - 1) // sk.n) * sk.phi_inv % sk.n


def _check_same_key(pk, *cts):
    for c in cts:
        if c.key_id != pk.key_id:
            raise KeyMismatchError(f"ciphertext for {c.key_id}, key is {pk.key_id}")


def paillier_add(pk, c1, c2):
    _check_same_key(pk, c1, c2)
    return PaillierCiphertext((c1.value * c2.value) % pk.n_sq, pk.key_id)


def paillier_sub(pk, c1, c2):
    _check_same_key(pk, c1, c2)
    if gcd(c2.value, pk.n_sq) != 1:
        raise MalformedCiphertextError("subtrahend not invertible mod N^2")
    return PaillierCiphertext((c1.value * invmod(c2.value, pk.n_sq)) % pk.n_sq, pk.key_id)


def paillier_scalar_pow(pk, c, k):
    """Ciphertext of m*k; negative k goes through the ciphertext inverse."""
    _check_same_key(pk, c)
    if k < 0:
        inv = invmod(c.value, pk.n_sq)
        return PaillierCiphertext(powmod(inv, -k, pk.n_sq), pk.key_id)
    return PaillierCiphertext(powmod(c.value, k, pk.n_sq), pk.key_id)


def paillier_rerandomize(pk, c, rng):
    _check_same_key(pk, c)
    r = _sample_unit(pk.n, rng)
    return PaillierCiphertext((c.value * powmod(r, pk.n, pk.n_sq)) % pk.n_sq, pk.key_id)


def validate_paillier_ciphertext(pk, c):
    """Range/coprimality check applied to every received ciphertext."""
    _check_same_key(pk, c)
    if not 0 < c.value < pk.n_sq or gcd(c.value, pk.n_sq) != 1:
        raise MalformedCiphertextError("ciphertext outside Z_{N^2}^*")


# ---------------------------------------------------------------------------
# Cloud RSA


@dataclass(frozen=True)
class CloudRsaKeyMaterial:
    n: int
    enc_exp: int
    dec_exp: int
    key_id: str

    def digit_budget(self):
        return len(str(self.n)) - 1


@dataclass(frozen=True)
class CloudRsaCiphertext:
    value: int
    key_id: str


DEFAULT_RSA_ENC_EXP = 65537


def cloudrsa_keygen(bits, rng):
    if bits not in VALID_KEY_BITS:
        raise ValueError(f"unsupported key size {bits}")
    n, p, q, phi = _gen_modulus(bits, rng)
    e = DEFAULT_RSA_ENC_EXP
    while gcd(e, phi) != 1:
        e = rng.randrange(3, phi) | 1
    d = invmod(e, phi)
    return CloudRsaKeyMaterial(n=n, enc_exp=e, dec_exp=d, key_id=_key_id("cloudrsa", n))


def cloudrsa_from_parts(n, e, d):
    return CloudRsaKeyMaterial(n=n, enc_exp=e, dec_exp=d, key_id=_key_id("cloudrsa", n))


def cloudrsa_encrypt(n, enc_exp, m, key_id=None):
    """c = m^e mod N; m must be a unit of Z_N."""
    if not 1 <= m < n or gcd(m, n) != 1:
        raise ValueError(f"plaintext {m} not in Z_N^*")
    kid = key_id if key_id is not None else _key_id("cloudrsa", n)
    return CloudRsaCiphertext(powmod(m, enc_exp, n), kid)


def cloudrsa_decrypt(key, c):
    if c.key_id != key.key_id:
        raise KeyMismatchError(f"ciphertext for {c.key_id}, key is {key.key_id}")
    return powmod(c.value, key.dec_exp, key.n)


def cloudrsa_mul(n, c1, c2):
    if c1.key_id != c2.key_id:
        raise KeyMismatchError("operands under different keys")
    return CloudRsaCiphertext((c1.value * c2.value) % n, c1.key_id)


def cloudrsa_pow(n, c, k):
    """Ciphertext of m^k; k = 0 gives the ciphertext of 1."""
    if k < 0:
        raise ValueError("exponent must be non-negative")
    return CloudRsaCiphertext(powmod(c.value, k, n), c.key_id)


def validate_cloudrsa_ciphertext(key_n, c):
    if not 0 < c.value < key_n or gcd(c.value, key_n) != 1:
        raise MalformedCiphertextError("ciphertext outside Z_N^*")


# ---------------------------------------------------------------------------
# Canonical serialization (used by wire envelopes and the keygen command)


def _hex(x):
    return format(x, "x")


def serialize_key(key, public_only=False):
    if isinstance(key, PaillierPublicKey):
        return {"kind": "paillier-public", "key_id": key.key_id, "n": _hex(key.n)}
    if isinstance(key, PaillierPrivateKey):
        return {
            "kind": "paillier-private",
            "key_id": key.key_id,
            "n": _hex(key.n),
            "phi": _hex(key.phi),
            "phi_inv": _hex(key.phi_inv),
        }
    if isinstance(key, CloudRsaKeyMaterial):
        out = {"kind": "cloudrsa", "key_id": key.key_id, "n": _hex(key.n)}
        if not public_only:
            out["enc_exp"] = _hex(key.enc_exp)
            out["dec_exp"] = _hex(key.dec_exp)
        return out
    raise TypeError(f"not a key: {key!r}")


def deserialize_key(data):
    kind = data["kind"]
    n = int(data["n"], 16)
    if kind == "paillier-public":
        return PaillierPublicKey(n=n, n_sq=n * n, key_id=data["key_id"])
    if kind == "paillier-private":
        return PaillierPrivateKey(
            n=n,
            phi=int(data["phi"], 16),
            phi_inv=int(data["phi_inv"], 16),
            key_id=data["key_id"],
        )
    if kind == "cloudrsa":
        return CloudRsaKeyMaterial(
            n=n,
            enc_exp=int(data.get("enc_exp", "0"), 16),
            dec_exp=int(data.get("dec_exp", "0"), 16),
            key_id=data["key_id"],
        )
    raise ValueError(f"unknown key kind {kind}")


def serialize_ciphertext(c):
    return {"key_id": c.key_id, "value": _hex(c.value)}


def new_rng(seed):
    """Deterministic randomness source; seed may be any hashable value."""
    return random.Random(seed)
