#!/usr/bin/env python3
"""Trace the exponential building-block chain on a tiny two-feature case.

A data owner holds the record x = (0.1, 0.2); the model demander holds the
coefficients theta = (1.31, 2.42).  The demander wants a ciphertext of
e^{theta . x} without revealing theta, and the owner must not learn the
result either.  The chain is:

  1. the owner publishes multiplicative encryptions of e^{+x_j}, e^{-x_j};
  2. the demander assembles the power e^{theta . x} homomorphically,
     splitting each coefficient into integer and two-digit fractional
     exponents;
  3. the demander blinds the result with e^r and asks the owner to convert
     it to the owner's additive key;
  4. the demander removes the blinding inside the additive scheme.
"""

import math

from phetrain import blocks, phe
from phetrain.encoding import fx_encode
from phetrain.net import derive_rng, open_session, owner_id


def main():
    seed = 99
    session = open_session(1, 0, seed)
    pk_o, sk_o = phe.paillier_keygen(512, derive_rng(seed, "key-owner-1"))
    pk_d, sk_d = phe.paillier_keygen(512, derive_rng(seed, "key-demander"))
    rsa = phe.cloudrsa_keygen(1024, derive_rng(seed, "rsa-owner-1"))
    dem = blocks.DemanderState(pk_d, sk_d, session)
    dem.add_owner(1, pk_o, rsa.n, rsa.enc_exp, rsa.key_id)
    owner = blocks.OwnerBlocks(1, pk_o, sk_o, rsa, {pk_d.key_id: pk_d},
                               session)
    session.register(owner_id(1), owner)

    x = (0.1, 0.2)
    theta = (1.31, 2.42)
    blind_r = -2

    print("record x =", x, " coefficients theta =", theta)
    pos = [fx_encode(math.exp(v), 2) for v in x]
    neg = [fx_encode(math.exp(-v), 2) for v in x]
    print("owner's exponential mantissas: e^{+x} ->", pos, " e^{-x} ->", neg)

    def enc(m):
        return phe.cloudrsa_encrypt(rsa.n, rsa.enc_exp, m, key_id=rsa.key_id)

    ev = blocks.ExpEncodedVector(pos=[enc(m) for m in pos],
                                 neg=[enc(m) for m in neg])
    theta_m = [fx_encode(t, 2) for t in theta]
    pr = blocks.secure_pow(rsa.n, ev, theta_m, negate=False)
    print(f"power function: integer component "
          f"{phe.cloudrsa_decrypt(rsa, pr.int_ct.ct)} at scale "
          f"{pr.int_ct.scale}, fractional component at scale "
          f"{pr.frac_ct.scale}")

    blinded = blocks.blind_pow_result(dem, 1, pr, blind_r)
    print(f"blinded with e^{blind_r}: integer component "
          f"{phe.cloudrsa_decrypt(rsa, blinded.int_ct.ct)} at scale "
          f"{blinded.int_ct.scale}")

    w_sc = blocks.send_convert_request(dem, owner_id(1), blinded,
                                       session.new_nonce_id())
    print(f"owner recovers the blinded value and returns its additive "
          f"encryption: mantissa {phe.paillier_decrypt(sk_o, w_sc.ct)} "
          f"at scale {w_sc.scale}")

    out, dec = blocks.unblind_converted(pk_o, w_sc, blind_r)
    final = phe.paillier_decrypt(sk_o, out.ct)
    print(f"unblinding factor decomposes to ({dec.int_part}, {dec.frac_part})")
    print(f"final ciphertext decrypts to {final} at scale {out.scale} "
          f"= {final / 10 ** out.scale}")
    print(f"true value e^(theta . x) = "
          f"{math.exp(sum(t * v for t, v in zip(theta, x))):.4f}")
    print(f"\nsession transcript: {session.transcript.interactions} "
          f"interactions, {session.transcript.bytes} bytes")


if __name__ == "__main__":
    main()
