#!/usr/bin/env python3
"""Walk through the two cryptosystems and the fixed-point codec.

The training framework rests on two partially homomorphic schemes: an
additive one (adding ciphertexts adds their plaintexts) and a
multiplicative one (multiplying ciphertexts multiplies their plaintexts).
Real-valued features and coefficients travel as integer mantissas with a
decimal scale.
"""

from phetrain import phe
from phetrain.encoding import decompose_coeff, fx_decode, fx_encode
from phetrain.net import derive_rng


def main():
    rng = derive_rng(0, "demo-crypto")

    print("=== Additive scheme ===")
    pk, sk = phe.paillier_keygen(512, rng)
    print(f"key id {pk.key_id}, modulus {pk.n.bit_length()} bits, "
          f"digit budget {pk.digit_budget()}")
    a, b = 1234, 5678
    ca = phe.paillier_encrypt(pk, a, rng)
    cb = phe.paillier_encrypt(pk, b, rng)
    total = phe.paillier_decrypt(sk, phe.paillier_add(pk, ca, cb))
    scaled = phe.paillier_decrypt(sk, phe.paillier_scalar_pow(pk, ca, 10))
    print(f"Dec(Enc({a}) * Enc({b}))   = {total}   (plaintext addition)")
    print(f"Dec(Enc({a})^10)           = {scaled}  (plaintext scaling)")

    print("\n=== Multiplicative scheme ===")
    key = phe.cloudrsa_keygen(512, rng)
    x, y = 111, 222
    cx = phe.cloudrsa_encrypt(key.n, key.enc_exp, x, key_id=key.key_id)
    cy = phe.cloudrsa_encrypt(key.n, key.enc_exp, y, key_id=key.key_id)
    prod = phe.cloudrsa_decrypt(key, phe.cloudrsa_mul(key.n, cx, cy))
    power = phe.cloudrsa_decrypt(key, phe.cloudrsa_pow(key.n, cx, 3))
    print(f"Dec(Enc({x}) * Enc({y}))   = {prod}    (plaintext product)")
    print(f"Dec(Enc({x})^3)            = {power} (plaintext power)")

    print("\n=== Fixed-point codec ===")
    for v in (1.10517, -0.035, 0.29):
        m = fx_encode(v, 2)
        print(f"{v:>9} -> mantissa {m:>4} at scale 2 -> {fx_decode(m, 2)}")
    d = decompose_coeff(2.42)
    print(f"coefficient 2.42 -> sign {d.sign:+d}, integer part {d.int_part}, "
          f"two-digit fraction {d.frac_part}")
    print("ciphertext exponentiation only ever sees the non-negative "
          "integer parts; the fraction recombines through a 100th root")


if __name__ == "__main__":
    main()
