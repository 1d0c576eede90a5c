"""Privacy-preserving multi-party ML training over partially homomorphic
encryption: additive (Paillier) and multiplicative (shared-modulus RSA)
cryptosystems, composable secure building blocks, three training protocols
(margin, sigmoid, count-based) between one model demander and n data
owners, a plaintext oracle for equivalence testing, and an in-process
protocol simulator with transcript auditing."""

__version__ = "0.1.0"
