"""In-process protocol simulator: parties, ordered channels, transcript.

One session holds a model demander (party 0) and n data owners.  Messages
are fully serialized to a canonical wire format so byte accounting is
exact and a socket transport could be swapped in later.  The scheduler is
single-threaded round-robin: a request is delivered to its target handler
immediately and the reply is queued back, which makes transcripts
byte-reproducible for a fixed seed.

Every envelope carries a taint tag: "public", "cipher", or
"blinded:<nonce-id>".  The transcript audit checks the blinding discipline
structurally: any payload that its recipient can read in the clear (either
sent as plaintext or decryptable with the recipient's key) must carry a
fresh blinding nonce, sign-bit replies are single bits, and nonces are
never reused.
"""

import hashlib
import json
import random
import time
from dataclasses import dataclass, field


def derive_rng(seed, stream):
    """Deterministic sub-stream of a seed, stable across processes.

    random.Random(tuple) would hash strings, and str hashing is randomized
    per process; go through sha256 instead.
    """
    digest = hashlib.sha256(f"{stream}:{seed}".encode()).digest()
    return random.Random(int.from_bytes(digest[:16], "big"))

TAINT_PUBLIC = "public"
TAINT_CIPHER = "cipher"


def taint_blinded(nonce_id):
    return f"blinded:{nonce_id}"


# Message kinds whose payload the recipient reads in the clear (after
# decrypting with its own key where applicable).  These must be blinded.
DECRYPTABLE_KINDS = frozenset({
    "sign-query",        # demander -> owner: blinded margin ciphertext
    "switch-request",    # demander -> owner: additively blinded ciphertext
    "convert-request",   # demander -> owner: multiplicatively blinded pair
    "sigmoid-request",   # demander -> owner: blinded sigmoid denominator
    "sum-share",         # owner -> demander: additively noised plaintext
})

# Kinds that legitimately carry unblinded content.
EXEMPT_KINDS = frozenset({"sign-bit", "final-output"})


class SessionClosedError(Exception):
    pass


class ChannelOrderError(Exception):
    pass


@dataclass(frozen=True)
class PartyId:
    role: str   # "demander" | "owner"
    index: int

    def label(self):
        return f"{self.role}:{self.index}"


DEMANDER = PartyId("demander", 0)


def owner_id(i):
    return PartyId("owner", i)


@dataclass
class Envelope:
    session: str
    seq: int
    src: PartyId
    dst: PartyId
    rt: str
    kind: str
    scale: int
    taint: str
    payload: dict


def encode_envelope(env):
    """Canonical wire bytes: UTF-8 JSON with sorted keys."""
    doc = {
        "session": env.session,
        "seq": env.seq,
        "from": env.src.label(),
        "to": env.dst.label(),
        "rt": env.rt,
        "kind": env.kind,
        "scale": env.scale,
        "taint": env.taint,
        "payload": env.payload,
    }
    return json.dumps(doc, sort_keys=True, separators=(",", ":")).encode()


def int_to_hex(x):
    """Big-endian lowercase hex, no leading zeros; sign prefix for negatives."""
    return format(x, "x") if x >= 0 else "-" + format(-x, "x")


def hex_to_int(s):
    return int(s, 16)


@dataclass
class Transcript:
    envelopes: list = field(default_factory=list)
    interactions: int = 0
    bytes: int = 0
    latency_ms: int = 0
    # plaintext values each party decrypted or read, by party label
    received_plaintexts: dict = field(default_factory=dict)

    def note_plaintext(self, pid, value):
        self.received_plaintexts.setdefault(pid.label(), []).append(value)

    def export_jsonl(self):
        return b"\n".join(encode_envelope(e) for e in self.envelopes) + b"\n"

    def write_jsonl(self, path):
        with open(path, "wb") as f:
            f.write(self.export_jsonl())


class Session:
    def __init__(self, n_owners, latency_ms, seed):
        if n_owners < 1:
            raise ValueError("need at least one owner")
        self.n_owners = n_owners
        self.latency_ms_per_rt = latency_ms
        self.seed = seed
        self.session_id = f"s{derive_rng(seed, 'session').getrandbits(48):012x}"
        self.transcript = Transcript()
        self.handlers = {}
        self.queues = {}
        self._seq = {}
        self._rt_counter = 0
        self._nonce_counter = 0
        self._completed_rts = set()
        self.closed = False
        self.faults = set()
        self.owner_wall_ms = 0.0
        # independent deterministic randomness streams
        self.rng_records = derive_rng(seed, "records")
        self.rng_blind = derive_rng(seed, "blind")
        self.rng_noise = derive_rng(seed, "noise")
        self.rng_crypto = derive_rng(seed, "crypto")

    # -- wiring ---------------------------------------------------------

    def register(self, pid, handler):
        self.handlers[pid.label()] = handler

    def parties(self):
        return [DEMANDER] + [owner_id(i) for i in range(1, self.n_owners + 1)]

    def new_rt(self):
        self._rt_counter += 1
        return f"rt{self._rt_counter:06d}"

    def new_nonce_id(self):
        self._nonce_counter += 1
        return f"n{self._nonce_counter:06d}"

    # -- primitives -----------------------------------------------------

    def send(self, src, dst, rt, kind, payload, scale=0, taint=TAINT_PUBLIC):
        if self.closed:
            raise SessionClosedError("send on closed session")
        chan = (src.label(), dst.label())
        seq = self._seq.get(chan, 0) + 1
        self._seq[chan] = seq
        env = Envelope(session=self.session_id, seq=seq, src=src, dst=dst,
                       rt=rt, kind=kind, scale=scale, taint=taint,
                       payload=payload)
        self.transcript.envelopes.append(env)
        self.transcript.bytes += len(encode_envelope(env))
        self.queues.setdefault(chan, []).append(env)
        return env

    def recv(self, dst, src):
        chan = (src.label(), dst.label())
        queue = self.queues.get(chan)
        if not queue:
            raise ChannelOrderError(f"no pending message on {chan}")
        return queue.pop(0)

    def _complete_rt(self, rt):
        if rt not in self._completed_rts:
            self._completed_rts.add(rt)
            self.transcript.interactions += 1
            self.transcript.latency_ms += self.latency_ms_per_rt

    # -- request/reply --------------------------------------------------

    def rpc(self, src, dst, kind, payload, scale=0, taint=TAINT_PUBLIC, rt=None):
        """One round trip: deliver the request, return the reply envelope."""
        rt = rt or self.new_rt()
        self.send(src, dst, rt, kind, payload, scale, taint)
        request = self.recv(dst, src)
        handler = self.handlers[dst.label()]
        r_kind, r_payload, r_scale, r_taint = self._run_handler(handler, request)
        reply = self.send(dst, src, rt, r_kind, r_payload, r_scale, r_taint)
        self.recv(src, dst)
        self._complete_rt(rt)
        return reply

    def _run_handler(self, handler, request):
        t0 = time.perf_counter()
        try:
            return handler(request)
        finally:
            self.owner_wall_ms += (time.perf_counter() - t0) * 1000.0

    def broadcast_rpc(self, src, dsts, make_request):
        """Concurrent round trips sharing one rt id (counted once).

        make_request(dst) -> (kind, payload, scale, taint).
        Returns the reply envelopes in dst order.
        """
        rt = self.new_rt()
        replies = []
        for dst in dsts:
            kind, payload, scale, taint = make_request(dst)
            self.send(src, dst, rt, kind, payload, scale, taint)
        for dst in dsts:
            request = self.recv(dst, src)
            handler = self.handlers[dst.label()]
            r_kind, r_payload, r_scale, r_taint = self._run_handler(handler, request)
            self.send(dst, src, rt, r_kind, r_payload, r_scale, r_taint)
            self.recv(src, dst)
        self._complete_rt(rt)
        for env in self.transcript.envelopes:
            if env.rt == rt and env.dst.label() == src.label():
                replies.append(env)
        return replies

    def close(self):
        self.closed = True


def open_session(n, latency_ms, seed):
    return Session(n_owners=n, latency_ms=latency_ms, seed=seed)


# ---------------------------------------------------------------------------
# Transcript audit


VIOLATION_UNBLINDED = "UNBLINDED_PLAINTEXT"
VIOLATION_NONCE_REUSE = "NONCE_REUSE"
VIOLATION_SIGN_BIT = "MALFORMED_SIGN_BIT"
VIOLATION_MODEL_LEAK = "MODEL_PLAINTEXT_TO_OWNER"


@dataclass
class AuditReport:
    violations: list

    @property
    def passed(self):
        return not self.violations

    def codes(self):
        return [v["code"] for v in self.violations]


def audit_transcript(transcript):
    """Structural blinding-discipline check over a finished session."""
    violations = []
    seen_nonces = set()
    for env in transcript.envelopes:
        if env.kind in DECRYPTABLE_KINDS:
            if not env.taint.startswith("blinded:"):
                violations.append({
                    "code": VIOLATION_UNBLINDED,
                    "seq": env.seq,
                    "detail": f"{env.kind} from {env.src.label()} to "
                              f"{env.dst.label()} without blinding",
                })
            else:
                nonce = env.taint.split(":", 1)[1]
                if nonce in seen_nonces:
                    violations.append({
                        "code": VIOLATION_NONCE_REUSE,
                        "seq": env.seq,
                        "detail": f"nonce {nonce} reused",
                    })
                seen_nonces.add(nonce)
        if env.kind == "sign-bit":
            bit = env.payload.get("bit")
            if bit not in (0, 1):
                violations.append({
                    "code": VIOLATION_SIGN_BIT,
                    "seq": env.seq,
                    "detail": f"sign-bit payload {bit!r} is not a single bit",
                })
        if env.kind == "model-params" and env.dst.role == "owner":
            if env.taint == TAINT_PUBLIC:
                violations.append({
                    "code": VIOLATION_MODEL_LEAK,
                    "seq": env.seq,
                    "detail": "plaintext model coefficients sent to an owner",
                })
    return AuditReport(violations=violations)
