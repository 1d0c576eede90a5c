"""Plaintext reference trainers.

Two modes: exact (plain float arithmetic) and quantized, which truncates
to decimal fixed point at exactly the points where the encrypted pipeline
encodes, using the same derived randomness streams for record picking and
exponential blinding.  The quantized trace is therefore expected to match
the secure trace integer for integer, which the equivalence tests assert.

Also holds the count-based trainer's statistics/model builder, shared with
the secure driver so both sides build the model from identical integer
statistics.
"""

import math
from dataclasses import dataclass, field

from .blocks import recover_pow_value, theta_exponents
from .encoding import DEFAULT_SCALE, FRAC_ROOT, fx_encode, round_div
from .net import derive_rng

SIG_SCALE = 8          # owner-side scale of x_j / blinded-denominator
UPDATE_SCALE = 16      # scale of the assembled gradient term


@dataclass
class TrainConfig:
    lam: float = 0.05
    alpha: float = 1.0
    iters: int = 100
    seed: int = 0


@dataclass
class TraceStats:
    max_int_scale: int = 0
    max_frac_scale: int = 0
    max_theta_l1: float = 0.0


def accuracy(preds, labels):
    if not preds or len(preds) != len(labels):
        raise ValueError("prediction/label length mismatch")
    return sum(p == y for p, y in zip(preds, labels)) / len(labels)


def augment(x):
    """Append the constant-1 bias feature."""
    return tuple(x) + (1.0,)


# ---------------------------------------------------------------------------
# Margin trainer (hinge loss, labels -1/+1)


def plain_svm_sgd(X, y, cfg, quantized=True):
    """Per-iteration theta trace; quantized mode works on scale-2 mantissas
    with the update assembled at scale 4 and truncated back, mirroring the
    encrypted driver."""
    rng = derive_rng(cfg.seed, "records")
    m = len(X)
    rows = [augment(x) for x in X]
    d = len(rows[0])
    a = fx_encode(1 - cfg.lam * cfg.alpha, DEFAULT_SCALE)
    b = fx_encode(cfg.lam * cfg.alpha, DEFAULT_SCALE)
    if quantized:
        xy = [[fx_encode(v, DEFAULT_SCALE) * yi for v in row]
              for row, yi in zip(rows, y)]
        theta = [0] * d
        trace = []
        for _ in range(cfg.iters):
            t = rng.randrange(m)
            u = sum(xy[t][j] * theta[j] for j in range(d))  # scale 4
            if 10 ** 4 - u > 0:
                theta = [round_div(a * theta[j] + b * xy[t][j], 100)
                         for j in range(d)]
            else:
                theta = [round_div(a * theta[j], 100) for j in range(d)]
            trace.append(list(theta))
        return trace
    theta = [0.0] * d
    trace = []
    for _ in range(cfg.iters):
        t = rng.randrange(m)
        u = sum(rows[t][j] * y[t] * theta[j] for j in range(d))
        if u < 1:
            theta = [(1 - cfg.lam * cfg.alpha) * theta[j]
                     + cfg.lam * cfg.alpha * rows[t][j] * y[t]
                     for j in range(d)]
        else:
            theta = [(1 - cfg.lam * cfg.alpha) * theta[j] for j in range(d)]
        trace.append(list(theta))
    return trace


def svm_predict(theta_mantissas, x, scale=DEFAULT_SCALE):
    th = [m / 10 ** scale for m in theta_mantissas]
    u = sum(t * v for t, v in zip(th, augment(x)))
    return 1 if u >= 0 else -1


# ---------------------------------------------------------------------------
# Sigmoid trainer (labels 0/1)


def quantized_exp_bases(row):
    """Scale-2 encodings of e^{+x_j} and e^{-x_j}.

    The exponentials are taken of the scale-2 quantized feature (the
    record as an owner stores it), not of the raw float, so the bases are
    identical to the encrypted pipeline's.
    """
    xs = [fx_encode(v, DEFAULT_SCALE) / 10 ** DEFAULT_SCALE for v in row]
    pos = [fx_encode(math.exp(x), DEFAULT_SCALE) for x in xs]
    neg = [fx_encode(math.exp(-x), DEFAULT_SCALE) for x in xs]
    return pos, neg


def plain_lr_sgd(X, y, cfg, quantized=True, stats=None, blind_range=(1, 8)):
    """Sigmoid-trainer trace.

    Quantized mode reproduces every encode point of the encrypted flow:
    the power-function components are assembled from scale-2 exponential
    bases, blinded by the same e^r stream, recovered through the shared
    recover_pow_value, and the sigmoid term travels at scale 8 then 16.
    """
    rng = derive_rng(cfg.seed, "records")
    rng_blind = derive_rng(cfg.seed, "blind")
    m = len(X)
    rows = [augment(x) for x in X]
    d = len(rows[0])
    if not quantized:
        theta = [0.0] * d
        trace = []
        for _ in range(cfg.iters):
            t = rng.randrange(m)
            s = 1 / (1 + math.exp(-sum(th * v for th, v in zip(theta, rows[t]))))
            theta = [theta[j] + cfg.lam * rows[t][j] * (y[t] - s)
                     for j in range(d)]
            trace.append(list(theta))
        return trace

    lam_m = fx_encode(cfg.lam, DEFAULT_SCALE)
    bases = [quantized_exp_bases(row) for row in rows]
    xms = [[fx_encode(v, DEFAULT_SCALE) for v in row] for row in rows]
    theta = [0] * d
    trace = []
    for _ in range(cfg.iters):
        t = rng.randrange(m)
        blind_r = rng_blind.randint(*blind_range)
        pos, neg = bases[t]
        int_m, frac_m, int_scale, frac_scale = 1, 1, 0, 0
        for (sign, e_int, e_frac), p, ng in zip(theta_exponents(theta), pos, neg):
            base = ng if sign > 0 else p
            if e_int:
                int_m *= base ** e_int
                int_scale += DEFAULT_SCALE * e_int
            if e_frac:
                frac_m *= base ** e_frac
                frac_scale += DEFAULT_SCALE * e_frac
        ehat = fx_encode(math.exp(blind_r), 4)
        v = recover_pow_value(int_m * ehat, int_scale + 4,
                              frac_m * ehat, frac_scale + 4)
        if stats is not None:
            stats.max_int_scale = max(stats.max_int_scale, int_scale + 4)
            stats.max_frac_scale = max(stats.max_frac_scale, frac_scale + 4)
            stats.max_theta_l1 = max(
                stats.max_theta_l1, sum(abs(x) for x in theta) / 100)
        unblind = math.exp((1 + 1 / FRAC_ROOT) * blind_r)
        denom = fx_encode(v, DEFAULT_SCALE) + fx_encode(unblind, DEFAULT_SCALE)
        e8 = fx_encode(unblind, SIG_SCALE)
        new_theta = []
        for j in range(d):
            q = fx_encode(xms[t][j] / denom, SIG_SCALE)
            sig = q * e8                                      # scale 16
            g = xms[t][j] * y[t] * 10 ** (UPDATE_SCALE - DEFAULT_SCALE) - sig
            new_theta.append(round_div(
                theta[j] * 10 ** UPDATE_SCALE + lam_m * g, 10 ** UPDATE_SCALE))
        theta = new_theta
        trace.append(list(theta))
    return trace


def lr_predict(theta_mantissas, x, scale=DEFAULT_SCALE):
    th = [m / 10 ** scale for m in theta_mantissas]
    u = sum(t * v for t, v in zip(th, augment(x)))
    return 1 if 1 / (1 + math.exp(-u)) >= 0.5 else 0


def lr_log_loss(theta, X, y):
    """Mean logistic loss for float theta (with bias) — used to check loss
    decrease on separable data."""
    total = 0.0
    for x, yi in zip(X, y):
        u = sum(t * v for t, v in zip(theta, augment(x)))
        p = 1 / (1 + math.exp(-u))
        p = min(max(p, 1e-12), 1 - 1e-12)
        total += -(yi * math.log(p) + (1 - yi) * math.log(1 - p))
    return total / len(X)


# ---------------------------------------------------------------------------
# Count-based trainer (Gaussian / categorical conditionals)

VAR_FLOOR = 1e-9
SUM_SCALE = DEFAULT_SCALE
SUMSQ_SCALE = 2 * DEFAULT_SCALE


@dataclass
class NbStats:
    """Integer sufficient statistics, the unit of the secure summations.

    Per class: record count; per (class, numeric feature): sum of scale-2
    mantissas and sum of their squares (scale 4); per (class, discrete
    feature): counts per category mantissa.
    """

    classes: tuple
    kinds: tuple                      # "numeric" | "discrete" per feature
    counts: dict = field(default_factory=dict)     # c -> int
    sum_x: dict = field(default_factory=dict)      # (c, j) -> int
    sum_xsq: dict = field(default_factory=dict)    # (c, j) -> int
    cat_counts: dict = field(default_factory=dict)  # (c, j, mantissa) -> int


def local_nb_stats(X, y01, kinds, classes=(0, 1)):
    st = NbStats(classes=tuple(classes), kinds=tuple(kinds))
    for c in classes:
        st.counts[c] = 0
        for j in range(len(kinds)):
            if kinds[j] == "numeric":
                st.sum_x[(c, j)] = 0
                st.sum_xsq[(c, j)] = 0
    for row, c in zip(X, y01):
        st.counts[c] += 1
        for j, (v, kind) in enumerate(zip(row, st.kinds)):
            m = fx_encode(v, DEFAULT_SCALE)
            if kind == "numeric":
                st.sum_x[(c, j)] += m
                st.sum_xsq[(c, j)] += m * m
            else:
                key = (c, j, m)
                st.cat_counts[key] = st.cat_counts.get(key, 0) + 1
    return st


def merge_nb_stats(parts):
    out = NbStats(classes=parts[0].classes, kinds=parts[0].kinds)
    for st in parts:
        for c, v in st.counts.items():
            out.counts[c] = out.counts.get(c, 0) + v
        for k, v in st.sum_x.items():
            out.sum_x[k] = out.sum_x.get(k, 0) + v
        for k, v in st.sum_xsq.items():
            out.sum_xsq[k] = out.sum_xsq.get(k, 0) + v
        for k, v in st.cat_counts.items():
            out.cat_counts[k] = out.cat_counts.get(k, 0) + v
    return out


@dataclass
class NbModel:
    classes: tuple
    kinds: tuple
    priors: dict                      # c -> float
    gaussian: dict                    # (c, j) -> (mu, var)
    categorical: dict                 # (c, j, mantissa) -> prob
    m: int


def model_from_stats(st):
    """Deterministic model construction from integer statistics; both the
    secure driver and the pooled oracle call this on equal inputs."""
    m = sum(st.counts.values())
    if m == 0:
        raise ValueError("no records")
    priors = {c: st.counts[c] / m for c in st.classes}
    gaussian = {}
    categorical = {}
    for c in st.classes:
        mc = st.counts[c]
        for j, kind in enumerate(st.kinds):
            if kind == "numeric":
                if mc == 0:
                    gaussian[(c, j)] = (0.0, VAR_FLOOR)
                    continue
                mu = st.sum_x[(c, j)] / (mc * 10 ** SUM_SCALE)
                ex2 = st.sum_xsq[(c, j)] / (mc * 10 ** SUMSQ_SCALE)
                gaussian[(c, j)] = (mu, max(ex2 - mu * mu, VAR_FLOOR))
    for (c, j, mant), n in st.cat_counts.items():
        mc = st.counts[c]
        categorical[(c, j, mant)] = n / mc if mc else 0.0
    return NbModel(classes=st.classes, kinds=st.kinds, priors=priors,
                   gaussian=gaussian, categorical=categorical, m=m)


def plain_nb(X, y01, kinds, classes=(0, 1)):
    return model_from_stats(local_nb_stats(X, y01, kinds, classes))


def nb_predict(model, x):
    best_c, best_score = None, None
    for c in model.classes:
        prior = model.priors.get(c, 0.0)
        score = math.log(prior) if prior > 0 else -1e18
        for j, (v, kind) in enumerate(zip(x, model.kinds)):
            if kind == "numeric":
                mu, var = model.gaussian[(c, j)]
                score += -0.5 * math.log(2 * math.pi * var) \
                         - (v - mu) ** 2 / (2 * var)
            else:
                p = model.categorical.get((c, j, fx_encode(v, DEFAULT_SCALE)), 0.0)
                score += math.log(p) if p > 0 else -1e18
        if best_score is None or score > best_score:
            best_c, best_score = c, score
    return best_c
