"""Tied-state triphone HMM-GMM: training, tying, and forced alignment.

Every phone is a strict 3-state left-to-right HMM (self-loop + forward,
no skips).  Emissions are diagonal-covariance Gaussian mixtures over
tied states.  Training is Viterbi-EM: align with the current model,
re-estimate from the hard-assigned frames, repeat; mixtures grow by
binary splitting on a schedule.  State tying is occupancy-count driven:
frequent (triphone, state) pairs get dedicated states, everything else
backs off to a shared per-(center phone, state) state, so the center
phone of any tied state is always recoverable.
"""

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import binio
from .corpus import PhoneSet
from .errors import ConfigError, FormatError, MissingArtifactError, NumericError

log = logging.getLogger(__name__)

MODEL_MAGIC = b"DTEA"
MODEL_VERSION = 1
ALIGN_MAGIC = b"DTEL"
ALIGN_VERSION = 1

LOG_ZERO = -1e30


@dataclass(frozen=True)
class Triphone:
    left: int
    center: int
    right: int


class TiedStateMap:
    """(triphone, hmm state) -> tied state id.

    Ids 0 .. 3*n_phones-1 are the per-(center, state) backoff states in
    center-major order; dedicated triphone states follow contiguously.
    Unseen triphones resolve to the backoff state of their (center, state).
    """

    def __init__(self, n_phones: int, dedicated=None):
        self.n_phones = n_phones
        self.dedicated = dict(dedicated or {})
        n_backoff = 3 * n_phones
        ids = sorted(self.dedicated.values())
        if ids and (ids[0] != n_backoff or ids != list(range(n_backoff, n_backoff + len(ids)))):
            raise ConfigError("dedicated tied-state ids must be contiguous after the backoffs")
        S = n_backoff + len(self.dedicated)
        center = np.empty(S, dtype=np.int32)
        state = np.empty(S, dtype=np.int32)
        center[:n_backoff] = np.repeat(np.arange(n_phones), 3)
        state[:n_backoff] = np.tile(np.arange(3), n_phones)
        for (l, c, r, s), tid in self.dedicated.items():
            center[tid] = c
            state[tid] = s
        self.center_phone = center
        self.hmm_state = state

    @property
    def n_states(self) -> int:
        return 3 * self.n_phones + len(self.dedicated)

    def lookup(self, left: int, center: int, right: int, state: int) -> int:
        return self.dedicated.get((left, center, right, state), 3 * center + state)

    def __eq__(self, other):
        return (
            isinstance(other, TiedStateMap)
            and self.n_phones == other.n_phones
            and self.dedicated == other.dedicated
        )


def tie_states(occupancy, n_phones: int, min_count, max_states) -> TiedStateMap:
    """Greedy count-threshold tying.

    `occupancy` maps (left, center, right, state) -> frame count from a
    monophone alignment.  Variants with count >= min_count receive
    dedicated states in descending-count order until the total state
    budget `max_states` (backoffs included) is exhausted.
    """
    candidates = [
        (cnt, key) for key, cnt in occupancy.items()
        if math.isfinite(min_count) and cnt >= min_count
    ]
    # deterministic: heaviest first, then lexicographic on the pair
    candidates.sort(key=lambda item: (-item[0], item[1]))
    dedicated = {}
    next_id = 3 * n_phones
    for _, key in candidates:
        if next_id >= max_states:
            break
        dedicated[key] = next_id
        next_id += 1
    return TiedStateMap(n_phones, dedicated)


@dataclass
class HmmTopology:
    """Per-phone self-loop / forward probabilities, shape (n_phones, 3)."""

    self_prob: np.ndarray
    next_prob: np.ndarray

    def __post_init__(self):
        self.self_prob = np.asarray(self.self_prob, dtype=np.float64)
        self.next_prob = np.asarray(self.next_prob, dtype=np.float64)
        if self.self_prob.shape != self.next_prob.shape or self.self_prob.shape[1] != 3:
            raise ConfigError("topology arrays must both be (n_phones, 3)")
        total = self.self_prob + self.next_prob
        if not np.allclose(total, 1.0, atol=1e-8):
            raise ConfigError("outgoing transition probabilities must sum to 1")

    @classmethod
    def uniform(cls, n_phones, self_loop=0.6):
        return cls(
            self_prob=np.full((n_phones, 3), self_loop),
            next_prob=np.full((n_phones, 3), 1.0 - self_loop),
        )

    def log_self(self):
        return np.log(np.maximum(self.self_prob, 1e-300))

    def log_next(self):
        return np.log(np.maximum(self.next_prob, 1e-300))


class GmmEmission:
    """Diagonal-covariance GMM per tied state.

    weights[s]: (M_s,), means[s]/variances[s]: (M_s, D).  Weights sum to
    one; variances are floored during training, never here.
    """

    def __init__(self, weights, means, variances):
        self.weights = [np.asarray(w, dtype=np.float64) for w in weights]
        self.means = [np.asarray(m, dtype=np.float64) for m in means]
        self.variances = [np.asarray(v, dtype=np.float64) for v in variances]
        for s, (w, m, v) in enumerate(zip(self.weights, self.means, self.variances)):
            if not math.isclose(w.sum(), 1.0, abs_tol=1e-8):
                raise ConfigError(f"state {s}: mixture weights sum to {w.sum()}, not 1")
            if np.any(w < 0) or m.shape != v.shape or len(w) != m.shape[0]:
                raise ConfigError(f"state {s}: inconsistent mixture parameters")

    @property
    def n_states(self):
        return len(self.weights)

    @property
    def dim(self):
        return self.means[0].shape[1]

    def log_likelihood(self, frames, state: int):
        """Natural-log mixture density of each frame under `state` via log-sum-exp."""
        X = np.atleast_2d(np.asarray(frames, dtype=np.float64))
        if X.shape[1] != self.dim:
            raise ConfigError(f"frame dim {X.shape[1]} != model dim {self.dim}")
        w = self.weights[state]
        mu = self.means[state]
        var = self.variances[state]
        const = -0.5 * (self.dim * math.log(2.0 * math.pi) + np.log(var).sum(axis=1))
        diff = X[:, None, :] - mu[None, :, :]
        quad = -0.5 * np.sum(diff * diff / var[None, :, :], axis=2)
        comp = np.log(np.maximum(w, 1e-300))[None, :] + const[None, :] + quad
        peak = comp.max(axis=1)
        return peak + np.log(np.sum(np.exp(comp - peak[:, None]), axis=1))

    def score_states(self, frames, state_ids):
        """T x len(state_ids) log-likelihood matrix, one column per state."""
        X = np.atleast_2d(np.asarray(frames, dtype=np.float64))
        out = np.empty((X.shape[0], len(state_ids)))
        cache = {}
        for j, s in enumerate(state_ids):
            s = int(s)
            if s not in cache:
                cache[s] = self.log_likelihood(X, s)
            out[:, j] = cache[s]
        return out


def gmm_log_likelihood(frame, tied_state: int, emission: GmmEmission) -> float:
    return float(emission.log_likelihood(np.atleast_2d(frame), tied_state)[0])


@dataclass
class AcousticModel:
    phone_set: PhoneSet
    tied_map: TiedStateMap
    topology: HmmTopology
    emission: GmmEmission

    @property
    def n_states(self):
        return self.tied_map.n_states


@dataclass
class Alignment:
    utterance_id: str
    tied: np.ndarray    # (T,) int32 tied-state ids
    center: np.ndarray  # (T,) int32 center-phone ids
    score: float = 0.0  # Viterbi path log-probability (not serialized)

    def __post_init__(self):
        self.tied = np.asarray(self.tied, dtype=np.int32)
        self.center = np.asarray(self.center, dtype=np.int32)
        if self.tied.shape != self.center.shape:
            raise ConfigError("alignment arrays must have equal length")

    @property
    def n_frames(self):
        return self.tied.shape[0]


def chain_states(phone_ids, tied_map: TiedStateMap, silence_id: int):
    """Linear 3-state-per-phone chain with triphone context from the sequence.

    Utterance-boundary context is silence.  Returns (tied ids, phone ids,
    hmm states), each of length 3 * len(phone_ids).
    """
    if len(phone_ids) == 0:
        raise ConfigError("empty phone sequence")
    tied = []
    phones = []
    states = []
    for i, c in enumerate(phone_ids):
        left = phone_ids[i - 1] if i > 0 else silence_id
        right = phone_ids[i + 1] if i + 1 < len(phone_ids) else silence_id
        for s in range(3):
            tied.append(tied_map.lookup(left, c, right, s))
            phones.append(c)
            states.append(s)
    return (
        np.asarray(tied, dtype=np.int32),
        np.asarray(phones, dtype=np.int32),
        np.asarray(states, dtype=np.int32),
    )


def viterbi_chain(emissions, log_self, log_next):
    """Best monotone path through a left-to-right chain.

    `emissions` is T x N (log), `log_self`/`log_next` are per chain
    position.  The path must start in position 0 and end in position
    N-1; its score is the sum of T emissions and T-1 transitions.
    Ties between staying and advancing resolve to staying.
    """
    T, N = emissions.shape
    if T < N:
        raise ConfigError(f"utterance too short: {T} frames for {N} chain states")
    dp = np.full(N, LOG_ZERO)
    dp[0] = emissions[0, 0]
    back = np.zeros((T, N), dtype=bool)  # True: entered from the left
    for t in range(1, T):
        stay = dp + log_self
        enter = np.full(N, LOG_ZERO)
        enter[1:] = dp[:-1] + log_next[:-1]
        advance = enter > stay
        dp = np.where(advance, enter, stay) + emissions[t]
        back[t] = advance
        if not np.any(dp > LOG_ZERO / 2):
            raise NumericError(f"no surviving alignment path at frame {t}")
    score = dp[N - 1]
    if score <= LOG_ZERO / 2:
        raise NumericError("no complete alignment path reaches the final state")
    path = np.empty(T, dtype=np.int32)
    j = N - 1
    for t in range(T - 1, -1, -1):
        path[t] = j
        if t > 0 and back[t, j]:
            j -= 1
    return path, float(score)


def force_align(features, phone_ids, model: AcousticModel) -> Alignment:
    """Viterbi alignment of a known phone sequence against feature frames.

    Requires T >= 3 * len(phone_ids).  Emits per-frame tied-state and
    center-phone ids plus the maximal path log-probability.
    """
    frames = np.asarray(features.frames, dtype=np.float64)
    T = frames.shape[0]
    if len(phone_ids) == 0:
        raise ConfigError("cannot align an empty phone sequence")
    if T < 3 * len(phone_ids):
        raise ConfigError(
            f"utterance {features.utterance_id!r} too short: {T} frames for "
            f"{len(phone_ids)} phones (need >= {3 * len(phone_ids)})"
        )
    sil = model.phone_set.silence_id
    tied, phones, states = chain_states(phone_ids, model.tied_map, sil)
    emis = model.emission.score_states(frames, tied)
    bad = ~np.any(np.isfinite(emis), axis=1)
    if np.any(bad):
        raise NumericError(
            f"utterance {features.utterance_id!r}: all emission scores are -inf "
            f"at frame {int(np.where(bad)[0][0])}"
        )
    ls = model.topology.log_self()[phones, states]
    ln = model.topology.log_next()[phones, states]
    path, score = viterbi_chain(emis, ls, ln)
    return Alignment(
        utterance_id=features.utterance_id,
        tied=tied[path],
        center=phones[path],
        score=score,
    )


@dataclass
class HmmTrainConfig:
    em_iters: int = 6
    mixtures: int = 1
    mix_schedule: list = field(default_factory=list)  # 1-based iterations after which to split
    min_count: float = math.inf
    max_states: int = 10_000
    var_floor_scale: float = 1e-4
    inner_gmm_iters: int = 3
    self_loop_init: float = 0.6

    def schedule(self):
        """Split iterations; default spreads mixtures-1 splits evenly."""
        n_splits = max(self.mixtures - 1, 0)
        if self.mix_schedule:
            sched = sorted(self.mix_schedule)
            if len(sched) != n_splits:
                raise ConfigError(
                    f"mix_schedule needs exactly {n_splits} entries for "
                    f"{self.mixtures} mixtures, got {len(sched)}"
                )
            return sched
        if n_splits == 0:
            return []
        return [max(1, round((k + 1) * self.em_iters / (n_splits + 1)))
                for k in range(n_splits)]


def _global_stats(data):
    stacked = np.concatenate([frames for frames, _ in data])
    mean = stacked.mean(axis=0)
    var = np.maximum(stacked.var(axis=0), 1e-12)
    return mean, var


def _flat_start(data, tied_map, silence_id, var_floor):
    """Uniform segmentation of every utterance; single Gaussian per state."""
    S = tied_map.n_states
    D = data[0][0].shape[1]
    count = np.zeros(S)
    acc = np.zeros((S, D))
    acc2 = np.zeros((S, D))
    for frames, phone_ids in data:
        tied, _, _ = chain_states(phone_ids, tied_map, silence_id)
        T = frames.shape[0]
        bounds = np.linspace(0, T, len(tied) + 1).astype(int)
        for j, s in enumerate(tied):
            seg = frames[bounds[j]:bounds[j + 1]]
            if seg.shape[0]:
                count[s] += seg.shape[0]
                acc[s] += seg.sum(axis=0)
                acc2[s] += (seg ** 2).sum(axis=0)
    g_mean, g_var = _global_stats(data)
    weights, means, variances = [], [], []
    for s in range(S):
        if count[s] > 0:
            mu = acc[s] / count[s]
            var = np.maximum(acc2[s] / count[s] - mu ** 2, var_floor)
        else:
            mu = g_mean.copy()
            var = np.maximum(g_var.copy(), var_floor)
        weights.append(np.array([1.0]))
        means.append(mu[None, :])
        variances.append(var[None, :])
    return GmmEmission(weights, means, variances)


def _fit_state_gmm(X, weights, means, variances, var_floor, inner_iters):
    """Inner EM on one state's hard-assigned frames; caps components at n."""
    n = X.shape[0]
    M = len(weights)
    capped = False
    if n < M:
        order = np.argsort(-weights)[:max(1, n)]
        weights = weights[order]
        weights = weights / weights.sum()
        means = means[order]
        variances = variances[order]
        M = len(weights)
        capped = True
    if M == 1:
        mu = X.mean(axis=0)
        var = np.maximum(X.var(axis=0), var_floor)
        return np.array([1.0]), mu[None, :], var[None, :], capped
    for _ in range(inner_iters):
        const = -0.5 * (X.shape[1] * math.log(2.0 * math.pi)
                        + np.log(variances).sum(axis=1))
        diff = X[:, None, :] - means[None, :, :]
        quad = -0.5 * np.sum(diff * diff / variances[None, :, :], axis=2)
        comp = np.log(np.maximum(weights, 1e-300))[None, :] + const[None, :] + quad
        peak = comp.max(axis=1, keepdims=True)
        resp = np.exp(comp - peak)
        resp /= resp.sum(axis=1, keepdims=True)
        mass = resp.sum(axis=0)
        weights = mass / n
        means = (resp.T @ X) / np.maximum(mass[:, None], 1e-300)
        sq = (resp.T @ (X * X)) / np.maximum(mass[:, None], 1e-300)
        variances = np.maximum(sq - means ** 2, var_floor)
    return weights, means, variances, capped


def _split_heaviest(weights, means, variances, n_frames):
    """One binary split: heaviest component forks into mean +/- 0.2 sigma."""
    M = len(weights)
    if n_frames < M + 1:
        return weights, means, variances, False
    j = int(np.argmax(weights))
    delta = 0.2 * np.sqrt(variances[j])
    w = weights[j] / 2.0
    new_w = np.concatenate([weights[:j], [w], weights[j + 1:], [w]])
    new_mu = np.vstack([means[:j], means[j] - delta, means[j + 1:], means[j] + delta])
    new_var = np.vstack([variances[:j], variances[j][None, :],
                         variances[j + 1:], variances[j][None, :]])
    return new_w, new_mu, new_var, True


def viterbi_em(model: AcousticModel, data, cfg: HmmTrainConfig,
               collect_occupancy=False):
    """Hard-assignment EM refinement of `model` in place.

    Returns (history, occupancy): history rows are (iteration, total
    aligned log-likelihood, mixture target at that iteration); occupancy
    counts (left, center, right, state) frames from the final iteration
    when requested (for state tying).
    """
    if not data:
        raise ConfigError("cannot train on an empty corpus")
    _, g_var = _global_stats(data)
    var_floor = cfg.var_floor_scale * g_var
    sil = model.phone_set.silence_id
    history = []
    occupancy = {}
    splits_at = {}
    for it in cfg.schedule():
        splits_at[it] = splits_at.get(it, 0) + 1
    target_m = max(len(w) for w in model.emission.weights)
    frame_count = np.zeros(model.n_states)

    for iteration in range(1, cfg.em_iters + 1):
        total_ll = 0.0
        per_state = [[] for _ in range(model.n_states)]
        trans_self = np.zeros((len(model.phone_set), 3))
        trans_next = np.zeros((len(model.phone_set), 3))
        occupancy = {}
        for frames, phone_ids in data:
            tied, phones, states = chain_states(phone_ids, model.tied_map, sil)
            emis = model.emission.score_states(frames, tied)
            ls = model.topology.log_self()[phones, states]
            ln = model.topology.log_next()[phones, states]
            path, score = viterbi_chain(emis, ls, ln)
            total_ll += score
            for pos in np.unique(path):
                sel = frames[path == pos]
                per_state[tied[pos]].append(sel)
            stays = path[1:] == path[:-1]
            for pos, stayed in zip(path[:-1], stays):
                if stayed:
                    trans_self[phones[pos], states[pos]] += 1
                else:
                    trans_next[phones[pos], states[pos]] += 1
            if collect_occupancy:
                for i, c in enumerate(phone_ids):
                    left = phone_ids[i - 1] if i > 0 else sil
                    right = phone_ids[i + 1] if i + 1 < len(phone_ids) else sil
                    base = 3 * i
                    for s in range(3):
                        n = int(np.sum(path == base + s))
                        if n:
                            key = (left, c, right, s)
                            occupancy[key] = occupancy.get(key, 0) + n
        if not np.isfinite(total_ll):
            raise NumericError("aligned log-likelihood is not finite")
        history.append((iteration, total_ll, target_m))

        capped_states = 0
        for s in range(model.n_states):
            if not per_state[s]:
                frame_count[s] = 0
                continue
            X = np.concatenate(per_state[s])
            frame_count[s] = X.shape[0]
            w, mu, var, capped = _fit_state_gmm(
                X, model.emission.weights[s], model.emission.means[s],
                model.emission.variances[s], var_floor, cfg.inner_gmm_iters,
            )
            model.emission.weights[s] = w
            model.emission.means[s] = mu
            model.emission.variances[s] = var
            capped_states += int(capped)
        if capped_states:
            log.warning("capped mixture count for %d starved states", capped_states)

        model.topology.self_prob = (trans_self + 1.0) / (trans_self + trans_next + 2.0)
        model.topology.next_prob = 1.0 - model.topology.self_prob

        for _ in range(splits_at.get(iteration, 0)):
            if target_m >= cfg.mixtures:
                break
            target_m += 1
            for s in range(model.n_states):
                w, mu, var, _ = _split_heaviest(
                    model.emission.weights[s], model.emission.means[s],
                    model.emission.variances[s], int(frame_count[s]),
                )
                model.emission.weights[s] = w
                model.emission.means[s] = mu
                model.emission.variances[s] = var
    return history, occupancy


def train_monophone_gmm(data, phone_set: PhoneSet, cfg: HmmTrainConfig):
    """Flat start plus Viterbi-EM over monophone states.

    `data` is a list of (frames T x D float, phone id sequence) pairs.
    Returns (model, history, occupancy); occupancy feeds tie_states.
    """
    if not data:
        raise ConfigError("cannot train on an empty corpus")
    tied_map = TiedStateMap(len(phone_set))
    _, g_var = _global_stats(data)
    emission = _flat_start(data, tied_map, phone_set.silence_id,
                           cfg.var_floor_scale * g_var)
    model = AcousticModel(
        phone_set=phone_set,
        tied_map=tied_map,
        topology=HmmTopology.uniform(len(phone_set), cfg.self_loop_init),
        emission=emission,
    )
    history, occupancy = viterbi_em(model, data, cfg, collect_occupancy=True)
    return model, history, occupancy


def train_tied_triphone_gmm(data, mono_model: AcousticModel,
                            tied_map: TiedStateMap, cfg: HmmTrainConfig):
    """Refine tied-state GMMs, each seeded from its monophone counterpart."""
    weights, means, variances = [], [], []
    for tid in range(tied_map.n_states):
        mono_id = 3 * int(tied_map.center_phone[tid]) + int(tied_map.hmm_state[tid])
        weights.append(mono_model.emission.weights[mono_id].copy())
        means.append(mono_model.emission.means[mono_id].copy())
        variances.append(mono_model.emission.variances[mono_id].copy())
    model = AcousticModel(
        phone_set=mono_model.phone_set,
        tied_map=tied_map,
        topology=HmmTopology(
            self_prob=mono_model.topology.self_prob.copy(),
            next_prob=mono_model.topology.next_prob.copy(),
        ),
        emission=GmmEmission(weights, means, variances),
    )
    history, _ = viterbi_em(model, data, cfg)
    return model, history


def aligned_log_likelihood(model: AcousticModel, data) -> float:
    """Total forced-alignment path score over a corpus."""
    total = 0.0
    sil = model.phone_set.silence_id
    for frames, phone_ids in data:
        tied, phones, states = chain_states(phone_ids, model.tied_map, sil)
        emis = model.emission.score_states(frames, tied)
        ls = model.topology.log_self()[phones, states]
        ln = model.topology.log_next()[phones, states]
        _, score = viterbi_chain(emis, ls, ln)
        total += score
    return total


def save_model(model: AcousticModel, path) -> None:
    with open(path, "wb") as f:
        binio.write_header(f, MODEL_MAGIC, MODEL_VERSION)
        binio.write_u32(f, len(model.phone_set))
        binio.write_u32(f, model.phone_set.silence_id)
        for p in model.phone_set.phones:
            binio.write_str(f, p)
        binio.write_u32(f, len(model.tied_map.dedicated))
        for (l, c, r, s), tid in sorted(model.tied_map.dedicated.items(),
                                        key=lambda kv: kv[1]):
            binio.write_u16(f, l)
            binio.write_u16(f, c)
            binio.write_u16(f, r)
            binio.write_u16(f, s)
            binio.write_u32(f, tid)
        binio.write_array(f, model.topology.self_prob, "<f4")
        binio.write_array(f, model.topology.next_prob, "<f4")
        binio.write_u32(f, model.n_states)
        binio.write_u32(f, model.emission.dim)
        for s in range(model.n_states):
            binio.write_u32(f, len(model.emission.weights[s]))
            binio.write_array(f, model.emission.weights[s], "<f4")
            binio.write_array(f, model.emission.means[s], "<f4")
            binio.write_array(f, model.emission.variances[s], "<f4")


def load_model(path) -> AcousticModel:
    path = Path(path)
    if not path.exists():
        raise MissingArtifactError(
            f"acoustic model not found: {path} (run `dtekit train-gmm`)"
        )
    with open(path, "rb") as f:
        binio.read_header(f, MODEL_MAGIC, MODEL_VERSION)
        n_phones = binio.read_u32(f)
        sil_id = binio.read_u32(f)
        phones = [binio.read_str(f) for _ in range(n_phones)]
        phone_set = PhoneSet(phones, phones[sil_id])
        n_ded = binio.read_u32(f)
        dedicated = {}
        for _ in range(n_ded):
            l = binio.read_u16(f)
            c = binio.read_u16(f)
            r = binio.read_u16(f)
            s = binio.read_u16(f)
            tid = binio.read_u32(f)
            dedicated[(l, c, r, s)] = tid
        tied_map = TiedStateMap(n_phones, dedicated)
        self_prob = binio.read_array(f, (n_phones, 3), "<f4").astype(np.float64)
        next_prob = binio.read_array(f, (n_phones, 3), "<f4").astype(np.float64)
        # f32 rounding can leave rows a hair off 1; renormalize
        total = self_prob + next_prob
        topology = HmmTopology(self_prob=self_prob / total, next_prob=next_prob / total)
        S = binio.read_u32(f)
        D = binio.read_u32(f)
        if S != tied_map.n_states:
            raise FormatError(f"{path}: state count {S} disagrees with tied map")
        weights, means, variances = [], [], []
        for _ in range(S):
            M = binio.read_u32(f)
            w = binio.read_array(f, (M,), "<f4").astype(np.float64)
            weights.append(w / w.sum())
            means.append(binio.read_array(f, (M, D), "<f4").astype(np.float64))
            variances.append(binio.read_array(f, (M, D), "<f4").astype(np.float64))
    return AcousticModel(
        phone_set=phone_set,
        tied_map=tied_map,
        topology=topology,
        emission=GmmEmission(weights, means, variances),
    )


def save_alignment(ali: Alignment, path) -> None:
    with open(path, "wb") as f:
        binio.write_header(f, ALIGN_MAGIC, ALIGN_VERSION)
        binio.write_u32(f, ali.n_frames)
        for tid, c in zip(ali.tied, ali.center):
            binio.write_u32(f, int(tid))
            binio.write_u16(f, int(c))


def load_alignment(path, utterance_id=None) -> Alignment:
    path = Path(path)
    if not path.exists():
        raise MissingArtifactError(f"alignment not found: {path} (run `dtekit align`)")
    with open(path, "rb") as f:
        binio.read_header(f, ALIGN_MAGIC, ALIGN_VERSION)
        T = binio.read_u32(f)
        tied = np.empty(T, dtype=np.int32)
        center = np.empty(T, dtype=np.int32)
        for t in range(T):
            tied[t] = binio.read_u32(f)
            center[t] = binio.read_u16(f)
    return Alignment(
        utterance_id=utterance_id or path.stem,
        tied=tied,
        center=center,
    )
