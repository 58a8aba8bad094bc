"""Phone-loop Viterbi decoding, bigram phone LM, and scoring.

The decode graph is a fully connected phone loop: every phone is its
3-state left-to-right HMM, scored through the tied-state map with
silence context backoff, and phone-to-phone arcs carry
lm_scale * log P(b|a) plus a per-phone insertion penalty.  Recognition
scoring is Levenshtein with unit costs; classification scoring compares
framewise argmax states against forced-alignment truth on non-silence
frames only.
"""

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import binio
from .errors import ConfigError, MissingArtifactError, NumericError
from .hmm import LOG_ZERO, HmmTopology, TiedStateMap

LM_MAGIC = b"DTEB"
LM_VERSION = 1

SCORE_FLOOR = 1e-10


@dataclass
class BigramPhoneLm:
    """Add-alpha smoothed phone bigram: P(b|a) plus start/end distributions."""

    log_table: np.ndarray  # (n, n): log P(b | a)
    log_start: np.ndarray  # (n,): log P(b | sequence start)
    log_end: np.ndarray    # (n,): log P(sequence end | a)
    alpha: float

    def __post_init__(self):
        self.log_table = np.asarray(self.log_table, dtype=np.float64)
        self.log_start = np.asarray(self.log_start, dtype=np.float64)
        self.log_end = np.asarray(self.log_end, dtype=np.float64)
        n = self.log_table.shape[0]
        if self.log_table.shape != (n, n) or self.log_start.shape != (n,):
            raise ConfigError("bigram table must be square with matching start/end")
        if not np.all(np.isfinite(self.log_table)):
            raise ConfigError("bigram table contains non-finite entries")

    @property
    def n_phones(self):
        return self.log_table.shape[0]


def train_bigram_lm(sequences, n_phones: int, alpha: float = 1.0) -> BigramPhoneLm:
    """P(b|a) = (count(a,b) + alpha) / (count(a) + alpha * n) over train sequences.

    count(a) is the number of bigrams starting with a.  Start counts use
    the first phone of each sequence; the end distribution is the
    smoothed probability that an occurrence of a phone is sequence-final.
    """
    if not sequences:
        raise ConfigError("cannot train a bigram LM on an empty corpus")
    if alpha <= 0:
        raise ConfigError("smoothing alpha must be positive")
    bigram = np.zeros((n_phones, n_phones))
    start = np.zeros(n_phones)
    final = np.zeros(n_phones)
    occur = np.zeros(n_phones)
    for seq in sequences:
        seq = list(seq)
        if not seq:
            continue
        start[seq[0]] += 1
        final[seq[-1]] += 1
        for p in seq:
            occur[p] += 1
        for a, b in zip(seq[:-1], seq[1:]):
            bigram[a, b] += 1
    row = bigram.sum(axis=1, keepdims=True)
    table = (bigram + alpha) / (row + alpha * n_phones)
    start_p = (start + alpha) / (start.sum() + alpha * n_phones)
    end_p = (final + alpha) / (occur + 2.0 * alpha)
    return BigramPhoneLm(
        log_table=np.log(table),
        log_start=np.log(start_p),
        log_end=np.log(end_p),
        alpha=alpha,
    )


@dataclass
class DecodeParams:
    lm_scale: float = 1.0
    insertion_penalty: float = 0.0
    mode: str = "posterior"  # posterior | posterior-over-prior | gmm
    beam: float = None

    def validate(self):
        if self.lm_scale < 0:
            raise ConfigError("lm_scale must be >= 0")
        if self.mode not in ("posterior", "posterior-over-prior", "gmm"):
            raise ConfigError(f"unknown likelihood mode {self.mode!r}")
        if self.beam is not None and self.beam <= 0:
            raise ConfigError("beam must be positive when set")


@dataclass
class DecodeResult:
    phones: list            # decoded phone ids, silence stripped
    tied_path: np.ndarray   # (T,) tied-state ids
    center_path: np.ndarray # (T,) center-phone ids
    score: float
    acoustic: float = 0.0
    lm: float = 0.0
    penalty: float = 0.0


def scaled_likelihoods(posteriors, mode: str, priors=None) -> np.ndarray:
    """Per-frame log scores for decoding.

    posterior: log y (floored at 1e-10); posterior-over-prior: log y -
    log prior.  GMM scores bypass this function entirely.
    """
    post = np.asarray(posteriors, dtype=np.float64)
    if mode == "posterior":
        return np.log(np.maximum(post, SCORE_FLOOR))
    if mode == "posterior-over-prior":
        if priors is None:
            raise ConfigError("posterior-over-prior mode requires priors")
        priors = np.asarray(priors, dtype=np.float64)
        if priors.shape[0] != post.shape[1]:
            raise ConfigError(
                f"priors length {priors.shape[0]} != states {post.shape[1]}"
            )
        if np.any(priors <= 0):
            raise ConfigError("priors must be strictly positive")
        return np.log(np.maximum(post, SCORE_FLOOR)) - np.log(priors)
    raise ConfigError(f"scaled_likelihoods does not handle mode {mode!r}")


def state_priors(alignments, n_states: int) -> np.ndarray:
    """Smoothed tied-state frequencies from train alignments."""
    counts = np.zeros(n_states)
    for ali in alignments:
        idx, c = np.unique(ali.tied, return_counts=True)
        counts[idx] += c
    return (counts + 1.0) / (counts.sum() + n_states)


def _loop_tied_ids(tied_map: TiedStateMap, silence_id: int) -> np.ndarray:
    """(n_phones, 3) tied ids with silence context on both sides."""
    ids = np.empty((tied_map.n_phones, 3), dtype=np.int64)
    for p in range(tied_map.n_phones):
        for s in range(3):
            ids[p, s] = tied_map.lookup(silence_id, p, silence_id, s)
    return ids


def viterbi_decode(frame_scores, tied_map: TiedStateMap, topology: HmmTopology,
                   lm: BigramPhoneLm, params: DecodeParams,
                   silence_id: int) -> DecodeResult:
    """Exact best path through the phone loop (beam optional).

    The path score is the sum of per-frame acoustic scores, within-phone
    transitions, phone-entry arcs (scaled LM bigram + insertion penalty,
    the start distribution for the first phone), and the scaled LM end
    term.  With no beam the result equals exhaustive enumeration.
    """
    params.validate()
    scores = np.asarray(frame_scores, dtype=np.float64)
    T, S = scores.shape
    if T < 1:
        raise ConfigError("need at least one frame to decode")
    n = tied_map.n_phones
    if lm.n_phones != n:
        raise ConfigError("LM phone count disagrees with the tied map")
    loop_ids = _loop_tied_ids(tied_map, silence_id)
    if loop_ids.max() >= S:
        raise ConfigError(f"frame scores have {S} states, tied map needs {loop_ids.max() + 1}")
    emis = scores[:, loop_ids.reshape(-1)].reshape(T, n, 3)
    if np.any(~np.any(np.isfinite(emis.reshape(T, -1)), axis=1)):
        t = int(np.where(~np.any(np.isfinite(emis.reshape(T, -1)), axis=1))[0][0])
        raise NumericError(f"all decode scores are -inf at frame {t}")
    log_self = topology.log_self()
    log_next = topology.log_next()
    lam = params.lm_scale
    pen = params.insertion_penalty

    dp = np.full((n, 3), LOG_ZERO)
    dp[:, 0] = lam * lm.log_start + pen + emis[0, :, 0]
    back = np.zeros((T, n, 3), dtype=np.int32)  # packed predecessor: phone*4+state, or -1 self
    back[0, :, 0] = -1
    for t in range(1, T):
        exit_score = dp[:, 2] + log_next[:, 2]
        # best predecessor phone for entering each phone b
        cross = exit_score[:, None] + lam * lm.log_table
        best_prev = np.argmax(cross, axis=0)
        enter = cross[best_prev, np.arange(n)] + pen
        new_dp = np.full((n, 3), LOG_ZERO)
        new_back = np.zeros((n, 3), dtype=np.int32)
        stay0 = dp[:, 0] + log_self[:, 0]
        use_enter = enter > stay0
        new_dp[:, 0] = np.where(use_enter, enter, stay0) + emis[t, :, 0]
        new_back[:, 0] = np.where(use_enter, best_prev * 4 + 2, -1)
        for s in (1, 2):
            stay = dp[:, s] + log_self[:, s]
            adv = dp[:, s - 1] + log_next[:, s - 1]
            use_adv = adv > stay
            new_dp[:, s] = np.where(use_adv, adv, stay) + emis[t, :, s]
            new_back[:, s] = np.where(use_adv, -2, -1)  # -2: from state s-1 same phone
        if params.beam is not None:
            peak = new_dp.max()
            new_dp[new_dp < peak - params.beam] = LOG_ZERO
        if not np.any(new_dp > LOG_ZERO / 2):
            raise NumericError(f"decode beam pruned every path at frame {t}")
        dp = new_dp
        back[t] = new_back
    final = dp[:, 2] + lam * lm.log_end
    last_phone = int(np.argmax(final))
    score = float(final[last_phone])
    if score <= LOG_ZERO / 2:
        raise NumericError("no complete decode path")

    # backtrace
    phone_path = np.empty(T, dtype=np.int32)
    state_path = np.empty(T, dtype=np.int32)
    p, s = last_phone, 2
    segments = []  # phone ids, most recent first
    for t in range(T - 1, -1, -1):
        phone_path[t] = p
        state_path[t] = s
        ptr = back[t, p, s]
        if t == 0:
            segments.append(p)
            break
        if ptr == -1:
            continue
        if ptr == -2:
            s -= 1
        else:
            segments.append(p)
            p, s = ptr // 4, 2
    phones_seq = [int(q) for q in reversed(segments)]

    tied_path = loop_ids[phone_path, state_path]
    acoustic = float(np.sum(scores[np.arange(T), tied_path]))
    lm_total = float(lm.log_start[phones_seq[0]]) + float(lm.log_end[phones_seq[-1]])
    prev = phones_seq[0]
    for q in phones_seq[1:]:
        lm_total += float(lm.log_table[prev, q])
        prev = q
    trans = 0.0
    for t in range(1, T):
        if phone_path[t] == phone_path[t - 1] and state_path[t] == state_path[t - 1]:
            trans += log_self[phone_path[t], state_path[t]]
        elif phone_path[t] == phone_path[t - 1] and state_path[t] == state_path[t - 1] + 1:
            trans += log_next[phone_path[t - 1], state_path[t - 1]]
        else:
            trans += log_next[phone_path[t - 1], 2]
    acoustic += trans
    return DecodeResult(
        phones=[q for q in phones_seq if q != silence_id],
        tied_path=tied_path.astype(np.int32),
        center_path=phone_path.astype(np.int32),
        score=score,
        acoustic=acoustic,
        lm=lam * lm_total,
        penalty=pen * len(phones_seq),
    )


@dataclass
class ClassificationScores:
    tied_accuracy: float  # None when no non-silence frames exist
    phone_accuracy: float
    frames: int


def classify_frames(frame_scores, truth_tied, truth_center, center_phone,
                    silence_id: int) -> ClassificationScores:
    """Framewise argmax accuracy over non-silence frames.

    `center_phone` maps tied ids to center phones; predictions map
    through it for the phone accuracy.
    """
    scores = np.asarray(frame_scores, dtype=np.float64)
    truth_tied = np.asarray(truth_tied)
    truth_center = np.asarray(truth_center)
    if scores.shape[0] != truth_tied.shape[0]:
        raise ConfigError(
            f"length mismatch: {scores.shape[0]} frames scored, "
            f"{truth_tied.shape[0]} frames of truth"
        )
    pred_tied = scores.argmax(axis=1)
    keep = truth_center != silence_id
    n = int(np.sum(keep))
    if n == 0:
        return ClassificationScores(tied_accuracy=None, phone_accuracy=None, frames=0)
    tied_acc = float(np.mean(pred_tied[keep] == truth_tied[keep]))
    pred_phone = np.asarray(center_phone)[pred_tied]
    phone_acc = float(np.mean(pred_phone[keep] == truth_center[keep]))
    return ClassificationScores(tied_accuracy=tied_acc, phone_accuracy=phone_acc, frames=n)


def edit_ops(ref, hyp):
    """Levenshtein alignment counts (matches, substitutions, deletions, insertions).

    Unit costs; the backtrace prefers substitution over deletion over
    insertion wherever costs tie, so counts are deterministic.
    """
    ref = list(ref)
    hyp = list(hyp)
    n, m = len(ref), len(hyp)
    width = m + 1
    dist = [0] * ((n + 1) * width)
    for j in range(1, m + 1):
        dist[j] = j
    for i in range(1, n + 1):
        row = i * width
        prev = row - width
        dist[row] = i
        ri = ref[i - 1]
        for j in range(1, m + 1):
            sub = dist[prev + j - 1] + (ri != hyp[j - 1])
            dele = dist[prev + j] + 1
            ins = dist[row + j - 1] + 1
            best = sub
            if dele < best:
                best = dele
            if ins < best:
                best = ins
            dist[row + j] = best
    matches = subs = dels = inss = 0
    i, j = n, m
    while i > 0 or j > 0:
        here = dist[i * width + j]
        if i > 0 and j > 0 and dist[(i - 1) * width + j - 1] + (ref[i - 1] != hyp[j - 1]) == here:
            if ref[i - 1] == hyp[j - 1]:
                matches += 1
            else:
                subs += 1
            i -= 1
            j -= 1
        elif i > 0 and dist[(i - 1) * width + j] + 1 == here:
            dels += 1
            i -= 1
        else:
            inss += 1
            j -= 1
    return matches, subs, dels, inss


@dataclass
class RecognitionScores:
    n_ref: int
    substitutions: int
    deletions: int
    insertions: int

    @property
    def accuracy(self):
        """(N - S - D - I) / N; negative when insertions dominate."""
        if self.n_ref == 0:
            return None
        return (self.n_ref - self.substitutions - self.deletions
                - self.insertions) / self.n_ref

    @property
    def correctness(self):
        """(N - S - D) / N, insertion-blind variant."""
        if self.n_ref == 0:
            return None
        return (self.n_ref - self.substitutions - self.deletions) / self.n_ref


def recognition_score(refs: dict, hyps: dict) -> RecognitionScores:
    """Corpus-level S/D/I totals over utterances paired by id.

    Both sides must already have silence stripped.
    """
    if set(refs.keys()) != set(hyps.keys()):
        missing = set(refs.keys()) ^ set(hyps.keys())
        raise ConfigError(f"unmatched utterance ids: {sorted(missing)[:5]}")
    total_n = total_s = total_d = total_i = 0
    for utt_id in sorted(refs.keys()):
        _, s, d, i = edit_ops(refs[utt_id], hyps[utt_id])
        total_n += len(list(refs[utt_id]))
        total_s += s
        total_d += d
        total_i += i
    return RecognitionScores(
        n_ref=total_n, substitutions=total_s, deletions=total_d, insertions=total_i
    )


def tune_decode_params(dev_scores: dict, refs: dict, tied_map: TiedStateMap,
                       topology: HmmTopology, lm: BigramPhoneLm, silence_id: int,
                       lm_scales, penalties, mode: str):
    """Exhaustive grid search maximizing dev recognition accuracy.

    Ties break toward the smaller lm_scale, then the smaller |penalty|.
    Returns (DecodeParams, grid rows (lm_scale, penalty, accuracy)).
    """
    lm_scales = list(lm_scales)
    penalties = list(penalties)
    if not lm_scales or not penalties or not dev_scores:
        raise ConfigError("tuning needs a non-empty dev set and grid")
    grid = []
    best = None
    best_key = None
    for scale in lm_scales:
        for pen in penalties:
            params = DecodeParams(lm_scale=scale, insertion_penalty=pen, mode=mode)
            hyps = {}
            for utt_id, scores in dev_scores.items():
                result = viterbi_decode(scores, tied_map, topology, lm, params, silence_id)
                hyps[utt_id] = result.phones
            acc = recognition_score(refs, hyps).accuracy
            grid.append((scale, pen, acc))
            key = (-acc, scale, abs(pen))
            if best_key is None or key < best_key:
                best_key = key
                best = params
    return best, grid


def save_lm(lm: BigramPhoneLm, path) -> None:
    with open(path, "wb") as f:
        binio.write_header(f, LM_MAGIC, LM_VERSION)
        binio.write_u32(f, lm.n_phones)
        binio.write_f32(f, lm.alpha)
        binio.write_array(f, lm.log_table, "<f4")
        binio.write_array(f, lm.log_start, "<f4")
        binio.write_array(f, lm.log_end, "<f4")


def load_lm(path) -> BigramPhoneLm:
    path = Path(path)
    if not path.exists():
        raise MissingArtifactError(f"LM not found: {path} (run `dtekit train-gmm`)")
    with open(path, "rb") as f:
        binio.read_header(f, LM_MAGIC, LM_VERSION)
        n = binio.read_u32(f)
        alpha = binio.read_f32(f)
        table = binio.read_array(f, (n, n), "<f4").astype(np.float64)
        start = binio.read_array(f, (n,), "<f4").astype(np.float64)
        end = binio.read_array(f, (n,), "<f4").astype(np.float64)
    return BigramPhoneLm(log_table=table, log_start=start, log_end=end, alpha=alpha)


def write_hypotheses(hyps: dict, phone_set, path) -> None:
    """`<utterance id>\\t<phone> <phone> ...` per line, ids sorted."""
    lines = []
    for utt_id in sorted(hyps.keys()):
        symbols = " ".join(phone_set.phones[p] for p in hyps[utt_id])
        lines.append(f"{utt_id}\t{symbols}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_hypotheses(path, phone_set) -> dict:
    path = Path(path)
    if not path.exists():
        raise MissingArtifactError(f"hypothesis file not found: {path} (run `dtekit decode`)")
    hyps = {}
    for line in path.read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        utt_id, _, rest = line.partition("\t")
        hyps[utt_id] = [phone_set.index(s) for s in rest.split()]
    return hyps
