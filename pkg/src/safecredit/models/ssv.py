"""Recurrent safety credit assignment.

A gated cell folds each (state, action) pair into a fixed-width summary
vector h; a decoder compares consecutive summaries and emits a per-step log
safety score that is non-positive by construction, so the running
safe-probability of a growing segment can only decay. The product of the
per-step factors (sum of log scores) is the segment's probability of being
safe, which is what the trajectory-level labels supervise.

Two decoder heads: a deterministic one (a single log score per step) and a
distributional one that parameterizes a negative lognormal over the score,
giving closed-form uncertainty for selective labeling.
"""

from __future__ import annotations

import numpy as np

from safecredit import nn
from safecredit.errors import ConfigError, UsageError
from safecredit.numerics import (
    Tensor,
    add,
    clip,
    concat,
    exp,
    load_checkpoint,
    mul,
    neg,
    save_checkpoint,
    sigmoid,
    softplus,
    sub,
    tanh,
)

# Pre-exp clamp on mu + sigma*eps keeps sampled scores finite without
# touching the achievable range that matters (exp(30) ~ 1e13 per step).
SCORE_EXP_CLAMP = 30.0
SIGMA_FLOOR = 1e-6

DETERMINISTIC = "deterministic"
DISTRIBUTIONAL = "distributional"


class SsvModel:
    def __init__(self, obs_dim: int, act_dim: int, hidden_dim: int = 64,
                 head: str = DETERMINISTIC, decoder_hidden: int = 64,
                 decoder_input: str = "concat", seed: int = 0):
        if head not in (DETERMINISTIC, DISTRIBUTIONAL):
            raise ConfigError(f"unknown head mode '{head}'")
        if decoder_input not in ("concat", "diff"):
            raise ConfigError(f"unknown decoder input mode '{decoder_input}'")
        self.obs_dim = obs_dim
        self.act_dim = act_dim
        self.hidden_dim = hidden_dim
        self.decoder_hidden = decoder_hidden
        self.head = head
        self.decoder_input = decoder_input
        rng = np.random.default_rng(seed)
        in_dim = obs_dim + act_dim + hidden_dim
        self.gate = nn.Linear(rng, in_dim, hidden_dim, name="cell.gate")
        self.cand = nn.Linear(rng, in_dim, hidden_dim, name="cell.cand")
        dec_in = 2 * hidden_dim if decoder_input == "concat" else hidden_dim
        self.dec_body = nn.Linear(rng, dec_in, decoder_hidden, name="dec.body")
        self.dec_score = nn.Linear(rng, decoder_hidden, 1, name="dec.score")
        self.dec_sigma = nn.Linear(rng, decoder_hidden, 1, name="dec.sigma")
        # Start optimistic: per-step scores near zero so long segments do not
        # open below the BCE probability clamp, where gradients vanish.
        self.dec_score.bias.data = np.array([-3.0])
        self.dec_sigma.bias.data = np.array([-2.0])

    def parameters(self):
        return (self.gate.parameters() + self.cand.parameters()
                + self.dec_body.parameters() + self.dec_score.parameters()
                + self.dec_sigma.parameters())

    def initial_summary(self, batch: int | None = None) -> np.ndarray:
        if batch is None:
            return np.zeros(self.hidden_dim)
        return np.zeros((batch, self.hidden_dim))

    # ---- fast (frozen-snapshot) paths -----------------------------------

    def step(self, h: np.ndarray, obs: np.ndarray, action: np.ndarray) -> np.ndarray:
        """Advance the summary vector one step; h' = (1-z) h + z cand."""
        x = np.concatenate([np.atleast_1d(obs), np.atleast_1d(action), h], axis=-1)
        if x.shape[-1] != self.obs_dim + self.act_dim + self.hidden_dim:
            raise UsageError(
                f"input dim {x.shape[-1]} does not match model configuration")
        batched = x if x.ndim == 2 else x[None, :]
        z = _np_sigmoid(self.gate.fast(batched))
        cand = np.tanh(self.cand.fast(batched))
        h2 = h + z * (cand - h)  # same expression as the graph path, bit-for-bit
        return h2[0] if x.ndim == 1 else h2

    def _decoder_features(self, h_prev: np.ndarray, h_next: np.ndarray) -> np.ndarray:
        if self.decoder_input == "concat":
            return np.concatenate([h_prev, h_next], axis=-1)
        return h_next - h_prev

    def decode(self, h_prev: np.ndarray, h_next: np.ndarray) -> float:
        """Deterministic head: the per-step log safety score, always <= 0."""
        if self.head != DETERMINISTIC:
            raise UsageError("decode() needs the deterministic head")
        feats = self._decoder_features(h_prev, h_next)
        mid = np.tanh(self.dec_body.fast(np.atleast_2d(feats)))
        raw = self.dec_score.fast(mid)
        out = -_np_softplus(raw)[..., 0]
        return float(out[0]) if feats.ndim == 1 else out

    def decode_dist(self, h_prev: np.ndarray, h_next: np.ndarray):
        """Distributional head: (mu, sigma) of the negative lognormal score."""
        if self.head != DISTRIBUTIONAL:
            raise UsageError("decode_dist() needs the distributional head")
        feats = self._decoder_features(h_prev, h_next)
        mid = np.tanh(self.dec_body.fast(np.atleast_2d(feats)))
        mu = self.dec_score.fast(mid)[..., 0]
        sigma = _np_softplus(self.dec_sigma.fast(mid))[..., 0] + SIGMA_FLOOR
        if feats.ndim == 1:
            return float(mu[0]), float(sigma[0])
        return mu, sigma

    def score_sequence(self, observations: np.ndarray, actions: np.ndarray):
        """Per-step log scores for one segment, summary reset at its start.

        For the distributional head this returns the distribution mean
        -exp(mu + sigma^2/2) per step (the low-variance choice used for
        pseudo-costs) rather than a sample.
        """
        observations = np.atleast_2d(observations)
        actions = np.atleast_2d(actions)
        if len(observations) < 1:
            raise UsageError("cannot score an empty segment")
        h = self.initial_summary()
        scores = np.empty(len(observations))
        for t in range(len(observations)):
            h_next = self.step(h, observations[t], actions[t])
            if self.head == DETERMINISTIC:
                scores[t] = self.decode(h, h_next)
            else:
                mu, sigma = self.decode_dist(h, h_next)
                scores[t] = -np.exp(min(mu + 0.5 * sigma * sigma, SCORE_EXP_CLAMP))
            h = h_next
        return scores

    def traj_log_prob_safe(self, trajectory) -> float:
        """log P(segment safe) = sum of per-step log scores."""
        return float(self.score_sequence(trajectory.observations,
                                         trajectory.actions).sum())

    def step_moments(self, observations: np.ndarray, actions: np.ndarray):
        """Per-step (mu, sigma) along a segment (distributional head only)."""
        if self.head != DISTRIBUTIONAL:
            raise UsageError("step_moments() needs the distributional head")
        observations = np.atleast_2d(observations)
        actions = np.atleast_2d(actions)
        h = self.initial_summary()
        mus = np.empty(len(observations))
        sigmas = np.empty(len(observations))
        for t in range(len(observations)):
            h_next = self.step(h, observations[t], actions[t])
            mus[t], sigmas[t] = self.decode_dist(h, h_next)
            h = h_next
        return mus, sigmas

    # ---- graph (training) paths -----------------------------------------

    def _step_graph(self, h: Tensor, x: Tensor) -> Tensor:
        inputs = concat([x, h], axis=1)
        z = sigmoid(self.gate(inputs))
        cand = tanh(self.cand(inputs))
        return add(h, mul(z, sub(cand, h)))

    def _decode_features_graph(self, h_prev: Tensor, h_next: Tensor) -> Tensor:
        if self.decoder_input == "concat":
            return concat([h_prev, h_next], axis=1)
        return sub(h_next, h_prev)

    def sequence_scores_graph(self, obs_batch: np.ndarray, act_batch: np.ndarray,
                              sample: bool = False,
                              rng: np.random.Generator | None = None):
        """Per-step (B, 1) score tensors for a batch of equal-length segments.

        ``sample=True`` draws reparameterized scores from the distributional
        head; otherwise the deterministic head's score (or the distribution
        mean) is used.
        """
        batch, length, _ = obs_batch.shape
        if sample and self.head != DISTRIBUTIONAL:
            raise UsageError("sampling requires the distributional head")
        if sample and rng is None:
            raise UsageError("sampling requires an explicit rng")
        h = Tensor(self.initial_summary(batch))
        steps = []
        for t in range(length):
            x = Tensor(np.concatenate([obs_batch[:, t], act_batch[:, t]], axis=1))
            h_next = self._step_graph(h, x)
            feats = self._decode_features_graph(h, h_next)
            mid = tanh(self.dec_body(feats))
            if self.head == DETERMINISTIC:
                score = neg(softplus(self.dec_score(mid)))
            else:
                mu = self.dec_score(mid)
                sigma = add(softplus(self.dec_sigma(mid)), Tensor(SIGMA_FLOOR))
                if sample:
                    eps = Tensor(rng.standard_normal((batch, 1)))
                    arg = add(mu, mul(sigma, eps))
                else:
                    arg = add(mu, mul(Tensor(0.5), mul(sigma, sigma)))
                score = neg(exp(clip(arg, hi=SCORE_EXP_CLAMP)))
            steps.append(score)
            h = h_next
        return steps

    def total_log_prob_graph(self, obs_batch, act_batch, sample=False, rng=None):
        steps = self.sequence_scores_graph(obs_batch, act_batch, sample, rng)
        total = steps[0]
        for score in steps[1:]:
            total = add(total, score)
        return total

    def clone(self) -> "SsvModel":
        """Independent copy with identical parameters."""
        twin = SsvModel(self.obs_dim, self.act_dim, hidden_dim=self.hidden_dim,
                        head=self.head, decoder_hidden=self.decoder_hidden,
                        decoder_input=self.decoder_input)
        for mine, theirs in zip(self.parameters(), twin.parameters()):
            theirs.data = mine.data.copy()
        return twin

    # ---- persistence ------------------------------------------------------

    def save(self, path) -> None:
        save_checkpoint(path, nn.parameters_to_arrays(self.parameters()), meta={
            "kind": "ssv",
            "head": self.head,
            "hidden_dim": self.hidden_dim,
            "decoder_hidden": self.decoder_hidden,
            "obs_dim": self.obs_dim,
            "act_dim": self.act_dim,
            "decoder_input": self.decoder_input,
        })

    @classmethod
    def load(cls, path) -> "SsvModel":
        arrays, meta = load_checkpoint(path)
        if meta.get("kind") != "ssv":
            raise ConfigError(f"checkpoint is not an ssv model: {meta}")
        model = cls(obs_dim=meta["obs_dim"], act_dim=meta["act_dim"],
                    hidden_dim=meta["hidden_dim"], head=meta["head"],
                    decoder_hidden=meta["decoder_hidden"],
                    decoder_input=meta["decoder_input"])
        nn.arrays_to_parameters(arrays, model.parameters())
        return model


def _np_sigmoid(x):
    return np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))),
                    np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))


def _np_softplus(x):
    return np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))


def cumulative_log_safety(scores: np.ndarray) -> np.ndarray:
    """Running log P(prefix safe) from per-step log scores.

    Scores must be non-positive, so the cumulative sequence is non-increasing
    and stays in (-inf, 0].
    """
    scores = np.asarray(scores, dtype=np.float64)
    if scores.size < 1:
        raise UsageError("empty score sequence")
    if np.any(scores > 0.0):
        raise UsageError("per-step log scores must be <= 0")
    return np.cumsum(scores)


def neg_lognormal_moments(mu, sigma):
    """Mean and variance of -Lognormal(mu, sigma): closed forms.

    E = -exp(mu + sigma^2/2); Var = (exp(sigma^2) - 1) exp(2 mu + sigma^2).
    """
    mu = np.asarray(mu, dtype=np.float64)
    sigma = np.asarray(sigma, dtype=np.float64)
    s2 = sigma * sigma
    mean = -np.exp(mu + 0.5 * s2)
    var = np.expm1(s2) * np.exp(2.0 * mu + s2)
    return mean, var
