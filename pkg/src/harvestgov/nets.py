"""Dense policy/value networks with hand-written exact backpropagation.

The architecture is fixed — two tanh hidden layers feeding categorical
action heads and a scalar value head — so reverse-mode gradients can be
written out explicitly and checked against central finite differences to
tight tolerances in double precision. No autodiff framework is involved.

A network may carry several categorical heads (the tax designer samples one
rate per bracket); the log-probability of a joint action is the sum over
heads. Followers use a single head over the movement actions.
"""

from __future__ import annotations

import numpy as np

PARAM_KEYS = ("w1", "b1", "w2", "b2", "w_pi", "b_pi", "w_v", "b_v")


def _softmax_rows(logits: np.ndarray):
    z = logits - logits.max(axis=1, keepdims=True)
    ez = np.exp(z)
    denom = ez.sum(axis=1, keepdims=True)
    return ez / denom, z - np.log(denom)


class PolicyNetwork:
    """Two-hidden-layer tanh MLP with categorical heads and a value head."""

    def __init__(
        self,
        input_dim: int,
        head_sizes,
        hidden_width: int = 64,
        rng: np.random.Generator | None = None,
    ):
        if input_dim < 1 or hidden_width < 1:
            raise ValueError("input_dim and hidden_width must be >= 1")
        heads = tuple(int(h) for h in head_sizes)
        if not heads or any(h < 1 for h in heads):
            raise ValueError("every head needs at least one action")
        self.input_dim = input_dim
        self.hidden_width = hidden_width
        self.head_sizes = heads
        self.n_logits = sum(heads)
        edges = np.cumsum((0,) + heads)
        self._head_slices = [slice(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:])]
        rng = rng if rng is not None else np.random.default_rng(0)
        # scaled-Gaussian init; small policy head keeps the initial policy
        # near uniform
        self.params: dict[str, np.ndarray] = {
            "w1": rng.normal(0.0, 1.0 / np.sqrt(input_dim), (input_dim, hidden_width)),
            "b1": np.zeros(hidden_width),
            "w2": rng.normal(0.0, 1.0 / np.sqrt(hidden_width), (hidden_width, hidden_width)),
            "b2": np.zeros(hidden_width),
            "w_pi": 0.01 * rng.normal(0.0, 1.0 / np.sqrt(hidden_width), (hidden_width, self.n_logits)),
            "b_pi": np.zeros(self.n_logits),
            "w_v": rng.normal(0.0, 1.0 / np.sqrt(hidden_width), (hidden_width, 1)),
            "b_v": np.zeros(1),
        }

    @property
    def n_params(self) -> int:
        return sum(p.size for p in self.params.values())

    def _trunk(self, x: np.ndarray):
        if x.ndim != 2 or x.shape[1] != self.input_dim:
            raise ValueError(
                f"expected observation batch of width {self.input_dim}, got {x.shape}"
            )
        p = self.params
        h1 = np.tanh(x @ p["w1"] + p["b1"])
        h2 = np.tanh(h1 @ p["w2"] + p["b2"])
        return h1, h2

    def forward(self, x: np.ndarray):
        """Action distribution (one probability matrix per head) and values."""
        _, h2 = self._trunk(x)
        p = self.params
        logits = h2 @ p["w_pi"] + p["b_pi"]
        values = (h2 @ p["w_v"] + p["b_v"]).ravel()
        probs = [_softmax_rows(logits[:, s])[0] for s in self._head_slices]
        return probs, values

    def sample(self, x: np.ndarray, rng: np.random.Generator):
        """Sample one action per head; returns (actions, logp, values)."""
        probs, values = self.forward(x)
        n = x.shape[0]
        actions = np.empty((n, len(self.head_sizes)), dtype=np.int64)
        logp = np.zeros(n)
        for k, pk in enumerate(probs):
            cdf = np.cumsum(pk, axis=1)
            u = rng.random(n)
            a = np.minimum((cdf < u[:, None]).sum(axis=1), pk.shape[1] - 1)
            actions[:, k] = a
            logp += np.log(np.maximum(pk[np.arange(n), a], 1e-300))
        return actions, logp, values

    def log_prob(self, x: np.ndarray, actions: np.ndarray):
        """Joint log-probability of the given per-head actions, plus values."""
        _, h2 = self._trunk(x)
        p = self.params
        logits = h2 @ p["w_pi"] + p["b_pi"]
        values = (h2 @ p["w_v"] + p["b_v"]).ravel()
        acts = np.asarray(actions, dtype=np.int64).reshape(x.shape[0], len(self.head_sizes))
        n = x.shape[0]
        logp = np.zeros(n)
        for k, s in enumerate(self._head_slices):
            _, logfull = _softmax_rows(logits[:, s])
            logp += logfull[np.arange(n), acts[:, k]]
        return logp, values

    def grad_log_prob(self, x: np.ndarray, actions: np.ndarray):
        """Gradient of mean log-probability over the batch, by parameter.

        Used by the gradient-check tests at the distribution level; the
        training loss path lives in ``loss_and_grads``.
        """
        n = x.shape[0]
        acts = np.asarray(actions, dtype=np.int64).reshape(n, len(self.head_sizes))
        h1, h2, logits, values = self._forward_full(x)
        dlogits = np.zeros_like(logits)
        for k, s in enumerate(self._head_slices):
            probs, _ = _softmax_rows(logits[:, s])
            onehot = np.zeros_like(probs)
            onehot[np.arange(n), acts[:, k]] = 1.0
            dlogits[:, s] = (onehot - probs) / n
        grads = self._backward(x, h1, h2, dlogits, np.zeros(n))
        logp, _ = self.log_prob(x, acts)
        return float(logp.mean()), grads

    def _forward_full(self, x):
        h1, h2 = self._trunk(x)
        p = self.params
        logits = h2 @ p["w_pi"] + p["b_pi"]
        values = (h2 @ p["w_v"] + p["b_v"]).ravel()
        return h1, h2, logits, values

    def _backward(self, x, h1, h2, dlogits, dvalues):
        """Reverse-mode accumulation from head gradients to parameters."""
        p = self.params
        grads: dict[str, np.ndarray] = {}
        grads["w_pi"] = h2.T @ dlogits
        grads["b_pi"] = dlogits.sum(axis=0)
        dv = dvalues[:, None]
        grads["w_v"] = h2.T @ dv
        grads["b_v"] = dv.sum(axis=0)
        dh2 = dlogits @ p["w_pi"].T + dv @ p["w_v"].T
        dz2 = dh2 * (1.0 - h2 * h2)
        grads["w2"] = h1.T @ dz2
        grads["b2"] = dz2.sum(axis=0)
        dh1 = dz2 @ p["w2"].T
        dz1 = dh1 * (1.0 - h1 * h1)
        grads["w1"] = x.T @ dz1
        grads["b1"] = dz1.sum(axis=0)
        return grads

    def loss_and_grads(
        self,
        obs: np.ndarray,
        actions: np.ndarray,
        logp_old: np.ndarray,
        advantages: np.ndarray,
        returns: np.ndarray,
        clip: float,
        value_coef: float,
        entropy_coef: float,
    ):
        """Clipped-surrogate loss with value and entropy terms, plus its
        exact parameter gradients and training diagnostics.

        L = -mean(min(r A, clip(r) A)) + value_coef * mean((v - ret)^2)
            - entropy_coef * mean(H), with r the probability ratio against
        ``logp_old`` and H the joint categorical entropy.
        """
        n = obs.shape[0]
        if n == 0:
            raise ValueError("empty batch")
        acts = np.asarray(actions, dtype=np.int64).reshape(n, len(self.head_sizes))
        h1, h2, logits, values = self._forward_full(obs)

        probs_by_head = []
        logp = np.zeros(n)
        entropy = np.zeros(n)
        for k, s in enumerate(self._head_slices):
            probs, logfull = _softmax_rows(logits[:, s])
            probs_by_head.append((probs, logfull))
            logp += logfull[np.arange(n), acts[:, k]]
            entropy += -(probs * logfull).sum(axis=1)

        ratio = np.exp(logp - logp_old)
        surr1 = ratio * advantages
        clipped = np.clip(ratio, 1.0 - clip, 1.0 + clip)
        surr2 = clipped * advantages
        use_unclipped = surr1 <= surr2
        policy_loss = -np.minimum(surr1, surr2).mean()
        value_err = values - returns
        value_loss = float((value_err**2).mean())
        entropy_mean = float(entropy.mean())
        loss = policy_loss + value_coef * value_loss - entropy_coef * entropy_mean

        # d(policy_loss)/d(logp): the clipped branch has zero slope wherever
        # it is strictly smaller, so only unclipped samples contribute
        dlogp = np.where(use_unclipped, -(advantages * ratio) / n, 0.0)
        dlogits = np.empty_like(logits)
        for k, s in enumerate(self._head_slices):
            probs, logfull = probs_by_head[k]
            onehot = np.zeros_like(probs)
            onehot[np.arange(n), acts[:, k]] = 1.0
            head_entropy = -(probs * logfull).sum(axis=1, keepdims=True)
            # dH/dz = -p (log p + H): entropy bonus enters with -entropy_coef
            d_entropy = -probs * (logfull + head_entropy)
            dlogits[:, s] = dlogp[:, None] * (onehot - probs) - (entropy_coef / n) * d_entropy
        dvalues = value_coef * 2.0 * value_err / n
        grads = self._backward(obs, h1, h2, dlogits, dvalues)

        diagnostics = {
            "loss": float(loss),
            "policy_loss": float(policy_loss),
            "value_loss": value_loss,
            "entropy": entropy_mean,
            "clip_fraction": float((~use_unclipped).mean()),
            "approx_kl": float((logp_old - logp).mean()),
        }
        return float(loss), grads, diagnostics

    # --- parameter plumbing ---------------------------------------------------

    def get_flat(self) -> np.ndarray:
        return np.concatenate([self.params[k].ravel() for k in PARAM_KEYS])

    def set_flat(self, vec: np.ndarray) -> None:
        pos = 0
        for k in PARAM_KEYS:
            p = self.params[k]
            p[...] = vec[pos : pos + p.size].reshape(p.shape)
            pos += p.size
        if pos != vec.size:
            raise ValueError("flat vector length mismatch")


class Adam:
    """Adam with per-tensor state; learning rate supplied at each step."""

    def __init__(self, params: dict[str, np.ndarray], beta1=0.9, beta2=0.999, eps=1e-8):
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray], lr: float):
        self.t += 1
        b1c = 1.0 - self.beta1**self.t
        b2c = 1.0 - self.beta2**self.t
        for k, g in grads.items():
            m = self.m[k]
            v = self.v[k]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            params[k] -= lr * (m / b1c) / (np.sqrt(v / b2c) + self.eps)
