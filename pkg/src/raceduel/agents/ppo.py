"""Clipped-surrogate policy-gradient trainer for the numpy policy net.

Gaussian exploration around the deterministic head with a fixed (optionally
annealed) sigma, generalized advantage estimation, and a hand-rolled Adam.
Single-threaded and fully deterministic per seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..curriculum import CurriculumSchedule, environment_at
from .policy import PolicyNet


class TrainDiverged(RuntimeError):
    """The mean reward went non-finite."""


@dataclass(frozen=True)
class PpoConfig:
    iterations: int = 50
    horizon: int = 256
    lr: float = 3e-4
    clip: float = 0.2
    gamma: float = 0.99
    gae_lambda: float = 0.95
    sigma: float = 0.1
    sigma_final: float | None = None
    epochs: int = 4
    minibatch: int = 64
    value_coef: float = 0.5

    def sigma_at(self, iteration: int) -> float:
        if self.sigma_final is None or self.iterations <= 1:
            return self.sigma
        frac = iteration / (self.iterations - 1)
        return self.sigma + frac * (self.sigma_final - self.sigma)


class Adam:
    def __init__(self, n: int, lr: float, b1=0.9, b2=0.999, eps=1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, b1, b2, eps
        self.m = np.zeros(n)
        self.v = np.zeros(n)
        self.t = 0

    def update(self, params: np.ndarray, grad: np.ndarray) -> np.ndarray:
        self.t += 1
        self.m = self.b1 * self.m + (1 - self.b1) * grad
        self.v = self.b2 * self.v + (1 - self.b2) * grad * grad
        m_hat = self.m / (1 - self.b1**self.t)
        v_hat = self.v / (1 - self.b2**self.t)
        return params - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def gaussian_logp(actions, mu, sigma_vec):
    z = (actions - mu) / sigma_vec
    return -0.5 * np.sum(z * z, axis=1) - np.sum(np.log(sigma_vec)) - (
        mu.shape[1] / 2 * math.log(2 * math.pi)
    )


def gae(rewards, values, dones, last_value, gamma, lam):
    n = len(rewards)
    adv = np.zeros(n)
    running = 0.0
    for t in range(n - 1, -1, -1):
        next_v = last_value if t == n - 1 else values[t + 1]
        non_terminal = 0.0 if dones[t] else 1.0
        delta = rewards[t] + gamma * next_v * non_terminal - values[t]
        running = delta + gamma * lam * non_terminal * running
        adv[t] = running
    return adv, adv + values


def clipped_policy_grad_mu(actions, mu, logp_old, adv, sigma_vec, clip):
    """d(policy loss)/d(mu) for the clipped surrogate, per sample.

    Samples whose ratio sits outside the clip band with the advantage
    pushing further outside contribute exactly zero gradient.
    """
    logp_new = gaussian_logp(actions, mu, sigma_vec)
    ratio = np.exp(logp_new - logp_old)
    blocked = ((adv > 0) & (ratio > 1 + clip)) | (
        (adv < 0) & (ratio < 1 - clip)
    )
    active = (~blocked).astype(float)
    dlogp_dmu = (actions - mu) / (sigma_vec**2)
    coeff = -(adv * ratio * active) / len(adv)
    return coeff[:, None] * dlogp_dmu, ratio


def train(
    env_factory,
    net: PolicyNet,
    config: PpoConfig = PpoConfig(),
    seed: int = 0,
    schedule: CurriculumSchedule | None = None,
    use_curriculum: bool = True,
    use_cbf: bool = True,
):
    """Runs the training loop; returns (net, trace rows).

    Each trace row: iteration, mean_reward, t_s, lambda1, lambda2,
    wall_contacts. Environment physics refresh once per rollout through
    environment_at(global_step) when a schedule is given.
    """
    rng = np.random.default_rng(seed)
    env = env_factory()
    if env.obs_size != net.sizes[0]:
        raise ValueError(
            f"env obs size {env.obs_size} != net input {net.sizes[0]}"
        )
    adam = Adam(net.n_params, config.lr)
    trace = []
    global_step = 0
    obs = env.reset(seed)
    episode_seed = seed

    for iteration in range(config.iterations):
        t_s, lam1, lam2 = 1.0, 0.0, 0.0
        if schedule is not None and hasattr(env, "apply_physics"):
            t = global_step if use_curriculum else schedule.t_end
            phys = environment_at(t, schedule)
            if not use_cbf:
                phys = type(phys)(front=phys.front, rear=phys.rear,
                                  lambda1=0.0, lambda2=0.0, t_s=phys.t_s)
            env.apply_physics(phys)
            t_s, lam1, lam2 = phys.t_s, phys.lambda1, phys.lambda2

        sigma = config.sigma_at(iteration)
        sigma_vec = np.array([sigma, sigma * net.delta_max])
        obs_buf = np.empty((config.horizon, net.sizes[0]))
        act_buf = np.empty((config.horizon, 2))
        rew_buf = np.empty(config.horizon)
        val_buf = np.empty(config.horizon)
        logp_buf = np.empty(config.horizon)
        done_buf = np.zeros(config.horizon, dtype=bool)
        wall_contacts = 0

        for t in range(config.horizon):
            mu, v, _ = net.forward_batch(obs)
            action = mu[0] + sigma_vec * rng.standard_normal(2)
            obs_buf[t] = obs
            act_buf[t] = action
            val_buf[t] = v[0]
            logp_buf[t] = gaussian_logp(action[None, :], mu, sigma_vec)[0]
            obs, reward, done, info = env.step(action)
            rew_buf[t] = reward
            done_buf[t] = done
            wall_contacts += int(info.get("wall_contact", False))
            global_step += 1
            if done:
                episode_seed += 1
                obs = env.reset(episode_seed)

        mean_reward = float(np.mean(rew_buf))
        if not math.isfinite(mean_reward):
            raise TrainDiverged(f"mean reward {mean_reward} at it {iteration}")

        _, last_v, _ = net.forward_batch(obs)
        adv, returns = gae(rew_buf, val_buf, done_buf, float(last_v[0]),
                           config.gamma, config.gae_lambda)
        adv_std = float(np.std(adv))
        if adv_std > 1e-8:
            adv_n = (adv - float(np.mean(adv))) / adv_std
        else:
            adv_n = adv - float(np.mean(adv))

        idx_all = np.arange(config.horizon)
        for _ in range(config.epochs):
            rng.shuffle(idx_all)
            for start in range(0, config.horizon, config.minibatch):
                mb = idx_all[start:start + config.minibatch]
                mu, v, cache = net.forward_batch(obs_buf[mb])
                dmu, _ = clipped_policy_grad_mu(
                    act_buf[mb], mu, logp_buf[mb], adv_n[mb], sigma_vec,
                    config.clip,
                )
                dv = 2.0 * config.value_coef * (v - returns[mb]) / len(mb)
                grad = net.backward(cache, dmu, dv)
                net.set_params(adam.update(net.get_params(), grad))

        trace.append(
            {
                "iteration": iteration,
                "mean_reward": mean_reward,
                "t_s": t_s,
                "lambda1": lam1,
                "lambda2": lam2,
                "wall_contacts": wall_contacts,
            }
        )
    return net, trace
