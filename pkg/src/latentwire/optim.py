"""Parameter update rules: rmsprop, adam, and SGD with momentum."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeMismatchError

ALGORITHMS = ("rmsprop", "adam", "sgd-momentum")

# chosen defaults; the source material names the algorithms but no rates
_DEFAULTS = {
    "rmsprop": {"lr": 1e-3, "rho": 0.9, "eps": 1e-7},
    "adam": {"lr": 1e-3, "beta1": 0.9, "beta2": 0.999, "eps": 1e-8},
    "sgd-momentum": {"lr": 1e-3, "momentum": 0.9},
}


@dataclass
class OptimizerState:
    algorithm: str
    hyper: dict
    step: int = 0
    slots: list = field(default_factory=list)

    def _ensure_slots(self, params):
        if self.slots:
            if len(self.slots) != len(params):
                raise ShapeMismatchError(
                    f"optimizer tracks {len(self.slots)} tensors, got {len(params)}"
                )
            for slot, p in zip(self.slots, params):
                for acc in slot.values():
                    if acc.shape != p.shape:
                        raise ShapeMismatchError(
                            f"accumulator {acc.shape} vs parameter {p.shape}"
                        )
            return
        for p in params:
            if self.algorithm == "rmsprop":
                self.slots.append({"v": np.zeros_like(p)})
            elif self.algorithm == "adam":
                self.slots.append({"m": np.zeros_like(p), "v": np.zeros_like(p)})
            else:
                self.slots.append({"u": np.zeros_like(p)})


def make_optimizer(algorithm, **overrides):
    if algorithm not in ALGORITHMS:
        raise ValueError(f"unknown optimizer {algorithm!r}")
    hyper = dict(_DEFAULTS[algorithm])
    for k, v in overrides.items():
        if v is None:
            continue
        if k not in hyper:
            raise ValueError(f"{algorithm} has no hyperparameter {k!r}")
        hyper[k] = float(v)
    return OptimizerState(algorithm=algorithm, hyper=hyper)


def optimizer_step(state, params, grads):
    """Apply one update step in place; returns the parameter list.

    ``params``/``grads`` may be single arrays or aligned lists of arrays.
    """
    single = isinstance(params, np.ndarray)
    plist = [params] if single else list(params)
    glist = [grads] if single else list(grads)
    if len(plist) != len(glist):
        raise ShapeMismatchError(f"{len(plist)} params vs {len(glist)} grads")
    for p, g in zip(plist, glist):
        if p.shape != g.shape:
            raise ShapeMismatchError(f"param {p.shape} vs grad {g.shape}")
    state._ensure_slots(plist)
    state.step += 1
    h = state.hyper
    if state.algorithm == "rmsprop":
        for p, g, slot in zip(plist, glist, state.slots):
            v = slot["v"]
            v *= h["rho"]
            v += (1.0 - h["rho"]) * g * g
            p -= h["lr"] * g / (np.sqrt(v) + h["eps"])
    elif state.algorithm == "adam":
        t = state.step
        c1 = 1.0 - h["beta1"] ** t
        c2 = 1.0 - h["beta2"] ** t
        for p, g, slot in zip(plist, glist, state.slots):
            m, v = slot["m"], slot["v"]
            m *= h["beta1"]
            m += (1.0 - h["beta1"]) * g
            v *= h["beta2"]
            v += (1.0 - h["beta2"]) * g * g
            p -= h["lr"] * (m / c1) / (np.sqrt(v / c2) + h["eps"])
    else:  # sgd-momentum
        for p, g, slot in zip(plist, glist, state.slots):
            u = slot["u"]
            u *= h["momentum"]
            u += g
            p -= h["lr"] * u
    return params if single else plist
