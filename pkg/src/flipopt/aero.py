"""Aerodynamic force models: simplified drag-only and an MLP surrogate.

Two interchangeable models produce body-external forces and the pitching
moment about the cg from the vehicle state:

* :class:`SimplifiedAero` applies a fixed drag coefficient along the
  velocity vector with a fixed center of pressure (no lift).
* :class:`MlpSurrogate` maps (sin alpha, cos alpha) through a small tanh
  network to (C_L, C_D, C_M) and assembles forces in wind axes.

The surrogate is trained against an analytic flat-plate style coefficient
model (:func:`standin_coeffs`), sampled on a uniform angle-of-attack grid.
Both models expose exact state Jacobians for the gradient engines.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .dynamics import (
    IX_TH,
    IX_U,
    IX_V,
    SPEED_FLOOR,
    AeroForces,
    wind_axes,
)

_ZERO_JAC = (np.zeros(3), np.zeros((3, 2)), np.zeros(3))


class TrainingError(RuntimeError):
    """Raised when surrogate training produces a non-finite loss."""

    def __init__(self, msg: str, iteration: int):
        super().__init__(msg)
        self.iteration = iteration


# ---------------------------------------------------------------------------
# Disabled aero (free-flight tests, --no-aero simulation)
# ---------------------------------------------------------------------------

class NoAero:
    """Aero model that contributes nothing; used by oracles and --no-aero."""

    kind = "none"

    def forces(self, state, scn) -> AeroForces:
        return AeroForces(0.0, 0.0, 0.0)

    def forces_jac(self, state, scn):
        return _ZERO_JAC


# ---------------------------------------------------------------------------
# Simplified drag-only model
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SimplifiedAero:
    """Fixed drag coefficient, no lift, fixed center of pressure.

    Force: F_A = -1/2 rho C_D |v| v S_ref.  Moment about the cg comes from
    applying that force at the center of pressure:
    M_A = (l_cp - l_cg) * 1/2 rho C_D S_ref |v| * (v_y cos th - v_x sin th).
    """

    C_D: float
    l_cp_frac: float = 0.55

    kind = "simplified"

    def __post_init__(self):
        if self.C_D < 0.0:
            raise ValueError("C_D must be >= 0")
        if not 0.0 < self.l_cp_frac < 1.0:
            raise ValueError("l_cp_frac must be in (0, 1)")

    def forces(self, state, scn) -> AeroForces:
        if state.dtype == np.float64:
            u = float(state[IX_U])
            v = float(state[IX_V])
            speed = math.hypot(u, v)
            if speed < SPEED_FLOOR:
                return AeroForces(0.0, 0.0, 0.0)
            c = scn.q_coef * self.C_D
            th = float(state[IX_TH])
            lever = self.l_cp_frac - scn.l_cg_frac
            return AeroForces(
                -c * speed * u,
                -c * speed * v,
                lever * c * speed * (v * math.cos(th) - u * math.sin(th)),
            )
        # extended-precision path (finite-difference oracle)
        u, v = state[IX_U], state[IX_V]
        speed = np.hypot(u, v)
        if speed < SPEED_FLOOR:
            return AeroForces(0.0, 0.0, 0.0)
        c = scn.q_coef * self.C_D
        th = state[IX_TH]
        lever = self.l_cp_frac - scn.l_cg_frac
        return AeroForces(
            -c * speed * u,
            -c * speed * v,
            lever * c * speed * (v * np.cos(th) - u * np.sin(th)),
        )

    def forces_jac(self, state, scn):
        u = float(state[IX_U])
        v = float(state[IX_V])
        speed = math.hypot(u, v)
        if speed < SPEED_FLOOR:
            return _ZERO_JAC
        th = float(state[IX_TH])
        c = scn.q_coef * self.C_D
        d = (self.l_cp_frac - scn.l_cg_frac) * c
        cth = math.cos(th)
        sth = math.sin(th)
        w = v * cth - u * sth

        F = np.array([-c * speed * u, -c * speed * v, d * speed * w])
        dF_dv = np.array([
            [-c * (speed + u * u / speed), -c * (u * v / speed)],
            [-c * (u * v / speed), -c * (speed + v * v / speed)],
            [d * (u * w / speed - speed * sth), d * (v * w / speed + speed * cth)],
        ])
        dF_dth = np.array([0.0, 0.0, d * speed * (-v * sth - u * cth)])
        return F, dF_dv, dF_dth


def simplified_forces(state, model: SimplifiedAero, scn) -> AeroForces:
    return model.forces(state, scn)


# ---------------------------------------------------------------------------
# Stand-in coefficient model and training dataset
# ---------------------------------------------------------------------------

def standin_coeffs(alpha: float) -> tuple[float, float, float]:
    """Flat-plate style periodic coefficients (C_L, C_D, C_M).

    Normal and axial force coefficients follow the high-angle-of-attack
    slender-body approximation C_N = 2.2 sin a |sin a|,
    C_A = 0.15 cos a |cos a|, rotated into wind axes with a small
    zero-lift drag offset.  The moment is referenced to the cg with the
    same cp-cg lever as the simplified model (cp at 55% of the length,
    cg at 60%, both from the nose), giving C_M = (0.55 - 0.60) C_N: at
    belly-flop incidence the moment pitches the nose down, exactly as
    the drag-only model's fixed cp does.
    """
    sa = math.sin(alpha)
    ca = math.cos(alpha)
    C_N = 2.2 * sa * abs(sa)
    C_A = 0.15 * ca * abs(ca)
    C_L = C_N * ca - C_A * sa
    C_D = C_N * sa + C_A * ca + 0.05
    C_M = -0.05 * C_N
    return C_L, C_D, C_M


@dataclass(frozen=True)
class CoeffSample:
    """One aerodynamic coefficient sample at a given angle of attack."""

    alpha: float  # rad, in [0, 2*pi)
    C_L: float
    C_D: float
    C_M: float


def generate_dataset(n_samples: int) -> list[CoeffSample]:
    """Uniform alpha grid over [0, 2*pi); 36 samples matches a 10-deg sweep."""
    if n_samples < 4:
        raise ValueError("need at least 4 samples")
    samples = []
    for i in range(n_samples):
        alpha = 2.0 * math.pi * i / n_samples
        samples.append(CoeffSample(alpha, *standin_coeffs(alpha)))
    return samples


def write_dataset_csv(path, samples: Sequence[CoeffSample]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("alpha_deg,CL,CD,CM\n")
        for s in samples:
            fh.write(f"{math.degrees(s.alpha)!r},{s.C_L!r},{s.C_D!r},{s.C_M!r}\n")


# ---------------------------------------------------------------------------
# MLP surrogate
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MlpSurrogate:
    """Small tanh MLP mapping (sin alpha, cos alpha) -> (C_L, C_D, C_M).

    ``layers`` holds (weight, bias) pairs ordered input to output; hidden
    activations are tanh, the output layer is affine.  Instances are
    immutable; evaluation is pure and thread-safe.
    """

    layers: tuple[tuple[np.ndarray, np.ndarray], ...]
    meta: dict = field(default_factory=dict)

    kind = "surrogate"

    def __post_init__(self):
        if self.layers[0][0].shape[1] != 2:
            raise ValueError("first layer must take 2 inputs (sin a, cos a)")
        if self.layers[-1][0].shape[0] != 3:
            raise ValueError("last layer must emit 3 coefficients")
        for W, b in self.layers:
            if not (np.isfinite(W).all() and np.isfinite(b).all()):
                raise ValueError("non-finite surrogate parameters")
            W.setflags(write=False)
            b.setflags(write=False)

    # -- coefficient evaluation ---------------------------------------------

    def coeffs_from_encoding(self, z: np.ndarray) -> np.ndarray:
        """Forward pass from the (sin a, cos a) encoding."""
        h = z
        for W, b in self.layers[:-1]:
            h = np.tanh(W @ h + b)
        W, b = self.layers[-1]
        return W @ h + b

    def coeffs(self, alpha: float) -> np.ndarray:
        """(C_L, C_D, C_M) at an angle of attack; 2*pi periodic bit-exactly."""
        z = np.array([np.sin(alpha), np.cos(alpha)])
        return self.coeffs_from_encoding(z)

    def coeffs_and_dalpha(self, sin_a, cos_a):
        """Coefficients plus their derivative with respect to alpha.

        Propagates the tangent dz/dalpha = (cos a, -sin a) forward through
        the network alongside the values; value and tangent share one
        matrix product per layer.
        """
        hd = np.array([[sin_a, cos_a], [cos_a, -sin_a]]).T  # (in, 2)
        for W, b in self.layers[:-1]:
            a = W @ hd
            a[:, 0] += b
            h = np.tanh(a[:, 0])
            hd = np.empty_like(a)
            hd[:, 0] = h
            hd[:, 1] = (1.0 - h * h) * a[:, 1]
        W, b = self.layers[-1]
        out = W @ hd
        return out[:, 0] + b, out[:, 1]

    # -- force assembly -------------------------------------------------------

    def forces(self, state, scn) -> AeroForces:
        if state.dtype == np.float64:
            u = float(state[IX_U])
            v = float(state[IX_V])
            speed = math.hypot(u, v)
            if speed < SPEED_FLOOR:
                return AeroForces(0.0, 0.0, 0.0)
            th = float(state[IX_TH])
            cth = math.cos(th)
            sth = math.sin(th)
            z = np.array([(v * cth - u * sth) / speed,
                          (u * cth + v * sth) / speed])
            C_L, C_D, C_M = self.coeffs_from_encoding(z)
            s = scn.q_coef
            # drag along -v_hat, lift along the +90 deg rotation of v_hat
            return AeroForces(
                s * speed * (-C_D * u - C_L * v),
                s * speed * (-C_D * v + C_L * u),
                s * speed * speed * C_M,
            )
        # extended-precision path (finite-difference oracle)
        u, v = state[IX_U], state[IX_V]
        speed = np.hypot(u, v)
        if speed < SPEED_FLOOR:
            return AeroForces(0.0, 0.0, 0.0)
        sin_a, cos_a, _ = wind_axes(state)
        C_L, C_D, C_M = self.coeffs_from_encoding(np.array([sin_a, cos_a]))
        s = scn.q_coef
        return AeroForces(
            s * speed * (-C_D * u - C_L * v),
            s * speed * (-C_D * v + C_L * u),
            s * speed * speed * C_M,
        )

    def forces_jac(self, state, scn):
        u = float(state[IX_U])
        v = float(state[IX_V])
        speed = math.hypot(u, v)
        if speed < SPEED_FLOOR:
            return _ZERO_JAC
        th = float(state[IX_TH])
        cth = math.cos(th)
        sth = math.sin(th)
        sin_a = (v * cth - u * sth) / speed
        cos_a = (u * cth + v * sth) / speed
        C, dC = self.coeffs_and_dalpha(sin_a, cos_a)
        C_L, C_D, C_M = float(C[0]), float(C[1]), float(C[2])
        dC_L, dC_D, dC_M = float(dC[0]), float(dC[1]), float(dC[2])
        s = scn.q_coef
        # d alpha / d(u, v) = (-v, u) / speed^2 and d alpha / d theta = -1
        sp2 = speed * speed
        da_du = -v / sp2
        da_dv = u / sp2

        gx = -C_D * u - C_L * v          # Fx / (s * speed)
        gy = -C_D * v + C_L * u          # Fy / (s * speed)
        gx_a = -dC_D * u - dC_L * v      # d gx / d alpha
        gy_a = -dC_D * v + dC_L * u

        F = np.array([s * speed * gx, s * speed * gy, s * sp2 * C_M])
        dF_dv = np.array([
            [s * (u / speed * gx + speed * (-C_D) + speed * gx_a * da_du),
             s * (v / speed * gx + speed * (-C_L) + speed * gx_a * da_dv)],
            [s * (u / speed * gy + speed * C_L + speed * gy_a * da_du),
             s * (v / speed * gy + speed * (-C_D) + speed * gy_a * da_dv)],
            [s * (2.0 * u * C_M + sp2 * dC_M * da_du),
             s * (2.0 * v * C_M + sp2 * dC_M * da_dv)],
        ])
        dF_dth = np.array([
            -s * speed * gx_a,
            -s * speed * gy_a,
            -s * sp2 * dC_M,
        ])
        return F, dF_dv, dF_dth


def mlp_forward(model: MlpSurrogate, alpha: float) -> np.ndarray:
    return model.coeffs(alpha)


def surrogate_forces(state, model: MlpSurrogate, scn) -> AeroForces:
    return model.forces(state, scn)


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TrainerConfig:
    """Hyperparameters for the surrogate fit (full-batch Adam on MSE)."""

    hidden: tuple[int, ...] = (32, 32)
    lr: float = 1e-3
    epochs: int = 20000
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def train_surrogate(dataset: Sequence[CoeffSample],
                    hyper: TrainerConfig | None = None,
                    seed: int = 0) -> MlpSurrogate:
    """Fit the MLP to the dataset, deterministically for a given seed.

    Targets are standardized per coefficient during training and the
    de-standardization is folded back into the output layer afterwards,
    so the returned model maps directly to raw coefficients.
    """
    if not dataset:
        raise ValueError("dataset must be nonempty")
    hyper = hyper or TrainerConfig()
    rng = np.random.default_rng(seed)

    X = np.array([[math.sin(s.alpha), math.cos(s.alpha)] for s in dataset])
    Y = np.array([[s.C_L, s.C_D, s.C_M] for s in dataset])
    mu = Y.mean(axis=0)
    sig = np.maximum(Y.std(axis=0), 1e-8)
    Yn = (Y - mu) / sig

    sizes = (2, *hyper.hidden, 3)
    params: list[np.ndarray] = []
    for n_in, n_out in zip(sizes[:-1], sizes[1:]):
        limit = math.sqrt(6.0 / (n_in + n_out))
        params.append(rng.uniform(-limit, limit, size=(n_out, n_in)))
        params.append(np.zeros(n_out))

    m_mom = [np.zeros_like(p) for p in params]
    v_mom = [np.zeros_like(p) for p in params]
    n = X.shape[0]
    final_mse = math.inf

    for epoch in range(1, hyper.epochs + 1):
        # forward
        hs = [X]
        h = X
        for i in range(0, len(params) - 2, 2):
            h = np.tanh(h @ params[i].T + params[i + 1])
            hs.append(h)
        out = h @ params[-2].T + params[-1]
        err = out - Yn
        loss = float(np.mean(err * err))
        if not math.isfinite(loss):
            raise TrainingError(f"non-finite training loss at epoch {epoch}",
                                iteration=epoch)
        final_mse = loss

        # backward
        grads = [None] * len(params)
        g = (2.0 / err.size) * err
        grads[-2] = g.T @ hs[-1]
        grads[-1] = g.sum(axis=0)
        g = g @ params[-2]
        for i in range(len(params) - 4, -1, -2):
            g = g * (1.0 - hs[i // 2 + 1] ** 2)
            grads[i] = g.T @ hs[i // 2]
            grads[i + 1] = g.sum(axis=0)
            g = g @ params[i]

        # Adam update
        b1t = 1.0 - hyper.beta1 ** epoch
        b2t = 1.0 - hyper.beta2 ** epoch
        for i, grad in enumerate(grads):
            m_mom[i] = hyper.beta1 * m_mom[i] + (1.0 - hyper.beta1) * grad
            v_mom[i] = hyper.beta2 * v_mom[i] + (1.0 - hyper.beta2) * grad * grad
            params[i] = params[i] - hyper.lr * (m_mom[i] / b1t) / (
                np.sqrt(v_mom[i] / b2t) + hyper.eps)

    # fold the target standardization into the output layer
    params[-2] = sig[:, None] * params[-2]
    params[-1] = sig * params[-1] + mu

    layers = tuple((params[i], params[i + 1]) for i in range(0, len(params), 2))
    model = MlpSurrogate(layers=layers, meta={})
    preds = np.array([model.coeffs(s.alpha) for s in dataset])
    raw_mse = float(np.mean((preds - Y) ** 2))
    max_abs = np.abs(preds - Y).max(axis=0)
    model.meta.update({
        "train_mse_normalized": final_mse,
        "train_mse": raw_mse,
        "max_abs_err": {"C_L": float(max_abs[0]), "C_D": float(max_abs[1]),
                        "C_M": float(max_abs[2])},
        "n_samples": n,
        "seed": seed,
        "epochs": hyper.epochs,
        "lr": hyper.lr,
        "hidden": list(hyper.hidden),
    })
    return model


# ---------------------------------------------------------------------------
# Weights file I/O
# ---------------------------------------------------------------------------

def save_weights(model: MlpSurrogate, path) -> None:
    """Write the surrogate to the documented JSON wire format."""
    doc = {
        "layers": [
            {"rows": int(W.shape[0]), "cols": int(W.shape[1]),
             "w": [float(x) for x in W.ravel(order="C")],
             "b": [float(x) for x in b]}
            for W, b in model.layers
        ],
        "activation": "tanh",
        "meta": model.meta,
    }
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_weights(path) -> MlpSurrogate:
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("activation") != "tanh":
        raise ValueError(f"unsupported activation {doc.get('activation')!r}")
    layers = []
    for spec in doc["layers"]:
        W = np.array(spec["w"], dtype=float).reshape(spec["rows"], spec["cols"])
        b = np.array(spec["b"], dtype=float)
        layers.append((W, b))
    return MlpSurrogate(layers=tuple(layers), meta=doc.get("meta", {}))
