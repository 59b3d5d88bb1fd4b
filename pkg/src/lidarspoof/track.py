"""Nearly-constant-acceleration Kalman tracking with chi-square gating."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Dict, Hashable, List, Mapping, Optional, Tuple

import numpy as np
from scipy.special import gammainc

POS_IDX = np.array([0, 3, 6])
DEFAULT_R = 0.09 * np.eye(3)


class TrackError(ValueError):
    pass


class SingularInnovation(TrackError):
    pass


# --- chi-square quantile -------------------------------------------------------

def chi2_cdf(x: float, dof: int) -> float:
    if x <= 0:
        return 0.0
    return float(gammainc(0.5 * dof, 0.5 * x))


def _chi2_pdf(x: float, dof: int) -> float:
    k = 0.5 * dof
    return math.exp((k - 1) * math.log(x) - 0.5 * x - k * math.log(2.0) - math.lgamma(k))


def chi2_inv(p: float, dof: int, tol: float = 1e-12) -> float:
    """Quantile of the chi-square distribution by bracketing, bisection and Newton polish."""
    if not (0.0 < p < 1.0):
        raise TrackError("p must lie in (0, 1)")
    if int(dof) != dof or dof < 1:
        raise TrackError("dof must be a positive integer")
    lo, hi = 0.0, max(1.0, float(dof))
    while chi2_cdf(hi, dof) < p:
        lo, hi = hi, 2.0 * hi
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if chi2_cdf(mid, dof) < p:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-6 * max(1.0, hi):
            break
    x = 0.5 * (lo + hi)
    for _ in range(20):
        err = chi2_cdf(x, dof) - p
        if abs(err) < tol:
            break
        step = err / _chi2_pdf(x, dof)
        x_new = x - step
        x = x_new if lo <= x_new <= hi else 0.5 * (lo + hi)
        if err > 0:
            hi = min(hi, x + step)
        else:
            lo = max(lo, x + step)
    return x


# --- model and state -------------------------------------------------------------

@dataclass(frozen=True)
class MotionModel:
    q: float = 1.0
    T: float = 0.2

    def __post_init__(self):
        if self.q <= 0 or self.T <= 0:
            raise TrackError("q and T must be positive")

    def F(self) -> np.ndarray:
        T = self.T
        f = np.array([[1.0, T, 0.5 * T * T], [0.0, 1.0, T], [0.0, 0.0, 1.0]])
        return np.kron(np.eye(3), f)

    def Q(self) -> np.ndarray:
        T = self.T
        qa = self.q * np.array([[T**5 / 20, T**4 / 8, T**3 / 6],
                                [T**4 / 8, T**3 / 3, T**2 / 2],
                                [T**3 / 6, T**2 / 2, T]])
        return np.kron(np.eye(3), qa)


def position_matrix() -> np.ndarray:
    H = np.zeros((3, 9))
    H[np.arange(3), POS_IDX] = 1.0
    return H


@dataclass(frozen=True)
class GateConfig:
    confidence: float = 0.99
    dof: int = 3

    def __post_init__(self):
        if not (0.0 < self.confidence < 1.0):
            raise TrackError("confidence must lie in (0, 1)")

    @property
    def tau(self) -> float:
        return _tau(self.confidence, self.dof)


_TAU_CACHE: Dict[Tuple[float, int], float] = {}


def _tau(p: float, dof: int) -> float:
    key = (p, dof)
    if key not in _TAU_CACHE:
        _TAU_CACHE[key] = chi2_inv(p, dof)
    return _TAU_CACHE[key]


@dataclass(frozen=True)
class LifecycleConfig:
    max_misses: int = 5
    confirm_hits: int = 2
    birth_var: Tuple[float, float, float] = (1.0, 25.0, 25.0)

    def birth_P(self) -> np.ndarray:
        return np.kron(np.eye(3), np.diag(self.birth_var))


@dataclass(frozen=True)
class TrackState:
    x: np.ndarray
    P: np.ndarray
    id: Hashable = 0
    hits: int = 1
    misses: int = 0
    g: float = float("nan")
    confirm_hits: int = 2

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float).reshape(9).copy()
        P = np.asarray(self.P, dtype=float).reshape(9, 9).copy()
        if self.hits < 0 or self.misses < 0:
            raise TrackError("hit and miss counters must be non-negative")
        x.setflags(write=False)
        P.setflags(write=False)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "P", P)

    @classmethod
    def birth(cls, z, track_id: Hashable = 0,
              life: LifecycleConfig = LifecycleConfig()) -> "TrackState":
        x = np.zeros(9)
        x[POS_IDX] = np.asarray(z, dtype=float).reshape(3)
        return cls(x, life.birth_P(), track_id, 1, 0, float("nan"), life.confirm_hits)

    @property
    def position(self) -> np.ndarray:
        return self.x[POS_IDX]

    @property
    def velocity(self) -> np.ndarray:
        return self.x[POS_IDX + 1]

    @property
    def acceleration(self) -> np.ndarray:
        return self.x[POS_IDX + 2]

    @property
    def confirmed(self) -> bool:
        return self.hits >= self.confirm_hits


def predict(track: TrackState, model: MotionModel = MotionModel()) -> TrackState:
    F = model.F()
    P = F @ track.P @ F.T + model.Q()
    return replace(track, x=F @ track.x, P=0.5 * (P + P.T))


def innovation(track: TrackState, z, R=DEFAULT_R) -> Tuple[np.ndarray, np.ndarray]:
    H = position_matrix()
    nu = np.asarray(z, dtype=float).reshape(3) - H @ track.x
    S = H @ track.P @ H.T + np.asarray(R, dtype=float)
    return nu, S


def gate(track: TrackState, z, R=DEFAULT_R,
         cfg: GateConfig = GateConfig()) -> Tuple[float, bool]:
    """Normalized innovation g = nu^T S^-1 nu; accept iff g <= tau."""
    nu, S = innovation(track, z, R)
    try:
        g = float(nu @ np.linalg.solve(S, nu))
    except np.linalg.LinAlgError:
        raise SingularInnovation("innovation covariance is singular") from None
    return g, g <= cfg.tau


def update(track: TrackState, z, R=DEFAULT_R) -> TrackState:
    """Kalman correction with a Joseph-form covariance update."""
    H = position_matrix()
    R = np.asarray(R, dtype=float)
    nu, S = innovation(track, z, R)
    try:
        K = np.linalg.solve(S, H @ track.P).T
    except np.linalg.LinAlgError:
        raise SingularInnovation("innovation covariance is singular") from None
    I_KH = np.eye(9) - K @ H
    P = I_KH @ track.P @ I_KH.T + K @ R @ K.T
    g = float(nu @ np.linalg.solve(S, nu))
    return replace(track, x=track.x + K @ nu, P=0.5 * (P + P.T), hits=track.hits + 1,
                   misses=0, g=g)


@dataclass(frozen=True)
class TrackEvent:
    key: Hashable
    kind: str                    # birth | update | reject | miss | delete
    g: float = float("nan")
    accepted: bool = False


def manage_tracks(tracks: Mapping[Hashable, TrackState],
                  detections: Mapping[Hashable, Optional[np.ndarray]], *,
                  model: MotionModel = MotionModel(), R=DEFAULT_R,
                  gate_cfg: GateConfig = GateConfig(),
                  life: LifecycleConfig = LifecycleConfig()
                  ) -> Tuple[Dict[Hashable, TrackState], List[TrackEvent]]:
    """One frame of per-frustum tracking.

    ``tracks`` and ``detections`` are keyed by frustum; each frustum holds at
    most one track and contributes at most one measurement (a position).
    """
    out: Dict[Hashable, TrackState] = {}
    events: List[TrackEvent] = []
    for key in list(tracks) + [k for k in detections if k not in tracks]:
        z = detections.get(key)
        if key not in tracks:
            if z is not None:
                out[key] = TrackState.birth(z, key, life)
                events.append(TrackEvent(key, "birth", 0.0, True))
            continue
        trk = predict(tracks[key], model)
        if z is not None:
            g, ok = gate(trk, z, R, gate_cfg)
            if ok:
                out[key] = update(trk, z, R)
                events.append(TrackEvent(key, "update", g, True))
                continue
            trk = replace(trk, g=g)
            events.append(TrackEvent(key, "reject", g, False))
        else:
            events.append(TrackEvent(key, "miss"))
        trk = replace(trk, misses=trk.misses + 1)
        if trk.misses >= life.max_misses:
            events.append(TrackEvent(key, "delete"))
        else:
            out[key] = trk
    return out, events


def predict_time_to_impact(track: TrackState, victim_extent: float = 0.0,
                           victim_position=None) -> Optional[float]:
    """First time the track's range along the approach axis reaches victim_extent."""
    victim = np.zeros(3) if victim_position is None else np.asarray(victim_position, float)
    rel = track.position - victim
    dist = float(np.linalg.norm(rel))
    if dist <= 1e-9:
        return 0.0
    u = rel / dist
    s = dist - victim_extent
    if s <= 0:
        return 0.0
    v = float(track.velocity @ u)
    a = float(track.acceleration @ u)
    # s + v t + a t^2 / 2 = 0
    if a == 0.0:
        return s / -v if v < 0 else None
    disc = v * v - 2.0 * a * s
    if disc < 0:
        return None
    # cancellation-free roots of (a/2) t^2 + v t + s
    qq = -0.5 * (v + math.copysign(math.sqrt(disc), v))
    roots = [qq / (0.5 * a)] + ([s / qq] if qq != 0 else [])
    pos = [t for t in roots if t > 0]
    return min(pos) if pos else None
