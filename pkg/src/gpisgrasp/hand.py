"""Simplified three-finger Barrett-style hand.

Frames: the finger joints sit in the palm-frame xy-plane, the palm contact
disk ``palm_face`` above it, and the approach direction is palm +z. Every finger is a proximal and a distal capsule. With
all joints at zero the fingers lie flat in the palm plane pointing radially
outward; positive flexion swings them toward +z. Finger 1 sits at a fixed
azimuth, fingers 2 and 3 are placed symmetrically at
``+-(spread_offset + spread / 2)``.

Actuated joints ``q = (spread, p1, p2, p3)``. Each distal joint follows
``kappa * p_i`` plus a breakaway term that only grows after the proximal
link is stopped by contact.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import InitialCollision, JointLimit
from .gpis import GpisModel

N_FINGERS = 3
LINK_NAMES = ("palm",) + tuple(f"f{i}_{seg}" for i in range(1, N_FINGERS + 1) for seg in ("proximal", "distal"))


@dataclass(frozen=True)
class HandModel:
    palm_radius: float = 0.05
    mount_radius: float = 0.05
    proximal_length: float = 0.07
    distal_length: float = 0.056
    link_radius: float = 0.01
    palm_face: float = 0.01  # height of the palm contact disk above the finger joints
    kappa: float = 1.0 / 3.0
    spread_limits: tuple = (0.0, np.pi)
    proximal_limits: tuple = (0.0, 2.44)
    finger1_azimuth: float = np.pi
    spread_offset: float = np.pi / 6
    preset_spread: float = 0.0
    speeds: tuple = (0.0, 1.0, 1.0, 1.0)
    step: float = 0.005
    contact_threshold: float = 0.005
    penetration_tol: float = 0.005
    n_axial: int = 6
    n_around: int = 8
    palm_rings: int = 3
    palm_ring_points: int = 8

    def __post_init__(self):
        for name in ("spread_limits", "proximal_limits", "speeds"):
            object.__setattr__(self, name, tuple(float(v) for v in getattr(self, name)))
        for lo, hi in (self.spread_limits, self.proximal_limits):
            if not lo < hi:
                raise ValueError("joint limits need min < max")
        if min(self.proximal_length, self.distal_length, self.link_radius, self.palm_radius) <= 0:
            raise ValueError("hand dimensions must be positive")
        if len(self.speeds) != 4:
            raise ValueError("need one speed ratio per actuated DOF")

    @property
    def distal_limits(self):
        return (self.kappa * self.proximal_limits[0], self.kappa * self.proximal_limits[1])

    @property
    def lower(self):
        return np.array([self.spread_limits[0]] + [self.proximal_limits[0]] * N_FINGERS)

    @property
    def upper(self):
        return np.array([self.spread_limits[1]] + [self.proximal_limits[1]] * N_FINGERS)

    def azimuths(self, spread):
        a = self.spread_offset + 0.5 * spread
        return np.array([self.finger1_azimuth, a, -a])

    # persistence -------------------------------------------------------
    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown hand keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def load(cls, path):
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass(frozen=True)
class HandState:
    q: np.ndarray  # (spread, p1, p2, p3)
    palm: np.ndarray  # 4x4
    breakaway: np.ndarray = field(default_factory=lambda: np.zeros(N_FINGERS))

    def __post_init__(self):
        object.__setattr__(self, "q", np.asarray(self.q, float).copy())
        object.__setattr__(self, "palm", np.asarray(self.palm, float).copy())
        object.__setattr__(self, "breakaway", np.asarray(self.breakaway, float).copy())

    def distal(self, model: HandModel):
        return model.kappa * self.q[1:] + self.breakaway


@dataclass(frozen=True)
class Contact:
    point: np.ndarray
    normal: np.ndarray
    link: int  # index into LINK_NAMES
    finger: int  # 0 for the palm, 1..3 for fingers
    value: float = 0.0  # f_GPIS at the point

    def to_dict(self):
        return {
            "point": self.point.tolist(),
            "normal": self.normal.tolist(),
            "link": LINK_NAMES[self.link],
            "finger": self.finger,
            "value": self.value,
        }


def check_state(model: HandModel, state: HandState, tol=1e-12):
    q = state.q
    if q.shape != (4,):
        raise JointLimit(f"expected 4 actuated joints, got shape {q.shape}")
    if np.any(q < model.lower - tol) or np.any(q > model.upper + tol):
        raise JointLimit(f"joint vector {q} outside [{model.lower}, {model.upper}]")
    d = state.distal(model)
    lo, hi = model.distal_limits
    if np.any(state.breakaway < -tol) or np.any(d > hi + tol) or np.any(d < lo - tol):
        raise JointLimit(f"distal joints {d} outside [{lo}, {hi}]")


# ---------------------------------------------------------------------------
# kinematics


def _finger_axes(azimuth):
    er = np.array([np.cos(azimuth), np.sin(azimuth), 0.0])
    ez = np.array([0.0, 0.0, 1.0])
    return er, ez, np.cross(er, ez)


def _link_frames(model: HandModel, azimuth, prox, dist):
    """Palm-frame link origins and rotations for arrays of joint angles.

    Returns ``(origin_p, R_p, origin_d, R_d)``; rotations have columns
    (link axis, joint axis, axis x joint axis).
    """
    prox = np.atleast_1d(np.asarray(prox, float))
    dist = np.broadcast_to(np.asarray(dist, float), prox.shape)
    er, ez, w = _finger_axes(azimuth)
    base = model.mount_radius * er

    def frame(angle):
        d = np.cos(angle)[:, None] * er + np.sin(angle)[:, None] * ez
        z = np.cross(d, w)
        return np.stack([d, np.broadcast_to(w, d.shape), z], axis=-1)

    R_p = frame(prox)
    R_d = frame(prox + dist)
    o_p = np.broadcast_to(base, R_p.shape[:-1]).copy()
    o_d = o_p + model.proximal_length * R_p[..., 0]
    return o_p, R_p, o_d, R_d


@dataclass(frozen=True)
class Kinematics:
    link_transforms: np.ndarray  # (7, 4, 4) world transforms, LINK_NAMES order
    fingertips: np.ndarray  # (3, 3) distal link end points
    pads: np.ndarray  # (3, 3) inner surface points of the fingertips


def forward_kinematics(model: HandModel, state: HandState) -> Kinematics:
    check_state(model, state)
    T_palm = state.palm
    Rw, tw = T_palm[:3, :3], T_palm[:3, 3]
    transforms = [T_palm.copy()]
    tips, pads = [], []
    dist = state.distal(model)
    for i, az in enumerate(model.azimuths(state.q[0])):
        o_p, R_p, o_d, R_d = _link_frames(model, az, state.q[1 + i], dist[i])
        for o, R in ((o_p[0], R_p[0]), (o_d[0], R_d[0])):
            T = np.eye(4)
            T[:3, :3] = Rw @ R
            T[:3, 3] = Rw @ o + tw
            transforms.append(T)
        tip = o_d[0] + model.distal_length * R_d[0][:, 0]
        # inner side of a link is local -z
        pad = tip - model.link_radius * R_d[0][:, 2]
        tips.append(Rw @ tip + tw)
        pads.append(Rw @ pad + tw)
    return Kinematics(np.array(transforms), np.array(tips), np.array(pads))


# ---------------------------------------------------------------------------
# sample points


def capsule_samples(length, radius, n_axial, n_around, cap=True):
    """Surface points of a capsule along local +x, plus its axis points.

    Returns ``(surface (k, 3), axis_index (k,), axis_points (n_axial [+1], 3))``
    where ``axis_index`` maps every surface point to an axis point at
    distance ``radius``.
    """
    s = np.linspace(0.0, length, n_axial)
    beta = 2 * np.pi * np.arange(n_around) / n_around
    ring = np.stack([np.zeros(n_around), radius * np.cos(beta), radius * np.sin(beta)], axis=1)
    pts = (s[:, None, None] * np.array([1.0, 0.0, 0.0]) + ring[None]).reshape(-1, 3)
    idx = np.repeat(np.arange(n_axial), n_around)
    axis = np.column_stack([s, np.zeros(n_axial), np.zeros(n_axial)])
    if cap:
        c45 = np.sqrt(0.5)
        cap_pts = np.vstack([[length + radius, 0.0, 0.0], [length + radius * c45, 0.0, 0.0] + c45 * ring])
        pts = np.vstack([pts, cap_pts])
        idx = np.concatenate([idx, np.full(len(cap_pts), n_axial - 1)])
    return pts, idx, axis


def palm_samples(model: HandModel):
    h = model.palm_face
    pts = [np.array([[0.0, 0.0, h]])]
    for k in range(1, model.palm_rings + 1):
        r = model.palm_radius * k / model.palm_rings
        a = 2 * np.pi * (np.arange(model.palm_ring_points) + 0.5 * (k % 2)) / model.palm_ring_points
        pts.append(np.column_stack([r * np.cos(a), r * np.sin(a), np.full_like(a, h)]))
    return np.vstack(pts)


class _Samples:
    """Cached local sample sets for one hand model."""

    _cache: dict = {}

    def __new__(cls, model: HandModel):
        key = (model.proximal_length, model.distal_length, model.link_radius, model.n_axial,
               model.n_around, model.palm_radius, model.palm_face, model.palm_rings, model.palm_ring_points)
        obj = cls._cache.get(key)
        if obj is None:
            obj = super().__new__(cls)
            obj.prox, obj.prox_idx, obj.prox_axis = capsule_samples(
                model.proximal_length, model.link_radius, model.n_axial, model.n_around, cap=False)
            obj.dist, obj.dist_idx, obj.dist_axis = capsule_samples(
                model.distal_length, model.link_radius, model.n_axial, model.n_around, cap=True)
            obj.palm = palm_samples(model)
            cls._cache[key] = obj
        return obj


def _to_world(T, pts):
    return pts @ T[:3, :3].T + T[:3, 3]


def link_sample_points(model: HandModel, state: HandState):
    """World-frame sample points per link, in LINK_NAMES order."""
    S = _Samples(model)
    kin = forward_kinematics(model, state)
    out = [_to_world(kin.link_transforms[0], S.palm)]
    for i in range(N_FINGERS):
        out.append(_to_world(kin.link_transforms[1 + 2 * i], S.prox))
        out.append(_to_world(kin.link_transforms[2 + 2 * i], S.dist))
    return out


def check_collision(model: HandModel, state: HandState, gpis: GpisModel, penetration_tol=None):
    """``(collides, worst_penetration)``; collision iff some sample has f < -tol."""
    tol = model.penetration_tol if penetration_tol is None else penetration_tol
    pts = np.vstack(link_sample_points(model, state))
    fmin = float(gpis.values(pts).min())
    return fmin < -tol, max(0.0, -fmin)


def extract_contacts(model: HandModel, state: HandState, gpis: GpisModel, eps_c=None):
    """At most one contact per link: the sample with smallest |f| if it is within eps_c."""
    eps = model.contact_threshold if eps_c is None else eps_c
    groups = link_sample_points(model, state)
    sizes = [len(g) for g in groups]
    allp = np.vstack(groups)
    f = gpis.values(allp)
    contacts = []
    start = 0
    for link, n in enumerate(sizes):
        fl = np.abs(f[start : start + n])
        k = int(np.argmin(fl))
        if fl[k] <= eps:
            p = allp[start + k]
            val, g = gpis.query(p)
            contacts.append(Contact(p.copy(), g / np.linalg.norm(g), link, (link + 1) // 2, float(val)))
        start += n
    return contacts


def fingertip_constraint_residual(model: HandModel, palm, q, gpis: GpisModel, eps_c=None, breakaway=None):
    """Per-finger ``|f(pad_i)| - eps_c``; non-positive means the fingertip touches the surface."""
    eps = model.contact_threshold if eps_c is None else eps_c
    state = HandState(q, palm, np.zeros(N_FINGERS) if breakaway is None else breakaway)
    pads = forward_kinematics(model, state).pads
    return np.abs(gpis.values(pads)) - eps


# ---------------------------------------------------------------------------
# closing sweep


class _FingerSweep:
    """Sample geometry of one finger for batches of (proximal, distal) angles."""

    def __init__(self, model, palm, azimuth):
        self.model = model
        self.R = palm[:3, :3]
        self.t = palm[:3, 3]
        self.az = azimuth
        self.S = _Samples(model)

    def _place(self, local, o, R):
        # local (k, 3) into palm frame for every angle, then world
        pts = o[:, None, :] + np.einsum("mij,kj->mki", R, local)
        return pts @ self.R.T + self.t

    def axis_points(self, prox, dist):
        o_p, R_p, o_d, R_d = _link_frames(self.model, self.az, prox, dist)
        return self._place(self.S.prox_axis, o_p, R_p), self._place(self.S.dist_axis, o_d, R_d)

    def surface_points(self, prox, dist):
        o_p, R_p, o_d, R_d = _link_frames(self.model, self.az, prox, dist)
        return self._place(self.S.prox, o_p, R_p), self._place(self.S.dist, o_d, R_d)


def _first_event(sweep, gpis, prox, dist, moving, eps, batch=12, max_jump=64):
    """First step index whose moving links have a sample with f <= eps.

    ``moving`` is ``(bool prox, bool dist)``. Far from the object the sweep
    jumps ahead by the number of steps a Lipschitz bound on f proves safe;
    near it, a block of steps is checked at once and only the surface
    samples around axis points the bound cannot clear are evaluated.
    Returns ``(index, fmin_prox, fmin_dist)`` or ``None``.
    """
    model = sweep.model
    S = sweep.S
    m = len(prox)
    r = model.link_radius
    reach_len = model.mount_radius + model.proximal_length + model.distal_length + r
    dp = np.max(np.abs(np.diff(prox))) if m > 1 else 0.0
    dd = np.max(np.abs(np.diff(dist))) if m > 1 else 0.0
    # bound on how far any sample moves per step
    step_move = reach_len * dp + (model.distal_length + r) * dd + 1e-12
    reach_cap = r + max_jump * step_move
    links = [j for j in (0, 1) if moving[j]]
    surf_idx = (S.prox_idx, S.dist_idx)
    n_axis = (len(S.prox_axis), len(S.dist_axis))

    def lipschitz(pts, reach):
        return gpis.residual_grad_bound + (np.sqrt(((pts - gpis.center) ** 2).sum(axis=-1)) + reach) / gpis.radius

    k = 0
    while k < m:
        idx = np.arange(k, min(k + batch, m))
        axis = sweep.axis_points(prox[idx], dist[idx])
        pts = np.concatenate([axis[j] for j in links], axis=1)
        f = gpis.values(pts.reshape(-1, 3)).reshape(pts.shape[:2])
        jump = int(np.floor(np.min(((f[0] - eps) / lipschitz(pts[0], reach_cap) - r) / step_move)))
        if jump >= batch:
            k += min(jump, max_jump)
            continue
        # samples sit within r of their axis point
        clear = f - r * lipschitz(pts, r) > eps
        if clear.all():
            k = idx[-1] + 1
            continue
        surf = sweep.surface_points(prox[idx], dist[idx])
        fmin = {0: np.full(len(idx), np.inf), 1: np.full(len(idx), np.inf)}
        col = 0
        for j in links:
            need = ~clear[:, col : col + n_axis[j]][:, surf_idx[j]]
            col += n_axis[j]
            if need.any():
                vals = np.full(need.shape, np.inf)
                vals[need] = gpis.values(surf[j][need])
                fmin[j] = vals.min(axis=1)
        hit = np.flatnonzero(np.minimum(fmin[0], fmin[1]) <= eps)
        if len(hit):
            i = hit[0]
            return int(idx[i]), float(fmin[0][i]), float(fmin[1][i])
        k = idx[-1] + 1
    return None


def _close_finger(model, gpis, palm, azimuth, speed, eps):
    p_lo, p_hi = model.proximal_limits
    d_hi = model.distal_limits[1]
    h = model.step * speed
    if h <= 0:
        return p_lo, 0.0
    sweep = _FingerSweep(model, palm, azimuth)
    n = int(np.ceil((p_hi - p_lo) / h - 1e-9))
    prox = np.minimum(p_lo + h * np.arange(n + 1), p_hi)
    dist = model.kappa * prox
    ev = _first_event(sweep, gpis, prox, dist, (True, True), eps)
    if ev is None:
        a = p_hi
    else:
        k, fp, fd = ev
        a = prox[k]
        if fd <= eps:
            return a, 0.0
    # proximal stopped (contact or limit): distal continues on its own
    d0 = model.kappa * a
    if d0 >= d_hi:
        return a, 0.0
    nd = int(np.ceil((d_hi - d0) / h - 1e-9))
    dist = np.minimum(d0 + h * np.arange(nd + 1), d_hi)
    prox = np.full_like(dist, a)
    ev = _first_event(sweep, gpis, prox, dist, (False, True), eps)
    d = d_hi if ev is None else dist[ev[0]]
    return a, max(0.0, d - model.kappa * a)


def auto_grasp(model: HandModel, palm, gpis: GpisModel, speeds=None, spread=None, check_initial=True):
    """Close the fingers from the open hand until contact or joint limits.

    Each proximal joint advances in steps of ``model.step * speed``; a
    finger stops when any sample of its links reaches ``|f| <= eps_c``. A
    contact on the proximal link only freezes the proximal joint and the
    distal joint keeps closing (breakaway). Returns ``(state, contacts)``.
    """
    speeds = np.asarray(model.speeds if speeds is None else speeds, float)
    spread = model.preset_spread if spread is None else float(spread)
    palm = np.asarray(palm, float)
    q0 = np.array([spread] + [model.proximal_limits[0]] * N_FINGERS)
    start = HandState(q0, palm)
    if check_initial:
        hit, depth = check_collision(model, start, gpis)
        if hit:
            raise InitialCollision(f"open hand penetrates the object by {depth:.4f} m")
    eps = model.contact_threshold
    q = q0.copy()
    brk = np.zeros(N_FINGERS)
    for i, az in enumerate(model.azimuths(spread)):
        q[1 + i], brk[i] = _close_finger(model, gpis, palm, az, speeds[1 + i], eps)
    state = HandState(q, palm, brk)
    return state, extract_contacts(model, state, gpis)


def with_overrides(model: HandModel, **kw) -> HandModel:
    return replace(model, **kw)
