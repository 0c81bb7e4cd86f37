"""Linear successive allocation (LISA) precoders and their hybrid variants.

Streams are allocated greedily. Each step picks the user and unit-norm
equalizer/precoder pair with the largest gain inside the nullspace of the
streams already allocated (first stage), then the triangular interference
left over is zero-forced and power is waterfilled (second stage). Allocation
stops when another stream no longer increases the sum rate or the RF chains
run out.

Variants
--------
``run_lisa``        dominant singular triples of the projected channels
``run_lc_lisa``     path-domain weights instead of singular triples
``run_h_lisa``      ``run_lisa`` followed by a constant-modulus analog factor
``run_lc_h_lisa``   ``run_lc_lisa`` followed by the same hybrid step

The hybrid runners accept ``n_rf_ms`` to model phase-shifter-only receivers
with ``n_rf_ms`` RF chains per user (see :func:`apply_ms_analog_constraints`).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

from .channel import ArrayGeometry, PathSet, path_responses, synthesize_channel
from .numerics import (DEFAULT_COND_LIMIT, NumericalError, guarded_inverse,
                       invert_lower_triangular, max_singular_triple)

__all__ = [
    "AllocationState",
    "StreamChoice",
    "PowerAllocation",
    "PrecodingSolution",
    "PathModel",
    "waterfill",
    "phase_project",
    "lisa_select_stream",
    "lc_select_stream",
    "update_state",
    "stream_gains",
    "digital_second_stage",
    "hybridize",
    "apply_ms_analog_constraints",
    "allocate",
    "run_lisa",
    "run_h_lisa",
    "run_lc_lisa",
    "run_lc_h_lisa",
    "GAIN_FLOOR",
]

# projected gains below this are treated as exhausted directions
GAIN_FLOOR = 1e-12


# ---------------------------------------------------------------------------
# data types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PowerAllocation:
    """Waterfilled powers over parallel scalar subchannels.

    ``gains`` are amplitude gains, so stream ``j`` carries
    ``log2(1 + powers[j] * gains[j]**2)`` bits.
    """

    gains: np.ndarray
    powers: np.ndarray
    budget: float

    @property
    def rates(self) -> np.ndarray:
        return np.log2(1.0 + self.powers * self.gains ** 2)

    @property
    def sum_rate(self) -> float:
        return float(np.sum(self.rates))


@dataclass(frozen=True)
class StreamChoice:
    user: int
    g: np.ndarray
    q: np.ndarray
    gain: float
    channel: np.ndarray
    path: Optional[int] = None


@dataclass(frozen=True)
class AllocationState:
    """Bookkeeping of the greedy first stage after ``step`` allocations.

    ``T`` projects onto the nullspace of the composite channel rows so far,
    ``S[k]`` onto the orthogonal complement of user ``k``'s equalizers.
    """

    T: np.ndarray
    S: np.ndarray
    pi: tuple[int, ...] = ()
    Q: np.ndarray = None
    H_comp: np.ndarray = None
    G_rows: np.ndarray = None
    d_per_user: np.ndarray = None

    @classmethod
    def initial(cls, num_users: int, n_bs: int, n_ms: int) -> "AllocationState":
        return cls(
            T=np.eye(n_bs, dtype=complex),
            S=np.broadcast_to(np.eye(n_ms, dtype=complex), (num_users, n_ms, n_ms)).copy(),
            pi=(),
            Q=np.zeros((n_bs, 0), dtype=complex),
            H_comp=np.zeros((0, n_bs), dtype=complex),
            G_rows=np.zeros((0, n_ms), dtype=complex),
            d_per_user=np.zeros(num_users, dtype=int),
        )

    @property
    def step(self) -> int:
        return len(self.pi)

    @property
    def num_users(self) -> int:
        return self.S.shape[0]

    @property
    def L(self) -> np.ndarray:
        return self.H_comp @ self.Q

    def prefix(self, m: int) -> "AllocationState":
        """State restricted to the first ``m`` streams (projectors rebuilt)."""
        Q = self.Q[:, :m]
        S = np.broadcast_to(np.eye(self.S.shape[1], dtype=complex), self.S.shape).copy()
        for k, g in zip(self.pi[:m], self.G_rows[:m]):
            S[k] = _deflate(S[k], g)
        d = np.bincount(np.asarray(self.pi[:m], dtype=int), minlength=self.num_users)
        return AllocationState(
            T=np.eye(Q.shape[0], dtype=complex) - Q @ Q.conj().T,
            S=S, pi=self.pi[:m], Q=Q.copy(), H_comp=self.H_comp[:m].copy(),
            G_rows=self.G_rows[:m].copy(), d_per_user=d)


@dataclass
class PrecodingSolution:
    """Per-stream precoders/equalizers plus their per-user grouping.

    Column ``j`` of ``stream_precoders`` / ``stream_equalizers`` belongs to
    user ``pi[j]``. For hybrid solutions ``stream_precoders`` equals
    ``analog @ digital``.
    """

    num_users: int
    pi: tuple[int, ...]
    stream_precoders: np.ndarray
    stream_equalizers: np.ndarray
    power: PowerAllocation
    analog: Optional[np.ndarray] = None
    digital: Optional[np.ndarray] = None
    metadata: dict = field(default_factory=dict)

    @property
    def num_streams(self) -> int:
        return len(self.pi)

    @property
    def sum_rate(self) -> float:
        return self.power.sum_rate

    @property
    def gains(self) -> np.ndarray:
        return self.power.gains

    def _group(self, M: np.ndarray) -> list[np.ndarray]:
        pi = np.asarray(self.pi, dtype=int)
        return [M[:, pi == k] for k in range(self.num_users)]

    @property
    def precoders(self) -> list[np.ndarray]:
        return self._group(self.stream_precoders)

    @property
    def equalizers(self) -> list[np.ndarray]:
        return self._group(self.stream_equalizers)

    @property
    def streams_per_user(self) -> np.ndarray:
        return np.bincount(np.asarray(self.pi, dtype=int), minlength=self.num_users)


@dataclass(frozen=True)
class PathModel:
    """Path parameters of all users, pre-evaluated for fast path selection.

    Users with fewer paths are padded with zero-gain dummies, which never win
    the selection.
    """

    gains: np.ndarray      # (K, L)
    scale: np.ndarray      # (K,) sqrt(N_BS N_MS / L_k)
    a_bs: np.ndarray       # (N_BS, K * L), column k * L + l
    a_ms: np.ndarray       # (K, N_MS, L)
    channels: np.ndarray   # (K, N_MS, N_BS)

    @classmethod
    def from_path_sets(cls, path_sets: Sequence[PathSet], bs_geom: ArrayGeometry,
                       ms_geom: ArrayGeometry) -> "PathModel":
        K = len(path_sets)
        Lmax = max(len(ps) for ps in path_sets)
        n_bs, n_ms = bs_geom.size, ms_geom.size
        gains = np.zeros((K, Lmax), dtype=complex)
        a_bs = np.zeros((n_bs, K, Lmax), dtype=complex)
        a_ms = np.zeros((K, n_ms, Lmax), dtype=complex)
        a_bs[0, :, :] = 1.0
        a_ms[:, 0, :] = 1.0
        scale = np.empty(K)
        for k, ps in enumerate(path_sets):
            n = len(ps)
            gains[k, :n] = ps.gains
            ms, bs = path_responses(ps, bs_geom, ms_geom)
            a_ms[k, :, :n] = ms
            a_bs[:, k, :n] = bs
            scale[k] = np.sqrt(n_bs * n_ms / n)
        channels = np.stack([synthesize_channel(ps, bs_geom, ms_geom) for ps in path_sets])
        return cls(gains, scale, a_bs.reshape(n_bs, K * Lmax), a_ms, channels)

    @property
    def num_paths(self) -> int:
        return self.gains.shape[1]


# ---------------------------------------------------------------------------
# elementary operations
# ---------------------------------------------------------------------------

def waterfill(lambdas, P: float) -> PowerAllocation:
    """Optimal powers for ``sum log2(1 + gamma_j * lambda_j**2)``, ``sum gamma <= P``.

    Exact active-set solution: streams are sorted by gain and the largest
    active set whose common water level clears every member's floor
    ``1 / lambda**2`` is kept.
    """
    lam = np.asarray(lambdas, dtype=float).ravel()
    if lam.size == 0:
        raise ValueError("waterfill needs at least one gain")
    if np.any(~np.isfinite(lam)) or np.any(lam <= 0):
        raise ValueError("waterfill gains must be finite and positive")
    if not P > 0:
        raise ValueError(f"power budget must be positive, got {P}")
    floors = 1.0 / lam ** 2
    order = np.argsort(floors, kind="stable")
    sorted_floors = floors[order]
    levels = (P + np.cumsum(sorted_floors)) / np.arange(1, lam.size + 1)
    active = np.nonzero(levels > sorted_floors)[0]
    m = active[-1] + 1
    mu = levels[m - 1]
    powers = np.maximum(mu - floors, 0.0)
    powers[order[m:]] = 0.0
    return PowerAllocation(lam, powers, float(P))


def phase_project(M, modulus: float) -> np.ndarray:
    """Keep only the phases of ``M``; every entry gets magnitude ``modulus``.

    Zero entries map to ``+modulus``.
    """
    M = np.asarray(M, dtype=complex)
    mag = np.abs(M)
    safe = np.where(mag > 0, mag, 1.0)
    return np.where(mag > 0, modulus * M / safe, modulus).astype(complex)


def _deflate(S: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Remove direction ``g`` from the range of projector ``S``.

    Equals ``S - g g^H`` whenever ``g`` already lies in the range of ``S``;
    otherwise the in-range component of ``g`` is removed so ``S`` stays an
    orthogonal projector.
    """
    u = S @ g
    nu = np.vdot(u, u).real
    if nu <= GAIN_FLOOR ** 2:
        return S
    return S - np.outer(u, u.conj()) / nu


def _projected_unit(T: np.ndarray, x: np.ndarray) -> tuple[np.ndarray, float]:
    """Normalized ``T x`` with one re-projection pass against drift."""
    y = T @ x
    ny = float(np.linalg.norm(y))
    if ny < GAIN_FLOOR:
        return y, ny
    y = T @ (y / ny)
    return y / np.linalg.norm(y), ny


def _as_mask(candidates, K: int) -> np.ndarray:
    if candidates is None:
        return np.ones(K, dtype=bool)
    mask = np.asarray(candidates)
    if mask.dtype != bool:
        idx = mask.astype(int)
        mask = np.zeros(K, dtype=bool)
        mask[idx] = True
    return mask


def lisa_select_stream(state: AllocationState, channels, candidates=None) -> Optional[StreamChoice]:
    """Pick the user whose projected channel ``H_k T`` has the largest singular value.

    Returns ``None`` when every candidate's projected channel has vanished.
    Ties go to the lowest user index.
    """
    H = np.asarray(channels)
    mask = _as_mask(candidates, H.shape[0])
    if not mask.any():
        return None
    HT = H @ state.T
    # largest eigenvalue of each (H_k T)(H_k T)^H, batched
    sig2 = np.linalg.eigvalsh(HT @ np.conj(np.swapaxes(HT, 1, 2)))[:, -1]
    sig2 = np.where(mask, sig2, -np.inf)
    k = int(np.argmax(sig2))
    if not sig2[k] > GAIN_FLOOR ** 2:
        return None
    triple = max_singular_triple(HT[k])
    if triple.sigma < GAIN_FLOOR:
        return None
    q, _ = _projected_unit(state.T, triple.v)
    return StreamChoice(k, triple.u, q, triple.sigma, H[k])


def lc_select_stream(state: AllocationState, model: PathModel, candidates=None) -> Optional[StreamChoice]:
    """Pick the (user, path) with the largest projected path weight.

    The weight of path ``l`` of user ``k`` is
    ``scale_k * |alpha_kl| * ||S_k a_MS|| * ||T a_BS||``. The equalizer is the
    normalized ``S_k a_MS`` and the precoder is matched to it through the
    full channel. Ties go to the lowest user, then the lowest path.
    """
    K, Lmax = model.gains.shape
    mask = _as_mask(candidates, K)
    bs_norm = np.linalg.norm(state.T @ model.a_bs, axis=0).reshape(K, Lmax)
    SA = state.S @ model.a_ms
    ms_norm = np.linalg.norm(SA, axis=1)
    weights = model.scale[:, None] * np.abs(model.gains) * ms_norm * bs_norm
    weights = np.where(mask[:, None], weights, -np.inf)
    k, l = np.unravel_index(int(np.argmax(weights)), weights.shape)
    w = weights[k, l]
    if not w > GAIN_FLOOR:
        return None
    g = SA[k, :, l] / ms_norm[k, l]
    Hk = model.channels[k]
    q, gain = _projected_unit(state.T, Hk.conj().T @ g)
    if gain < GAIN_FLOOR:
        return None
    return StreamChoice(int(k), g, q, float(w), Hk, path=int(l))


def update_state(state: AllocationState, user: int, g, q, channel) -> AllocationState:
    """Append stream ``(user, g, q)``; returns a new state."""
    g = np.asarray(g, dtype=complex)
    q = np.asarray(q, dtype=complex)
    S = state.S.copy()
    S[user] = _deflate(S[user], g)
    d = state.d_per_user.copy()
    d[user] += 1
    row = g.conj() @ np.asarray(channel)
    return AllocationState(
        T=state.T - np.outer(q, q.conj()),
        S=S,
        pi=state.pi + (int(user),),
        Q=np.column_stack([state.Q, q]),
        H_comp=np.vstack([state.H_comp, row]),
        G_rows=np.vstack([state.G_rows, g]),
        d_per_user=d,
    )


def _normalized_columns(X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    norms = np.linalg.norm(X, axis=0)
    if np.any(norms <= 0):
        raise NumericalError("zero-forcing produced a zero column")
    return X / norms, 1.0 / norms


def stream_gains(L, cond_limit: float = DEFAULT_COND_LIMIT) -> np.ndarray:
    """Subchannel gains after zero-forcing: inverse column norms of ``L^{-1}``."""
    Linv = invert_lower_triangular(L, cond_limit)
    return 1.0 / np.linalg.norm(Linv, axis=0)


def digital_second_stage(state: AllocationState, gammas,
                         cond_limit: float = DEFAULT_COND_LIMIT) -> np.ndarray:
    """Effective precoder ``Q L^{-1} Lambda Gamma^{1/2}`` for the current streams."""
    Linv = invert_lower_triangular(state.L, cond_limit)
    X, _ = _normalized_columns(state.Q @ Linv)
    return X * np.sqrt(np.asarray(gammas, dtype=float))


# ---------------------------------------------------------------------------
# selector modifier for phase-shifter receivers
# ---------------------------------------------------------------------------

Selector = Callable[[AllocationState, np.ndarray], Optional[StreamChoice]]


def apply_ms_analog_constraints(selector: Selector, n_rf_ms: int, n_ms: int) -> Selector:
    """Wrap ``selector`` for receivers with ``n_rf_ms`` RF chains and phase shifters.

    Users already holding ``n_rf_ms`` streams are dropped from the candidates,
    and the chosen equalizer is replaced by its constant-modulus version
    (entries ``1/sqrt(n_ms)``). The precoder is re-matched to the new
    equalizer, so the receivers need no digital post-processing.
    """
    if not 1 <= n_rf_ms <= n_ms:
        raise ValueError(f"need 1 <= n_rf_ms <= n_ms, got {n_rf_ms}, {n_ms}")
    modulus = 1.0 / np.sqrt(n_ms)

    def constrained(state: AllocationState, candidates=None) -> Optional[StreamChoice]:
        mask = _as_mask(candidates, state.num_users) & (state.d_per_user < n_rf_ms)
        if not mask.any():
            return None
        choice = selector(state, mask)
        if choice is None:
            return None
        g = phase_project(choice.g, modulus)
        q, gain = _projected_unit(state.T, choice.channel.conj().T @ g)
        if gain < GAIN_FLOOR:
            return None
        return replace(choice, g=g, q=q, gain=gain)

    return constrained


# ---------------------------------------------------------------------------
# allocation loop and runners
# ---------------------------------------------------------------------------

def allocate(selector: Selector, num_users: int, n_bs: int, n_ms: int, n_rf: int, P: float,
             cond_limit: float = DEFAULT_COND_LIMIT):
    """Greedy first stage with the sum-rate stopping rule.

    Returns
    -------
    state : AllocationState
        State after the last accepted stream.
    power : PowerAllocation or None
        Waterfilled powers of the accepted streams (``None`` if none).
    history : list of float
        Sum rate after each accepted stream.
    stop_reason : str
        ``"rf_limit"``, ``"rate"``, ``"no_gain"`` or ``"numerical"``.
    """
    if num_users < 1:
        raise ValueError("need at least one user")
    if not 1 <= n_rf <= n_bs:
        raise ValueError(f"need 1 <= n_rf <= n_bs, got n_rf={n_rf}, n_bs={n_bs}")
    if not P > 0:
        raise ValueError(f"power budget must be positive, got {P}")
    state = AllocationState.initial(num_users, n_bs, n_ms)
    power = None
    history: list[float] = []
    rate = 0.0
    stop = "rf_limit"
    for _ in range(n_rf):
        choice = selector(state, None)
        if choice is None:
            stop = "no_gain"
            break
        trial = update_state(state, choice.user, choice.g, choice.q, choice.channel)
        try:
            lam = stream_gains(trial.L, cond_limit)
        except NumericalError:
            stop = "numerical"
            break
        trial_power = waterfill(lam, P)
        trial_rate = trial_power.sum_rate
        if not trial_rate > rate:
            stop = "rate"
            break
        state, power, rate = trial, trial_power, trial_rate
        history.append(rate)
    return state, power, history, stop


def _empty_solution(num_users, n_bs, n_ms, P, metadata) -> PrecodingSolution:
    return PrecodingSolution(
        num_users, (), np.zeros((n_bs, 0), dtype=complex), np.zeros((n_ms, 0), dtype=complex),
        PowerAllocation(np.zeros(0), np.zeros(0), float(P)), metadata=metadata)


def _digital_solution(state, power, P, metadata, cond_limit) -> PrecodingSolution:
    n_bs, n_ms = state.T.shape[0], state.S.shape[1]
    if power is None:
        return _empty_solution(state.num_users, n_bs, n_ms, P, metadata)
    P_eff = digital_second_stage(state, power.powers, cond_limit)
    return PrecodingSolution(state.num_users, state.pi, P_eff, state.G_rows.T.copy(), power,
                             metadata=metadata)


def hybridize(state: AllocationState, P: float, cond_limit: float = DEFAULT_COND_LIMIT,
              metadata: Optional[dict] = None) -> PrecodingSolution:
    """Constant-modulus analog factor plus re-zero-forcing digital factor.

    ``P_A`` keeps the phases of ``Q`` at modulus ``1/sqrt(N_BS)``; the digital
    part inverts the distorted triangular factor ``L Q^H P_A``. If that factor
    is ill-conditioned the last stream is dropped and the step repeated; the
    number of such retries is stored in ``metadata["hybrid_retries"]``.
    """
    metadata = dict(metadata or {})
    n_bs, n_ms = state.T.shape[0], state.S.shape[1]
    retries = 0
    d = state.step
    while d > 0:
        sub = state.prefix(d) if d < state.step else state
        Q = sub.Q
        P_A = phase_project(Q, 1.0 / np.sqrt(n_bs))
        B = sub.L @ Q.conj().T @ P_A
        try:
            Binv = guarded_inverse(B, cond_limit)
            _, lam = _normalized_columns(P_A @ Binv)
        except NumericalError:
            retries += 1
            d -= 1
            continue
        power = waterfill(lam, P)
        P_D = Binv * (lam * np.sqrt(power.powers))
        metadata["hybrid_retries"] = retries
        return PrecodingSolution(sub.num_users, sub.pi, P_A @ P_D, sub.G_rows.T.copy(), power,
                                 analog=P_A, digital=P_D, metadata=metadata)
    metadata["hybrid_retries"] = retries
    return _empty_solution(state.num_users, n_bs, n_ms, P, metadata)


def _lisa_selector(H: np.ndarray) -> Selector:
    return lambda state, candidates=None: lisa_select_stream(state, H, candidates)


def _lc_selector(model: PathModel) -> Selector:
    return lambda state, candidates=None: lc_select_stream(state, model, candidates)


def _run(selector: Selector, H: np.ndarray, n_rf: int, P: float, hybrid: bool,
         n_rf_ms: Optional[int], cond_limit: float) -> PrecodingSolution:
    K, n_ms, n_bs = H.shape
    if n_rf_ms is not None:
        selector = apply_ms_analog_constraints(selector, n_rf_ms, n_ms)
    state, power, history, stop = allocate(selector, K, n_bs, n_ms, n_rf, P, cond_limit)
    meta = {"stop_reason": stop, "rate_history": history}
    if hybrid:
        return hybridize(state, P, cond_limit, meta)
    return _digital_solution(state, power, P, meta, cond_limit)


def _channel_stack(channels) -> np.ndarray:
    H = np.asarray(channels, dtype=complex)
    if H.ndim != 3 or H.shape[0] == 0:
        raise ValueError("channels must be a non-empty stack of (N_MS, N_BS) matrices")
    return H


def _path_model(path_sets, bs_geom, ms_geom) -> PathModel:
    if isinstance(path_sets, PathModel):
        return path_sets
    if not path_sets:
        raise ValueError("need at least one path set")
    if bs_geom is None or ms_geom is None:
        raise ValueError("array geometries are required with raw path sets")
    return PathModel.from_path_sets(path_sets, bs_geom, ms_geom)


def run_lisa(channels, n_rf: int, P: float, *, n_rf_ms: Optional[int] = None,
             cond_limit: float = DEFAULT_COND_LIMIT) -> PrecodingSolution:
    """Fully digital LISA on a stack of channel matrices ``(K, N_MS, N_BS)``."""
    H = _channel_stack(channels)
    return _run(_lisa_selector(H), H, n_rf, P, False, n_rf_ms, cond_limit)


def run_h_lisa(channels, n_rf: int, P: float, *, n_rf_ms: Optional[int] = None,
               cond_limit: float = DEFAULT_COND_LIMIT) -> PrecodingSolution:
    """Hybrid LISA: LISA allocation, then constant-modulus analog precoder."""
    H = _channel_stack(channels)
    return _run(_lisa_selector(H), H, n_rf, P, True, n_rf_ms, cond_limit)


def run_lc_lisa(path_sets, n_rf: int, P: float, bs_geom: Optional[ArrayGeometry] = None,
                ms_geom: Optional[ArrayGeometry] = None, *, n_rf_ms: Optional[int] = None,
                cond_limit: float = DEFAULT_COND_LIMIT) -> PrecodingSolution:
    """Low-complexity LISA driven by path parameters.

    ``path_sets`` is a list of :class:`PathSet` (geometries required) or a
    prebuilt :class:`PathModel`.
    """
    model = _path_model(path_sets, bs_geom, ms_geom)
    return _run(_lc_selector(model), model.channels, n_rf, P, False, n_rf_ms, cond_limit)


def run_lc_h_lisa(path_sets, n_rf: int, P: float, bs_geom: Optional[ArrayGeometry] = None,
                  ms_geom: Optional[ArrayGeometry] = None, *, n_rf_ms: Optional[int] = None,
                  cond_limit: float = DEFAULT_COND_LIMIT) -> PrecodingSolution:
    """Low-complexity hybrid LISA."""
    model = _path_model(path_sets, bs_geom, ms_geom)
    return _run(_lc_selector(model), model.channels, n_rf, P, True, n_rf_ms, cond_limit)
