"""Reference schemes: 2SMUHPA, block diagonalization and the DPC sum capacity."""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations
from typing import Optional, Sequence

import numpy as np

from .channel import ArrayGeometry, PathSet, path_responses
from .numerics import DEFAULT_COND_LIMIT, NumericalError, guarded_inverse
from .precoding import PowerAllocation, PrecodingSolution, waterfill

__all__ = [
    "BeamsteeringCodebooks",
    "CapacityResult",
    "BaselineFailure",
    "build_path_codebooks",
    "run_2smuhpa",
    "BDCandidate",
    "bd_candidates",
    "run_bd",
    "dpc_sum_capacity",
]


class BaselineFailure(NumericalError):
    """A baseline could not produce a solution for this channel draw."""


@dataclass(frozen=True)
class BeamsteeringCodebooks:
    bs: tuple[np.ndarray, ...]   # per user, (N_BS, L_k) columns
    ms: tuple[np.ndarray, ...]   # per user, (N_MS, L_k) columns

    def __len__(self) -> int:
        return len(self.bs)


@dataclass(frozen=True)
class CapacityResult:
    capacity: float
    iterations: int
    converged: bool
    history: tuple[float, ...] = ()


def build_path_codebooks(path_sets: Sequence[PathSet], bs_geom: ArrayGeometry,
                         ms_geom: ArrayGeometry) -> BeamsteeringCodebooks:
    """Per-user codebooks made of the true path response vectors."""
    if not path_sets:
        raise ValueError("need at least one path set")
    ms, bs = zip(*(path_responses(ps, bs_geom, ms_geom) for ps in path_sets))
    return BeamsteeringCodebooks(tuple(bs), tuple(ms))


def run_2smuhpa(channels, codebooks: BeamsteeringCodebooks, P: float,
                power_mode: str = "equal",
                cond_limit: float = DEFAULT_COND_LIMIT) -> PrecodingSolution:
    """Two-stage multi-user hybrid precoding, one stream per user.

    Stage 1 picks, per user, the codebook pair maximizing ``|g^H H_k p|``.
    Stage 2 zero-forces the ``K x K`` effective channel digitally.

    Parameters
    ----------
    power_mode : {"equal", "waterfilling"}
        ``P/K`` per stream, or waterfilling over the normalized gains.

    Raises
    ------
    BaselineFailure
        If the effective channel cannot be inverted.
    """
    if power_mode not in ("equal", "waterfilling"):
        raise ValueError(f"unknown power mode {power_mode!r}")
    H = np.asarray(channels, dtype=complex)
    K, n_ms, n_bs = H.shape
    if len(codebooks) != K:
        raise ValueError("one codebook pair per user required")
    G = np.empty((n_ms, K), dtype=complex)
    P_A = np.empty((n_bs, K), dtype=complex)
    for k in range(K):
        gains = np.abs(codebooks.ms[k].conj().T @ H[k] @ codebooks.bs[k])
        i, j = np.unravel_index(int(np.argmax(gains)), gains.shape)
        G[:, k] = codebooks.ms[k][:, i]
        P_A[:, k] = codebooks.bs[k][:, j]
    H_eff = np.einsum("mk,kmn->kn", G.conj(), H) @ P_A
    try:
        H_inv = guarded_inverse(H_eff, cond_limit)
    except NumericalError as exc:
        raise BaselineFailure(f"effective channel not invertible: {exc}") from exc
    lam = 1.0 / np.linalg.norm(P_A @ H_inv, axis=0)
    if power_mode == "equal":
        power = PowerAllocation(lam, np.full(K, P / K), float(P))
    else:
        power = waterfill(lam, P)
    P_D = H_inv * (lam * np.sqrt(power.powers))
    return PrecodingSolution(K, tuple(range(K)), P_A @ P_D, G, power, analog=P_A, digital=P_D,
                             metadata={"power_mode": power_mode})


@dataclass(frozen=True)
class BDCandidate:
    """Eigenmodes of one user subset under block diagonalization."""

    users: tuple[int, ...]
    sigmas: np.ndarray                # all modes, grouped by user
    owners: np.ndarray                # user index of each mode
    V: np.ndarray = field(repr=False)  # (N_BS, modes) precoding directions
    U: np.ndarray = field(repr=False)  # (N_MS, modes) receive directions


def bd_candidates(channels, n_rf: int) -> list[BDCandidate]:
    """Eigenmodes of every user subset of size ``1 .. n_rf // N_MS``.

    Each user's channel is projected onto the nullspace of the other
    selected users' channels; all ``N_MS`` modes of every selected user are
    kept. Subsets come in ``itertools.combinations`` order.
    """
    H = np.asarray(channels, dtype=complex)
    K, n_ms, n_bs = H.shape
    if n_rf % n_ms:
        raise ValueError(f"N_MS={n_ms} must divide N_RF={n_rf}")
    k_max = min(K, n_rf // n_ms)
    if k_max * n_ms > n_bs:
        raise ValueError("not enough transmit antennas for the largest subset")
    out = []
    for size in range(1, k_max + 1):
        for users in combinations(range(K), size):
            sig, own, Vs, Us = [], [], [], []
            for k in users:
                others = [j for j in users if j != k]
                Hk = H[k]
                if others:
                    basis, _ = np.linalg.qr(H[others].reshape(-1, n_bs).conj().T)
                    Hk = Hk - (Hk @ basis) @ basis.conj().T
                U, s, Vh = np.linalg.svd(Hk, full_matrices=False)
                sig.append(s)
                own.append(np.full(s.size, k))
                Vs.append(Vh.conj().T)
                Us.append(U)
            out.append(BDCandidate(users, np.concatenate(sig), np.concatenate(own),
                                   np.hstack(Vs), np.hstack(Us)))
    return out


def _bd_power(sigmas: np.ndarray, P: float) -> PowerAllocation:
    live = sigmas > 1e-12 * max(float(np.max(sigmas)), 1e-300)
    powers = np.zeros(sigmas.size)
    if live.any():
        powers[live] = waterfill(sigmas[live], P).powers
    return PowerAllocation(sigmas, powers, float(P))


def run_bd(channels, P: float, n_rf: int,
           candidates: Optional[list[BDCandidate]] = None) -> PrecodingSolution:
    """Block diagonalization with exhaustive user-subset search.

    Pass ``candidates`` from :func:`bd_candidates` to reuse the eigenmodes
    across several power budgets. The earliest subset wins ties.
    """
    H = np.asarray(channels, dtype=complex)
    K = H.shape[0]
    if candidates is None:
        candidates = bd_candidates(H, n_rf)
    best, best_power, best_rate = None, None, -np.inf
    for cand in candidates:
        power = _bd_power(cand.sigmas, P)
        rate = power.sum_rate
        if rate > best_rate:
            best, best_power, best_rate = cand, power, rate
    order = np.argsort(best.owners, kind="stable")
    return PrecodingSolution(
        K, tuple(int(k) for k in best.owners[order]),
        (best.V * np.sqrt(best_power.powers))[:, order], best.U[:, order],
        PowerAllocation(best_power.gains[order], best_power.powers[order], float(P)),
        metadata={"users": best.users, "subsets_evaluated": len(candidates)})


def _mac_waterfill(eigs: list[np.ndarray], P: float) -> list[np.ndarray]:
    """Joint waterfilling over the eigenvalues of several users."""
    flat = np.concatenate(eigs)
    powers = np.zeros(flat.size)
    live = flat > 1e-14 * max(float(flat.max()), 1e-300)
    if live.any():
        powers[live] = waterfill(np.sqrt(flat[live]), P).powers
    return np.split(powers, np.cumsum([e.size for e in eigs])[:-1])


def _dpc_steps(K: int) -> tuple[float, ...]:
    return tuple(sorted({1.0, 0.5, 0.25, 1.0 / K}, reverse=True))


def dpc_sum_capacity(channels, P: float, tol: float = 1e-6, max_iters: int = 1000) -> CapacityResult:
    """Sum capacity of the MIMO broadcast channel (sum-power iterative waterfilling).

    Works on the dual multiple-access channel with transmit covariances
    ``Q_k`` (``N_MS x N_MS``) under ``sum tr(Q_k) <= P``. Each iteration
    waterfills jointly against the interference-plus-noise of the current
    covariances and moves toward the waterfilling solution. A step of ``1/K``
    keeps the objective nondecreasing; longer steps are used when they
    give a larger objective.
    """
    if not P > 0:
        raise ValueError(f"power budget must be positive, got {P}")
    H = np.asarray(channels, dtype=complex)
    K, n_ms, n_bs = H.shape
    Hh = np.conj(np.swapaxes(H, 1, 2))           # dual MAC channels (N_BS, N_MS)
    Qs = np.broadcast_to(np.eye(n_ms) * (P / (K * n_ms)), (K, n_ms, n_ms)).astype(complex)

    Hh_flat = np.concatenate(list(Hh), axis=1)   # (N_BS, K N_MS)
    eye_ms = np.eye(n_ms)

    def covariance(Qs):
        return np.eye(n_bs) + Hh_flat @ (Qs @ H).reshape(K * n_ms, n_bs)

    def log2det(Z):
        return float(2.0 * np.sum(np.log(np.diag(np.linalg.cholesky(Z)).real)) / np.log(2.0))

    Z = covariance(Qs)
    current = log2det(Z)
    history = [current]
    converged = False
    it = 0
    for it in range(1, max_iters + 1):
        # effective channel of user k against the others, H_k Z_k^{-1} H_k^H, via
        # A_k = H_k Z^{-1} H_k^H and the identity M_k = (I - A_k Q_k)^{-1} A_k
        A = H @ np.linalg.inv(Z) @ Hh
        M = np.linalg.solve(eye_ms - A @ Qs, A)
        w, V = np.linalg.eigh((M + np.conj(np.swapaxes(M, 1, 2))) / 2)
        powers = np.stack(_mac_waterfill(list(np.maximum(w, 0.0)), P))
        S = (V * powers[:, None, :]) @ np.conj(np.swapaxes(V, 1, 2))
        # the objective is concave along Q -> S; the 1/K step alone already
        # guarantees ascent, longer steps are taken when they do better
        best = None
        for t in _dpc_steps(K):
            Qt = Qs + t * (S - Qs)
            Zt = covariance(Qt)
            val = log2det(Zt)
            if best is None or val > best[0]:
                best = (val, Qt, Zt)
        new, Qs, Z = best
        history.append(new)
        if abs(new - current) <= tol * max(abs(new), 1e-12):
            current = new
            converged = True
            break
        current = new
    return CapacityResult(max(current, 0.0), it, converged, tuple(history))
