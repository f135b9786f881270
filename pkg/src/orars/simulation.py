"""Monte-Carlo study of rank rescoring versus a noisy regressor.

A fictitious regressor outputs ``s = y + e`` for true scores ``y ~ U(0, N)``
and errors ``e`` drawn uniformly from ``[-M, M]`` or from ``Normal(0, M)``.
Each point is then rescored against the other ``C - 1`` points: it gets
the true score found at its own rank of ``s`` among the others.  The
closed forms for the uniform case live next to the simulator so they can
be checked against it.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .exceptions import InvalidConfigError, OutOfDomainError

DISTRIBUTIONS = ("uniform", "normal")
DEFAULT_C_AXIS = (50, 100, 200, 500, 1000, 2000, 5000)
DEFAULT_M_AXIS = (1, 2, 3, 5, 10, 20, 50)


@dataclass(frozen=True)
class SimConfig:
    N: float = 100.0
    M: float = 50.0
    C: int = 1000
    error_dist: str = "uniform"
    repeats: int = 20
    seed: int = 0

    def __post_init__(self):
        if not self.N > 0:
            raise InvalidConfigError(f"N must be positive, got {self.N}")
        if self.M < 0:
            raise InvalidConfigError(f"M must be nonnegative, got {self.M}")
        if self.C < 2:
            raise InvalidConfigError(f"C must be at least 2, got {self.C}")
        if self.error_dist not in DISTRIBUTIONS:
            raise InvalidConfigError(f"error_dist must be one of {DISTRIBUTIONS}")
        if self.repeats < 1:
            raise InvalidConfigError("repeats must be positive")


@dataclass(frozen=True)
class SimResult:
    mae_reg: float
    mae_sorars: float
    mae_gain: float
    xi_empirical: float
    config: SimConfig
    seed: int

    def to_row(self) -> dict:
        return {
            "mae_reg": self.mae_reg,
            "mae_sorars": self.mae_sorars,
            "mae_gain": self.mae_gain,
            "xi_empirical": self.xi_empirical,
        }


@dataclass
class GainGrid:
    C_values: tuple
    M_values: tuple
    gain: np.ndarray  # shape (len(C_values), len(M_values))
    error_dist: str
    repeats: int
    seed: int
    N: float = 100.0
    metadata: dict = field(default_factory=dict)

    def to_csv(self, path) -> None:
        lines = ["C\\M," + ",".join(_fmt(m) for m in self.M_values)]
        for c, row in zip(self.C_values, self.gain):
            lines.append(f"{int(c)}," + ",".join(repr(float(v)) for v in row))
        with open(path, "w", newline="") as fh:
            fh.write("\n".join(lines) + "\n")

    def sidecar(self) -> dict:
        return {
            "seed": self.seed,
            "repeats": self.repeats,
            "error_dist": self.error_dist,
            "N": self.N,
            "C_values": [int(c) for c in self.C_values],
            "M_values": [float(m) for m in self.M_values],
        }


def _fmt(x) -> str:
    return str(int(x)) if float(x).is_integer() else repr(float(x))


def draw_errors(rng: np.random.Generator, dist: str, M: float, size: int) -> np.ndarray:
    if dist == "uniform":
        return rng.uniform(-M, M, size)
    if dist == "normal":
        return rng.normal(0.0, M, size)
    raise InvalidConfigError(f"unknown error distribution {dist!r}")


def rescore_leave_one_out(y, s) -> np.ndarray:
    """Rescore every point using all other points as anchors.

    Point i is compared with each other point j by ``s_i > s_j``; the count
    of wins indexes (clamped to ``C - 2``) the ascending true scores of the
    others.  Vectorized: the win count is a sorted search over ``s`` and
    dropping ``y_i`` from the sorted ``y`` shifts indices at or above its
    own position by one.
    """
    y = np.asarray(y, dtype=np.float64)
    s = np.asarray(s, dtype=np.float64)
    C = y.size
    y_sorted = np.sort(y)
    own_pos = np.searchsorted(y_sorted, y, side="left")
    wins = np.searchsorted(np.sort(s), s, side="left")
    k = np.minimum(wins, C - 2)
    return np.where(k < own_pos, y_sorted[k], y_sorted[np.minimum(k + 1, C - 1)])


def count_inversions(a) -> int:
    """Number of pairs i < j with ``a[i] > a[j]`` (strict), O(n log^2 n)."""
    vals = np.unique(np.asarray(a), return_inverse=True)[1].astype(np.int64).reshape(-1)
    n = vals.size
    K = n + 1
    pos = np.arange(n)
    total = 0
    width = 1
    while width < n:
        block = pos // (2 * width)
        in_left = (pos % (2 * width)) < width
        keys = block * K + vals
        left_keys = keys[in_left]  # sorted: blocks ascending, each half sorted
        r_keys = keys[~in_left]
        r_block = block[~in_left]
        upper = np.searchsorted(left_keys, (r_block + 1) * K, side="left")
        not_greater = np.searchsorted(left_keys, r_keys, side="right")
        total += int(np.sum(upper - not_greater))
        vals = np.sort(keys) - block * K
        width *= 2
    return total


def misorder_rate(y, s) -> float:
    """Fraction of pairs ordered differently by ``y`` and ``s``; tied pairs are excluded."""
    y = np.asarray(y, dtype=np.float64)
    s = np.asarray(s, dtype=np.float64)
    order = np.lexsort((s, y))
    discordant = count_inversions(s[order])

    def tied(*cols):
        _, counts = np.unique(np.stack(cols, axis=1), axis=0, return_counts=True)
        return int(np.sum(counts * (counts - 1) // 2))

    n = y.size
    usable = n * (n - 1) // 2 - tied(y) - tied(s) + tied(y, s)
    return discordant / usable if usable else 0.0


def _simulate(config: SimConfig, rng: np.random.Generator, seed: int) -> SimResult:
    y = rng.uniform(0.0, config.N, config.C)
    e = draw_errors(rng, config.error_dist, config.M, config.C)
    s = y + e
    mae_reg = float(np.mean(np.abs(e)))
    rescored = rescore_leave_one_out(y, s)
    mae_sorars = float(np.mean(np.abs(rescored - y)))
    return SimResult(mae_reg, mae_sorars, mae_reg - mae_sorars, misorder_rate(y, s), config, seed)


def simulate_once(config: SimConfig, rng=None) -> SimResult:
    """One draw of ``C`` points; ``rng`` defaults to one seeded with ``config.seed``."""
    if rng is None:
        rng = np.random.default_rng(config.seed)
    return _simulate(config, rng, config.seed)


def simulate(config: SimConfig) -> list[SimResult]:
    """``config.repeats`` independent draws, each on its own spawned stream."""
    children = np.random.SeedSequence(config.seed).spawn(config.repeats)
    return [_simulate(config, np.random.default_rng(child), config.seed) for child in children]


def summarize(results: list[SimResult]) -> dict:
    arr = {k: np.array([getattr(r, k) for r in results]) for k in ("mae_reg", "mae_sorars", "mae_gain", "xi_empirical")}
    out = {}
    for key, vals in arr.items():
        out[f"mean_{key}"] = float(np.mean(vals))
        out[f"std_{key}"] = float(np.std(vals, ddof=1)) if vals.size > 1 else 0.0
    out["fraction_gain_positive"] = float(np.mean(arr["mae_gain"] > 0))
    out["repeats"] = len(results)
    return out


def cell_seed(seed: int, c_index: int, m_index: int) -> int:
    ss = np.random.SeedSequence([int(seed), int(c_index), int(m_index)])
    return int(ss.generate_state(1, dtype=np.uint32)[0])


def gain_grid(C_values=DEFAULT_C_AXIS, M_values=DEFAULT_M_AXIS, error_dist: str = "uniform",
              repeats: int = 20, seed: int = 0, N: float = 100.0) -> GainGrid:
    """Mean MAE gain over ``repeats`` for every (C, M) cell.

    Each cell runs :func:`simulate` with seed ``cell_seed(seed, i, j)``, so a
    cell's value does not depend on the other axis entries.
    """
    C_values, M_values = tuple(C_values), tuple(M_values)
    if not C_values or not M_values:
        raise InvalidConfigError("grid axes must be nonempty")
    gain = np.empty((len(C_values), len(M_values)))
    for i, C in enumerate(C_values):
        for j, M in enumerate(M_values):
            cfg = SimConfig(N=N, M=float(M), C=int(C), error_dist=error_dist, repeats=repeats,
                            seed=cell_seed(seed, i, j))
            gain[i, j] = math.fsum(r.mae_gain for r in simulate(cfg)) / repeats
    return GainGrid(C_values, M_values, gain, error_dist, repeats, seed, N)


def analytic_mae_reg(M: float) -> float:
    """Expected |e| for ``e ~ U(-M, M)``."""
    if M < 0:
        raise InvalidConfigError("M must be nonnegative")
    return M / 2.0


def _check_domain(N: float, M: float) -> None:
    if not N > 0 or M < 0:
        raise InvalidConfigError("need N > 0 and M >= 0")
    if 2 * M > N:
        raise OutOfDomainError(f"closed form holds only for 2M <= N (got N={N}, M={M})")


def analytic_xi(N: float, M: float) -> float:
    """Misorder probability ``(2NM - M^2) / (3N^2)`` for uniform scores and errors."""
    _check_domain(N, M)
    return (2.0 * N * M - M * M) / (3.0 * N * N)


def analytic_mae_sorars(N: float, M: float) -> float:
    """Rescored MAE under the mixing model, ``xi * N / 2``."""
    return analytic_xi(N, M) * N / 2.0


def printed_mae_sorars(N: float, M: float) -> float:
    """The alternative closed form ``M/3 - M^2/N``, reported for comparison only."""
    _check_domain(N, M)
    return M / 3.0 - M * M / N


def monte_carlo_xi(N: float, M: float, dist: str = "uniform", trials: int = 1_000_000, seed: int = 0) -> float:
    """Direct estimate of the misorder probability from independent pairs.

    Draws ``(y1, y2, e1, e2)`` per trial and counts pairs whose order flips;
    trials where either difference is exactly zero are excluded.
    """
    rng = np.random.default_rng(seed)
    y1 = rng.uniform(0.0, N, trials)
    y2 = rng.uniform(0.0, N, trials)
    e1 = draw_errors(rng, dist, M, trials)
    e2 = draw_errors(rng, dist, M, trials)
    dy = np.sign(y1 - y2)
    ds = np.sign((y1 + e1) - (y2 + e2))
    valid = (dy != 0) & (ds != 0)
    if not np.any(valid):
        return 0.0
    return float(np.mean(dy[valid] != ds[valid]))


def analytic_report(N: float, M: float, C: int = 10_000, repeats: int = 5, seed: int = 0) -> dict:
    """Closed forms and uniform-error simulation side by side for one (N, M)."""
    row = {"N": float(N), "M": float(M)}
    try:
        row["xi_analytic"] = analytic_xi(N, M)
        row["mae_sorars_xi_substituted"] = analytic_mae_sorars(N, M)
        row["mae_sorars_printed"] = printed_mae_sorars(N, M)
        row["in_domain"] = True
    except OutOfDomainError:
        row.update(xi_analytic=None, mae_sorars_xi_substituted=None, mae_sorars_printed=None, in_domain=False)
    row["mae_reg_analytic"] = analytic_mae_reg(M)
    summary = summarize(simulate(SimConfig(N=N, M=M, C=C, repeats=repeats, seed=seed)))
    row["mae_reg_empirical"] = summary["mean_mae_reg"]
    row["mae_sorars_empirical"] = summary["mean_mae_sorars"]
    row["mae_gain_empirical"] = summary["mean_mae_gain"]
    row["xi_empirical"] = summary["mean_xi_empirical"]
    return row


def config_dict(config: SimConfig) -> dict:
    return asdict(config)
