"""Nonlinear time-series measures: sample entropy, multiscale entropy,
and the largest Lyapunov exponent (Rosenstein method)."""

import numpy as np
from scipy.spatial import cKDTree

from ..errors import InsufficientDataError


def _templates(x, length, count):
    """The first ``count`` windows of the given length."""
    view = np.lib.stride_tricks.sliding_window_view(x, length)
    return view[:count]


def _pair_count(templates, r):
    """Ordered pairs (i != j) within Chebyshev distance r."""
    tree = cKDTree(templates)
    total = tree.count_neighbors(tree, r, p=np.inf)
    return int(total) - templates.shape[0]


def sample_entropy(series, m: int = 2, r: float = None) -> float:
    """Sample entropy: -ln(A/B) over Chebyshev template matches.

    ``r`` defaults to 0.2 * population std of the series. Both template
    counts use the N-m windows that can be extended to length m+1, with
    self-matches excluded. If no length-(m+1) matches exist the degenerate
    cap ln((N-m-1)*(N-m)) is returned; a zero-variance series returns 0.
    """
    x = np.asarray(series, dtype=np.float64)
    n = x.size
    if n < m + 2:
        raise InsufficientDataError(f"sample entropy needs >= {m + 2} samples, got {n}")
    if r is None:
        sigma = float(np.std(x))
        if sigma <= 0.0:
            return 0.0
        r = 0.2 * sigma
    # both lengths use the same N-m templates (those extendable to m+1)
    b = _pair_count(_templates(x, m, n - m), r)
    a = _pair_count(_templates(x, m + 1, n - m), r)
    if a == 0 or b == 0:
        return float(np.log((n - m - 1) * (n - m)))
    return float(-np.log(a / b))


def coarse_grain(series, tau: int):
    """Non-overlapping means of length tau; output length floor(N/tau)."""
    x = np.asarray(series, dtype=np.float64)
    n = (x.size // tau) * tau
    return x[:n].reshape(-1, tau).mean(axis=1)


def multiscale_entropy(series, scales=(1, 2, 3, 4, 5), m: int = 2,
                       r: float = None) -> float:
    """Mean sample entropy over coarse-grained copies at each scale.

    The tolerance is fixed from the original series (0.2 * its std) so all
    scales are compared against the same yardstick.
    """
    x = np.asarray(series, dtype=np.float64)
    max_tau = max(scales)
    if x.size < max_tau * (m + 2):
        raise InsufficientDataError(
            f"multiscale entropy needs >= {max_tau * (m + 2)} samples, got {x.size}")
    if r is None:
        sigma = float(np.std(x))
        if sigma <= 0.0:
            return 0.0
        r = 0.2 * sigma
    values = [sample_entropy(coarse_grain(x, tau), m=m, r=r) for tau in scales]
    return float(np.mean(values))


def _mean_period(x) -> float:
    """Mean period in samples from the spectral mean frequency."""
    spec = np.abs(np.fft.rfft(x - x.mean())) ** 2
    freqs = np.fft.rfftfreq(x.size)
    power = spec[1:]
    if power.sum() <= 0:
        return 1.0
    mean_freq = float((freqs[1:] * power).sum() / power.sum())
    if mean_freq <= 0:
        return 1.0
    return 1.0 / mean_freq


def lyapunov_exponent(series, embed_m: int = 3, delay: int = 1,
                      n_steps: int = 10) -> float:
    """Largest Lyapunov exponent in nats/sample (Rosenstein method).

    Each embedded point is paired with its nearest neighbor at least one
    mean period away in time; the slope of the mean log divergence over the
    first ``n_steps`` steps estimates the exponent. Constant input returns
    0 by convention.
    """
    x = np.asarray(series, dtype=np.float64)
    if x.size < 200:
        raise InsufficientDataError(
            f"lyapunov estimate needs >= 200 samples, got {x.size}")
    if float(np.std(x)) <= 0.0:
        return 0.0

    m = embed_m
    span = (m - 1) * delay
    n_pts = x.size - span
    emb = np.column_stack([x[i * delay: i * delay + n_pts] for i in range(m)])

    window = max(1, int(np.ceil(_mean_period(x))))
    tree = cKDTree(emb)
    k = min(n_pts, 2 * window + 8)
    idx = np.arange(n_pts)
    neighbor = np.full(n_pts, -1, dtype=np.int64)
    while True:
        _, nbrs = tree.query(emb, k=k)
        valid = np.abs(nbrs - idx[:, None]) > window
        has = valid.any(axis=1)
        first = np.argmax(valid, axis=1)
        neighbor[has] = nbrs[has, first[has]]
        if has.all() or k == n_pts:
            break
        k = min(n_pts, k * 2)

    usable = neighbor >= 0
    i_idx, j_idx = idx[usable], neighbor[usable]
    curve = np.empty(n_steps)
    for step in range(n_steps):
        in_range = (i_idx + step < n_pts) & (j_idx + step < n_pts)
        if not in_range.any():
            curve[step] = curve[step - 1] if step else 0.0
            continue
        d = np.linalg.norm(emb[i_idx[in_range] + step] - emb[j_idx[in_range] + step],
                           axis=1)
        curve[step] = float(np.mean(np.log(np.maximum(d, 1e-12))))
    slope = np.polyfit(np.arange(n_steps, dtype=float), curve, 1)[0]
    return float(slope)
