"""Uniform linear array model, angular spread functions, and covariances.

A half-wavelength ULA (spacing set by the uplink carrier) observes a channel
whose angular power density lives on the sine-of-angle axis xi in [-1, 1].
Densities are discretized on a uniform grid of G points, covariances are
Hermitian Toeplitz and represented by their first column, and all randomness
is driven by explicit seeds.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import NotHermitianError, NotPsdError, ShapeMismatchError

SPEED_OF_LIGHT = 299_792_458.0

UL = "ul"
DL = "dl"

_RECORD_VERSION = 1
_MAGIC_ASF = b"ASF1"
_MAGIC_COV = b"TPC1"

__all__ = [
    "SPEED_OF_LIGHT",
    "UL",
    "DL",
    "UlaModel",
    "Asf",
    "GroupSparseAsfSpec",
    "HermitianToeplitz",
    "ChannelBatch",
    "array_response",
    "synth_cov",
    "sample_asf",
    "sample_channels",
    "sample_cov",
    "toeplitzify",
    "cov_factor",
    "save_asf",
    "load_asf",
    "save_cov",
    "load_cov",
    "asf_to_csv",
    "cov_to_csv",
]


def _carrier_scale(model, carrier):
    c = str(carrier).lower()
    if c == UL:
        return 1.0
    if c == DL:
        return model.carrier_ratio
    raise ValueError(f"carrier must be 'ul' or 'dl', got {carrier!r}")


@dataclass(frozen=True)
class UlaModel:
    """Array geometry and duplex carriers.

    Parameters
    ----------
    num_antennas : int
        Number of array elements M.
    grid_size : int
        Number of angular grid points G, at least 2*M so the uplink
        dictionary is a (cropped) oversampled DFT.
    f_ul, f_dl : float
        Uplink / downlink carrier frequencies in Hz. Element spacing is
        half the uplink wavelength.
    """

    num_antennas: int
    grid_size: int
    f_ul: float = 1.95e9
    f_dl: float = 2.14e9

    def __post_init__(self):
        if self.num_antennas < 1:
            raise ValueError("num_antennas must be >= 1")
        if self.grid_size < 2 * self.num_antennas:
            raise ValueError("grid_size must be >= 2 * num_antennas")
        if self.f_ul <= 0 or self.f_dl <= 0:
            raise ValueError("carrier frequencies must be positive")

    @property
    def carrier_ratio(self):
        """Downlink-to-uplink carrier ratio f_dl / f_ul."""
        return self.f_dl / self.f_ul

    @property
    def spacing(self):
        """Element spacing in meters, half the uplink wavelength."""
        return SPEED_OF_LIGHT / (2.0 * self.f_ul)

    def grid(self):
        """Angular grid xi_i = -1 + 2*i/G for i = 0..G-1."""
        g = self.grid_size
        return -1.0 + 2.0 * np.arange(g) / g


def _readonly(a):
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Asf:
    """Discretized angular spread function: nonnegative weights summing to 1."""

    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.ndim != 1 or w.size == 0:
            raise ShapeMismatchError("weights must be a nonempty 1-D array")
        if np.any(w < 0):
            raise ValueError("weights must be nonnegative")
        total = w.sum()
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"weights must sum to 1, got {total!r}")
        object.__setattr__(self, "weights", _readonly(w))

    @classmethod
    def from_weights(cls, weights):
        """Normalize a nonnegative vector to unit mass and wrap it."""
        w = np.asarray(weights, dtype=float)
        total = w.sum()
        if not np.isfinite(total) or total <= 0:
            raise ValueError("cannot normalize weights with nonpositive mass")
        return cls(w / total)


@dataclass(frozen=True)
class GroupSparseAsfSpec:
    """Ensemble of group-sparse densities: g uniform bumps of width <= max_width."""

    num_groups: int = 2
    max_width: float = 0.4
    shape: str = "uniform"

    def __post_init__(self):
        if self.num_groups < 1:
            raise ValueError("num_groups must be >= 1")
        if not 0.0 < self.max_width <= 2.0:
            raise ValueError("max_width must be in (0, 2]")
        if self.shape != "uniform":
            raise ValueError(f"unsupported group shape {self.shape!r}")


@dataclass(frozen=True)
class HermitianToeplitz:
    """Hermitian Toeplitz matrix stored as its first column.

    Entry (p, q) of the full matrix is first_column[p - q] for p >= q and
    the conjugate for p < q, so the leading entry must be real.
    """

    first_column: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.first_column, dtype=complex)
        if c.ndim != 1 or c.size == 0:
            raise ShapeMismatchError("first_column must be a nonempty 1-D array")
        scale = np.linalg.norm(c)
        if abs(c[0].imag) > 1e-9 * max(scale, 1e-300):
            raise NotHermitianError("leading entry of first_column must be real")
        c = c.copy()
        c[0] = c[0].real
        object.__setattr__(self, "first_column", _readonly(c))

    @property
    def order(self):
        return self.first_column.size

    def full(self):
        """Expand to the dense M x M matrix."""
        c = self.first_column
        idx = np.subtract.outer(np.arange(c.size), np.arange(c.size))
        vals = c[np.abs(idx)]
        return np.where(idx >= 0, vals, np.conj(vals))

    def trace(self):
        return self.order * self.first_column[0].real


@dataclass
class ChannelBatch:
    """Noisy snapshots y = h + z with per-entry noise variance recorded."""

    snapshots: np.ndarray
    noise_variance: float
    snr_db: float = field(default=np.nan)


def array_response(model, xi, carrier):
    """Array response vector at sine-angle xi for one carrier.

    Entry k (0-based) is exp(1j * pi * k * r * xi) where the carrier
    scale r is 1 on the uplink and f_dl/f_ul on the downlink; the phase
    rescales with carrier because the element spacing is fixed at half the
    uplink wavelength.

    Parameters
    ----------
    model : UlaModel
    xi : float
        Sine of the angle of arrival, in [-1, 1].
    carrier : {"ul", "dl"}

    Returns
    -------
    ndarray of complex, shape (M,)
        Unit-modulus entries; the first entry is exactly 1.
    """
    xi = float(xi)
    if not -1.0 <= xi <= 1.0:
        raise ValueError(f"xi must lie in [-1, 1], got {xi}")
    scale = _carrier_scale(model, carrier)
    k = np.arange(model.num_antennas)
    return np.exp(1j * np.pi * k * scale * xi)


def synth_cov(model, asf, carrier):
    """Synthesize the exact covariance of a gridded density.

    The integral over the angle axis reduces to a weighted sum of array
    responses at the grid points, so the first column is
    sum_i weights[i] * exp(1j * pi * k * r * grid[i]) with r the
    carrier scale of ``carrier``.

    Parameters
    ----------
    model : UlaModel
    asf : Asf
        Must live on this model's grid (length G).
    carrier : {"ul", "dl"}

    Returns
    -------
    HermitianToeplitz
        Unit leading entry, trace M, positive semidefinite.
    """
    w = asf.weights
    if w.size != model.grid_size:
        raise ShapeMismatchError(
            f"asf has {w.size} weights, model grid has {model.grid_size}"
        )
    scale = _carrier_scale(model, carrier)
    k = np.arange(model.num_antennas)
    phases = np.exp(1j * np.pi * scale * np.outer(k, model.grid()))
    return HermitianToeplitz(phases @ w)


def sample_asf(spec, model, rng_seed):
    """Draw one group-sparse density quantized onto the model grid.

    Each group gets a Dirichlet(1,..,1) mass, a width w ~ U(0, max_width]
    and a center c ~ U(-1 + w/2, 1 - w/2) so the support never clips the
    domain boundary. The uniform bump is evaluated pointwise at the grid
    and renormalized; a bump narrower than one grid cell collapses onto
    the grid point nearest its center.

    Parameters
    ----------
    spec : GroupSparseAsfSpec
    model : UlaModel
    rng_seed : int or sequence of int

    Returns
    -------
    Asf
    """
    rng = np.random.default_rng(rng_seed)
    grid = model.grid()
    kappa = rng.dirichlet(np.ones(spec.num_groups))
    density = np.zeros(model.grid_size)
    for j in range(spec.num_groups):
        width = spec.max_width * rng.uniform()
        half = 0.5 * width
        center = rng.uniform(-1.0 + half, 1.0 - half)
        inside = np.abs(grid - center) <= half
        if inside.any():
            bump = np.zeros_like(density)
            bump[inside] = 1.0
            density += kappa[j] * bump / bump.sum()
        else:
            density[np.argmin(np.abs(grid - center))] += kappa[j]
    return Asf.from_weights(density)


def cov_factor(cov):
    """Hermitian square root of a PSD matrix, with negative-eigenvalue clipping.

    Eigenvalues in [-1e-8 * trace, 0) are clipped to zero; anything more
    negative raises NotPsdError.
    """
    s = np.asarray(cov, dtype=complex)
    vals, vecs = np.linalg.eigh(s)
    floor = -1e-8 * max(np.trace(s).real, 0.0)
    if np.any(vals < floor):
        raise NotPsdError(f"eigenvalue {vals.min():.3e} below clipping floor {floor:.3e}")
    vals = np.clip(vals, 0.0, None)
    return (vecs * np.sqrt(vals)) @ vecs.conj().T


def sample_channels(model, cov, num_snapshots, snr_db, rng_seed):
    """Draw noisy channel snapshots y = h + z with h ~ CN(0, cov).

    The noise variance per entry follows the trace convention
    N0 = trace(cov) / (M * 10**(snr_db / 10)), so snr_db = inf gives
    noiseless snapshots.

    Parameters
    ----------
    model : UlaModel
    cov : HermitianToeplitz
        Uplink covariance, order M.
    num_snapshots : int
    snr_db : float
    rng_seed : int or sequence of int

    Returns
    -------
    ChannelBatch
    """
    if cov.order != model.num_antennas:
        raise ShapeMismatchError(
            f"covariance order {cov.order} != num_antennas {model.num_antennas}"
        )
    if num_snapshots < 1:
        raise ValueError("num_snapshots must be >= 1")
    m = model.num_antennas
    n0 = cov.trace() / (m * 10.0 ** (snr_db / 10.0))
    factor = cov_factor(cov.full())
    rng = np.random.default_rng(rng_seed)
    g = rng.standard_normal((num_snapshots, m)) + 1j * rng.standard_normal((num_snapshots, m))
    z = rng.standard_normal((num_snapshots, m)) + 1j * rng.standard_normal((num_snapshots, m))
    snapshots = (g / np.sqrt(2.0)) @ factor.T + np.sqrt(n0 / 2.0) * z
    return ChannelBatch(snapshots=snapshots, noise_variance=n0, snr_db=snr_db)


def sample_cov(batch):
    """Sample covariance (1/N) sum_t y_t y_t^H of a snapshot batch."""
    y = np.asarray(batch.snapshots)
    if y.ndim != 2 or y.shape[0] < 1:
        raise ShapeMismatchError("snapshots must be a nonempty (N, M) array")
    return (y.conj().T @ y).conj() / y.shape[0]


def toeplitzify(s):
    """Project a Hermitian matrix onto Toeplitz form by diagonal averaging.

    Entry k (0-based) of the output is the mean of subdiagonal k of the
    input, so entry 0 averages the main diagonal. Input must be Hermitian
    within 1e-9 relative Frobenius tolerance.

    Parameters
    ----------
    s : (M, M) array_like

    Returns
    -------
    HermitianToeplitz
    """
    s = np.asarray(s, dtype=complex)
    if s.ndim != 2 or s.shape[0] != s.shape[1]:
        raise ShapeMismatchError(f"expected a square matrix, got shape {s.shape}")
    scale = np.linalg.norm(s)
    if np.linalg.norm(s - s.conj().T) > 1e-9 * max(scale, 1e-300):
        raise NotHermitianError("matrix is not Hermitian within tolerance")
    m = s.shape[0]
    col = np.array([np.diagonal(s, offset=-k).mean() for k in range(m)])
    col[0] = col[0].real
    return HermitianToeplitz(col)


# ---------------------------------------------------------------------------
# serialization: little-endian binary records and inspection CSVs


def _write_record(path, magic, model, payload):
    header = np.array(
        [model.num_antennas, model.grid_size, model.f_ul, model.f_dl], dtype="<f8"
    )
    with open(path, "wb") as fh:
        fh.write(magic)
        fh.write(bytes([_RECORD_VERSION]))
        fh.write(header.tobytes())
        fh.write(np.asarray(payload, dtype="<f8").tobytes())


def _read_record(path, magic):
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:4] != magic:
        raise ValueError(f"bad magic {raw[:4]!r}, expected {magic!r}")
    if raw[4] != _RECORD_VERSION:
        raise ValueError(f"unsupported record version {raw[4]}")
    header = np.frombuffer(raw, dtype="<f8", count=4, offset=5)
    payload = np.frombuffer(raw, dtype="<f8", offset=5 + 32)
    model = UlaModel(int(header[0]), int(header[1]), header[2], header[3])
    return model, payload


def save_asf(path, model, asf):
    """Write an Asf to a binary record (magic, version, dims, weights)."""
    if asf.weights.size != model.grid_size:
        raise ShapeMismatchError("asf length does not match model grid")
    _write_record(path, _MAGIC_ASF, model, asf.weights)


def load_asf(path):
    """Read a binary Asf record, returning (UlaModel, Asf)."""
    model, payload = _read_record(path, _MAGIC_ASF)
    if payload.size != model.grid_size:
        raise ValueError("payload length does not match header grid size")
    return model, Asf(payload)


def save_cov(path, model, cov):
    """Write a HermitianToeplitz first column as interleaved re/im floats."""
    if cov.order != model.num_antennas:
        raise ShapeMismatchError("covariance order does not match model")
    c = cov.first_column
    payload = np.column_stack([c.real, c.imag]).ravel()
    _write_record(path, _MAGIC_COV, model, payload)


def load_cov(path):
    """Read a binary covariance record, returning (UlaModel, HermitianToeplitz)."""
    model, payload = _read_record(path, _MAGIC_COV)
    if payload.size != 2 * model.num_antennas:
        raise ValueError("payload length does not match header antenna count")
    pairs = payload.reshape(-1, 2)
    return model, HermitianToeplitz(pairs[:, 0] + 1j * pairs[:, 1])


def asf_to_csv(path, model, asf):
    """Dump (index, xi, weight) rows for inspection."""
    grid = model.grid()
    with open(path, "w") as fh:
        fh.write("index,xi,weight\n")
        for i, (x, w) in enumerate(zip(grid, asf.weights)):
            fh.write(f"{i},{float(x)!r},{float(w)!r}\n")


def cov_to_csv(path, cov):
    """Dump (lag, real, imag) rows of the first column for inspection."""
    with open(path, "w") as fh:
        fh.write("lag,real,imag\n")
        for k, v in enumerate(cov.first_column):
            fh.write(f"{k},{float(v.real)!r},{float(v.imag)!r}\n")
