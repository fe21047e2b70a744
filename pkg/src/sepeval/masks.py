"""Oracle time-frequency masks computed from true source images.

Five classic upper-bound separators are provided, all closed-form given
the ground-truth source images:

* IBM1 / IBM2: binary masks selecting bins where a source's magnitude
  (order 1) or power (order 2) is at least half the sum over sources.
* IRM1 / IRM2: soft ratio masks, fractional magnitude or power.
* MWF: multichannel Wiener filter from a local Gaussian model, one I-by-I
  complex matrix per source and bin.

Masks are built in the STFT domain and applied to the mixture; estimates
return to the time domain through weighted overlap-add synthesis.
"""

import warnings
from dataclasses import dataclass

import numpy as np

from .audio import AudioSignal
from .spectral import Spectrogram, StftConfig, istft, stft

__all__ = [
    "ORACLE_METHODS",
    "SourceImages",
    "ScalarMask",
    "MatrixMask",
    "SpatialModel",
    "ibm_mask",
    "irm_mask",
    "estimate_mwf_model",
    "mwf_mask",
    "apply_mask",
    "oracle_separate",
]

ORACLE_METHODS = ("IBM1", "IBM2", "IRM1", "IRM2", "MWF")


@dataclass
class SourceImages:
    """Ordered stack of per-source spectrograms sharing one shape."""

    images: list
    labels: tuple = ()

    def __post_init__(self):
        if not self.images:
            raise ValueError("at least one source image is required")
        shape = self.images[0].bins.shape
        for image in self.images[1:]:
            if image.bins.shape != shape:
                raise ValueError(
                    f"source image shapes differ: {image.bins.shape} vs {shape}"
                )
        if not self.labels:
            self.labels = tuple(f"source_{j + 1}" for j in range(len(self.images)))
        elif len(self.labels) != len(self.images):
            raise ValueError(
                f"{len(self.labels)} labels for {len(self.images)} images"
            )
        self.labels = tuple(self.labels)

    @property
    def num_sources(self) -> int:
        return len(self.images)

    def magnitudes(self) -> np.ndarray:
        """|y_j| stacked to shape (J, F, T, I)."""
        return np.abs(np.stack([image.bins for image in self.images]))


@dataclass
class ScalarMask:
    """Real per-channel mask tensor of shape (J, F, T, I), values in [0, 1]."""

    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 4:
            raise ValueError(f"mask must be 4-D (J, F, T, I), got {values.shape}")
        if values.size and not np.all(np.isfinite(values)):
            raise ValueError("mask contains non-finite values")
        if values.size and (values.min() < 0.0 or values.max() > 1.0):
            raise ValueError("scalar mask values must lie in [0, 1]")
        self.values = values

    @property
    def num_sources(self) -> int:
        return self.values.shape[0]


@dataclass
class MatrixMask:
    """Complex matrix mask tensor of shape (J, F, T, I, I)."""

    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.complex128)
        if values.ndim != 5 or values.shape[-1] != values.shape[-2]:
            raise ValueError(
                f"mask must be 5-D (J, F, T, I, I), got {values.shape}"
            )
        if values.size and not np.all(np.isfinite(values)):
            raise ValueError("mask contains non-finite values")
        self.values = values

    @property
    def num_sources(self) -> int:
        return self.values.shape[0]


@dataclass
class SpatialModel:
    """Local Gaussian model: per-source PSD and spatial covariance.

    ``psd`` is v_j(f,t) with shape (J, F, T); ``spatial_cov`` is R_j(f)
    with shape (J, F, I, I), Hermitian PSD and trace-normalized to I.
    ``degenerate`` lists indices of all-zero sources whose covariance was
    pinned to the identity.
    """

    psd: np.ndarray
    spatial_cov: np.ndarray
    degenerate: tuple = ()

    def __post_init__(self):
        psd = np.asarray(self.psd, dtype=np.float64)
        cov = np.asarray(self.spatial_cov, dtype=np.complex128)
        if psd.ndim != 3:
            raise ValueError(f"psd must be 3-D (J, F, T), got {psd.shape}")
        if cov.ndim != 4 or cov.shape[-1] != cov.shape[-2]:
            raise ValueError(
                f"spatial_cov must be 4-D (J, F, I, I), got {cov.shape}"
            )
        if psd.shape[:2] != cov.shape[:2]:
            raise ValueError("psd and spatial_cov disagree on (J, F)")
        if psd.size and psd.min() < 0.0:
            raise ValueError("psd must be non-negative")
        hermitian_gap = np.abs(cov - cov.conj().swapaxes(-1, -2)).max() if cov.size else 0.0
        if hermitian_gap > 1e-10:
            raise ValueError(
                f"spatial covariance not Hermitian (max asymmetry {hermitian_gap:.2e})"
            )
        self.psd = psd
        self.spatial_cov = cov
        self.degenerate = tuple(self.degenerate)

    @property
    def num_sources(self) -> int:
        return self.psd.shape[0]

    @property
    def num_channels(self) -> int:
        return self.spatial_cov.shape[-1]


def ibm_mask(sources: SourceImages, order: int = 1) -> ScalarMask:
    """Ideal binary mask: 1 where a source holds at least half the energy.

    ``order`` selects magnitude (1) or power (2) comparison.  Ties are
    inclusive, so exactly equal competitors all receive 1; bins where
    every source is silent receive 0.
    """
    if order not in (1, 2):
        raise ValueError(f"order must be 1 or 2, got {order}")
    power = sources.magnitudes()
    if order == 2:
        power = power * power
    total = power.sum(axis=0)
    values = ((power >= 0.5 * total) & (total > 0)).astype(np.float64)
    return ScalarMask(values)


def irm_mask(sources: SourceImages, alpha: float = 2.0) -> ScalarMask:
    """Ideal ratio mask: fractional |y_j|^alpha of the per-bin total.

    Bins where all sources vanish get the uniform value 1/J, which keeps
    the masks summing to one everywhere.
    """
    if not alpha > 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    power = sources.magnitudes() ** alpha
    total = power.sum(axis=0)
    num = sources.num_sources
    values = np.full_like(power, 1.0 / num)
    np.divide(power, total, out=values, where=total > 0)
    return ScalarMask(values)


def _batched_pinv(matrices: np.ndarray) -> np.ndarray:
    """Pseudo-inverse of a stack of Hermitian matrices."""
    return np.linalg.pinv(matrices, hermitian=True)


def estimate_mwf_model(sources: SourceImages, iterations: int = 2) -> SpatialModel:
    """Fit the local Gaussian model (v_j, R_j) by alternating estimation.

    Starting from v_j = (1/I)*||y_j(f,t)||^2, each sweep recomputes the
    frequency-wise covariance R_j(f) as the PSD-weighted average of outer
    products (trace-normalized to I) and then the PSD as the matched
    quadratic form v_j = (1/I)*y_j^H R_j^{-1} y_j.  A source with no
    energy anywhere is flagged and pinned to R_j = identity, v_j = 0.
    """
    if iterations < 1:
        raise ValueError(f"iterations must be >= 1, got {iterations}")
    num_sources = sources.num_sources
    num_bins, num_frames, channels = sources.images[0].bins.shape

    psd = np.empty((num_sources, num_bins, num_frames))
    cov = np.empty((num_sources, num_bins, channels, channels), dtype=np.complex128)
    eye = np.eye(channels, dtype=np.complex128)
    degenerate = []

    for j, image in enumerate(sources.images):
        bins = image.bins  # (F, T, I)
        if not np.any(bins):
            degenerate.append(j)
            psd[j] = 0.0
            cov[j] = eye
            continue
        # Sum of outer products per frequency; reused every sweep because
        # the weights only rescale it.
        outer_sum = np.einsum("fti,ftk->fik", bins, bins.conj())
        v = np.einsum("fti,fti->ft", bins, bins.conj()).real / channels
        r = np.broadcast_to(eye, outer_sum.shape).copy()
        for _ in range(iterations):
            weight = v.sum(axis=1)  # (F,)
            live = weight > 0
            r[live] = outer_sum[live] / weight[live, None, None]
            r[~live] = eye
            trace = np.einsum("fii->f", r).real
            scalable = trace > 0
            r[scalable] *= (channels / trace[scalable])[:, None, None]
            r[~scalable] = eye
            r_inv = _batched_pinv(r)
            v = np.einsum("fik,ftk,fti->ft", r_inv, bins, bins.conj()).real
            v = np.maximum(v / channels, 0.0)
        psd[j] = v
        cov[j] = (r + r.conj().swapaxes(-1, -2)) / 2.0

    if degenerate:
        warnings.warn(
            f"sources {degenerate} are silent; covariance pinned to identity",
            RuntimeWarning,
            stacklevel=2,
        )
    return SpatialModel(psd, cov, tuple(degenerate))


def _loaded_mixture_cov(model: SpatialModel, freq_slice: slice, epsilon=None):
    """C_x + eps*I over a frequency slab.

    By default eps tracks the local trace (1e-10 * max(1, tr/I)) so silent
    bins stay invertible; an explicit epsilon (including 0) overrides it.
    """
    v = model.psd[:, freq_slice]  # (J, Fc, T)
    r = model.spatial_cov[:, freq_slice]  # (J, Fc, I, I)
    channels = model.num_channels
    mix_cov = np.einsum("jft,jfik->ftik", v, r)
    trace = np.einsum("ftii->ft", mix_cov).real
    if epsilon is None:
        eps = 1e-10 * np.maximum(1.0, trace / channels)
    else:
        eps = np.full_like(trace, float(epsilon))
    mix_cov[..., np.arange(channels), np.arange(channels)] += eps[..., None]
    return mix_cov, v, r


def mwf_mask(model: SpatialModel, epsilon: float | None = None) -> MatrixMask:
    """Multichannel Wiener filter M_j = C_j (C_x + eps*I)^{-1} per bin."""
    num_sources = model.num_sources
    num_bins, num_frames = model.psd.shape[1:]
    channels = model.num_channels
    values = np.empty(
        (num_sources, num_bins, num_frames, channels, channels), dtype=np.complex128
    )
    for start, stop in _freq_slabs(num_bins, num_frames, channels):
        slab = slice(start, stop)
        mix_cov, v, r = _loaded_mixture_cov(model, slab, epsilon)
        inv = np.linalg.inv(mix_cov)
        for j in range(num_sources):
            source_cov = v[j][..., None, None] * r[j][:, None]
            values[j, slab] = np.einsum("ftik,ftkl->ftil", source_cov, inv)
    return MatrixMask(values)


def _freq_slabs(num_bins: int, num_frames: int, channels: int, budget: int = 4_000_000):
    """Frequency chunks sized so slab temporaries stay near `budget` cells."""
    step = max(1, budget // max(1, num_frames * channels * channels))
    for start in range(0, num_bins, step):
        yield start, min(start + step, num_bins)


def apply_mask(mask, mixture: Spectrogram, j: int) -> Spectrogram:
    """Apply source j's mask to the mixture spectrogram.

    Scalar masks multiply each channel; matrix masks act on the channel
    vector x(f,t) by matrix-vector product.
    """
    if not isinstance(mask, (ScalarMask, MatrixMask)):
        raise TypeError(f"unsupported mask type {type(mask).__name__}")
    values = mask.values
    if not 0 <= j < values.shape[0]:
        raise IndexError(f"source index {j} out of range for {values.shape[0]} sources")
    if isinstance(mask, ScalarMask):
        if values.shape[1:] != mixture.bins.shape:
            raise ValueError(
                f"mask shape {values.shape[1:]} does not match "
                f"mixture {mixture.bins.shape}"
            )
        masked = values[j] * mixture.bins
    else:
        if values.shape[1:3] + values.shape[4:] != mixture.bins.shape:
            raise ValueError(
                f"mask shape {values.shape[1:]} does not match "
                f"mixture {mixture.bins.shape}"
            )
        masked = np.einsum("ftik,ftk->fti", values[j], mixture.bins)
    return Spectrogram(masked, mixture.config, mixture.original_length, mixture.sample_rate)


def _mwf_estimates(model: SpatialModel, mixture: Spectrogram) -> list:
    """Per-source masked spectrogram tensors without materializing masks.

    Solves (C_x + eps*I) z = x per bin, then each estimate is
    v_j * (R_j z); frequency slabs bound peak memory on long tracks.
    """
    num_sources = model.num_sources
    estimates = [np.empty_like(mixture.bins) for _ in range(num_sources)]
    num_bins, num_frames, channels = mixture.bins.shape
    for start, stop in _freq_slabs(num_bins, num_frames, channels):
        slab = slice(start, stop)
        mix_cov, v, r = _loaded_mixture_cov(model, slab)
        z = np.linalg.solve(mix_cov, mixture.bins[slab][..., None])[..., 0]
        for j in range(num_sources):
            rz = np.einsum("fik,ftk->fti", r[j], z)
            estimates[j][slab] = v[j][..., None] * rz
    return estimates


def _resolve_method(method: str, alpha, order):
    """Normalize a method name plus optional explicit mask parameter."""
    name = method.upper()
    if name in ("IBM", "IRM"):
        if name == "IBM":
            return "IBM", None, order if order is not None else 1
        return "IRM", alpha if alpha is not None else 2.0, None
    if name not in ORACLE_METHODS:
        raise ValueError(
            f"unknown method {method!r}; expected one of "
            f"{ORACLE_METHODS + ('IBM', 'IRM')}"
        )
    if name == "MWF":
        return "MWF", None, None
    suffix = int(name[3])
    kind = name[:3]
    if kind == "IBM":
        if order is not None and order != suffix:
            raise ValueError(f"order {order} conflicts with method {name}")
        return "IBM", None, suffix
    if alpha is not None and alpha != float(suffix):
        raise ValueError(f"alpha {alpha} conflicts with method {name}")
    return "IRM", float(suffix), None


def oracle_separate(
    mixture: AudioSignal,
    true_sources: list,
    method: str,
    config: StftConfig = StftConfig(),
    iterations: int = 2,
    alpha: float | None = None,
    order: int | None = None,
) -> list:
    """Run one oracle method end to end, returning time-domain estimates.

    All inputs are transformed with ``config``; the mask derived from the
    true source images is applied to the mixture and synthesized back,
    trimmed to the input length.  ``method`` is one of the five canonical
    names, or bare ``IBM``/``IRM`` combined with an explicit ``order`` or
    ``alpha``.
    """
    kind, alpha, order = _resolve_method(method, alpha, order)
    if not true_sources:
        raise ValueError("at least one true source is required")
    for source in true_sources:
        if source.samples.shape != mixture.samples.shape:
            raise ValueError(
                f"source shape {source.samples.shape} does not match "
                f"mixture {mixture.samples.shape}"
            )
        if source.sample_rate != mixture.sample_rate:
            raise ValueError("source and mixture sample rates differ")

    mix_spec = stft(mixture, config)
    images = SourceImages([stft(source, config) for source in true_sources])

    if kind == "MWF":
        model = estimate_mwf_model(images, iterations)
        masked = _mwf_estimates(model, mix_spec)
        specs = [
            Spectrogram(bins, config, mix_spec.original_length, mixture.sample_rate)
            for bins in masked
        ]
    else:
        mask = ibm_mask(images, order) if kind == "IBM" else irm_mask(images, alpha)
        specs = [apply_mask(mask, mix_spec, j) for j in range(images.num_sources)]
    return [istft(spec, mixture.num_samples) for spec in specs]
