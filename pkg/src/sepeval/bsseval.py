"""BSS Eval image metrics: SDR, ISR, SIR and SAR from filtered projections.

An estimate is decomposed into four parts by least-squares projection onto
subspaces spanned by delayed reference channels (FIR distortion filters of
``filter_len`` taps): the true target image, spatial distortion,
interference and artifacts.  Metrics are energy ratios of these parts,
reported per evaluation window.

Two modes are provided.  ``v4_global`` fits one set of distortion filters
for the whole track and only the energies are windowed; ``v3_windowed``
refits the filters inside every window, which is much slower and tends to
over-estimate performance.  With a single window spanning the whole track
the modes coincide.

The normal equations are assembled from FFT cross-correlations; the Gram
matrix of delayed references is block-Toeplitz and is solved by Cholesky
factorization after tiny diagonal loading, falling back to a minimum-norm
least-squares solution when the references are degenerate.
"""

import math
from dataclasses import dataclass

import numpy as np
import scipy.fft
from scipy.linalg import LinAlgError, cho_factor, cho_solve, toeplitz
from scipy.signal import fftconvolve, oaconvolve

from .audio import AudioSignal

__all__ = [
    "ProjectionFilters",
    "Decomposition",
    "FrameScores",
    "compute_projection",
    "project",
    "decompose",
    "metrics_from_decomposition",
    "bss_eval",
]

DEFAULT_FILTER_LEN = 512
DEFAULT_WINDOW = 44100
_OACONV_THRESHOLD = 1 << 15  # above this many samples, overlap-add wins


@dataclass
class ProjectionFilters:
    """Distortion filters from every reference channel to every estimate channel.

    ``taps`` solves the joint problem over all references (used for the
    interference bound); ``solo_taps[j]`` solves the restricted problem
    over reference j alone (used for the target/spatial split).  Both are
    shaped (J, I_ref, I_est, L).  ``degenerate`` marks a singular Gram
    matrix resolved by a minimum-norm solution.
    """

    taps: np.ndarray
    solo_taps: np.ndarray
    filter_len: int
    mode: str = "global"
    window_start: int = 0
    window_len: int | None = None
    degenerate: bool = False

    def __post_init__(self):
        taps = np.asarray(self.taps, dtype=np.float64)
        solo = np.asarray(self.solo_taps, dtype=np.float64)
        if taps.ndim != 4 or solo.shape != taps.shape:
            raise ValueError(
                f"tap tensors must both be (J, I_ref, I_est, L); "
                f"got {taps.shape} and {solo.shape}"
            )
        if taps.shape[-1] != self.filter_len or self.filter_len < 1:
            raise ValueError(
                f"filter_len {self.filter_len} does not match taps {taps.shape}"
            )
        if taps.size and not (np.all(np.isfinite(taps)) and np.all(np.isfinite(solo))):
            raise ValueError("filter taps contain non-finite values")
        self.taps = taps
        self.solo_taps = solo


@dataclass
class Decomposition:
    """Four-way split of an estimate, each part shaped like the estimate.

    s_target + e_spatial + e_interf + e_artif reproduces the estimate to
    within a few ulp (successive-residual construction).
    """

    s_target: np.ndarray
    e_spatial: np.ndarray
    e_interf: np.ndarray
    e_artif: np.ndarray

    def __post_init__(self):
        shape = self.s_target.shape
        for name in ("e_spatial", "e_interf", "e_artif"):
            if getattr(self, name).shape != shape:
                raise ValueError(f"{name} shape differs from s_target {shape}")


@dataclass(frozen=True)
class FrameScores:
    """Metrics for one evaluation window, in dB.

    Values may be ``inf`` (zero error energy), ``-inf`` (zero signal
    energy) or NaN (zero over zero: nothing to measure in the window).
    """

    sdr: float
    isr: float
    sir: float
    sar: float
    window_start: int
    window_len: int


class _Projector:
    """Reference correlations and factorized Gram matrix for one span.

    Reusing one instance across estimates guarantees that evaluating the
    same estimate twice, in any order, produces bitwise-equal filters.
    """

    def __init__(self, references: np.ndarray, filter_len: int):
        num_refs, num_samples, channels = references.shape
        if filter_len < 1:
            raise ValueError(f"filter_len must be >= 1, got {filter_len}")
        if filter_len > num_samples:
            raise ValueError(
                f"filter_len {filter_len} exceeds signal length {num_samples}"
            )
        self.filter_len = filter_len
        self.num_refs = num_refs
        self.channels = channels

        # One FFT per reference channel; the transform length leaves at
        # least L-1 zeros of tail so circular lags within +/-(L-1) match
        # linear correlations exactly.
        self._n_fft = scipy.fft.next_fast_len(num_samples + 2 * filter_len)
        flat = references.transpose(0, 2, 1).reshape(num_refs * channels, num_samples)
        self._spectra = scipy.fft.rfft(flat, n=self._n_fft, axis=-1)

        total = num_refs * channels * filter_len
        gram = np.empty((total, total))
        L = filter_len
        for b1 in range(num_refs * channels):
            for b2 in range(b1, num_refs * channels):
                cc = scipy.fft.irfft(
                    self._spectra[b1] * self._spectra[b2].conj(), self._n_fft
                )
                block = toeplitz(np.concatenate(([cc[0]], cc[-1:-L:-1])), cc[:L])
                gram[b1 * L:(b1 + 1) * L, b2 * L:(b2 + 1) * L] = block
                if b2 != b1:
                    gram[b2 * L:(b2 + 1) * L, b1 * L:(b1 + 1) * L] = block.T

        loading = 1e-12 * np.trace(gram) / total
        diag = np.arange(total)
        gram[diag, diag] += loading

        try:
            self._factor = cho_factor(gram)
        except LinAlgError:
            self._factor = None

        self._solo_factors = []
        block_size = channels * filter_len
        for j in range(num_refs):
            sub = gram[
                j * block_size:(j + 1) * block_size,
                j * block_size:(j + 1) * block_size,
            ]
            try:
                self._solo_factors.append(cho_factor(sub))
            except LinAlgError:
                self._solo_factors.append(None)

        self.degenerate = self._factor is None or None in self._solo_factors
        self._gram = gram if self.degenerate else None

    def cross_correlations(self, estimate: np.ndarray) -> np.ndarray:
        """Right-hand side D[(b, m), c] = <reference b delayed by m, estimate c>."""
        num_samples, est_channels = estimate.shape
        L = self.filter_len
        est_spectra = scipy.fft.rfft(estimate.T, n=self._n_fft, axis=-1)
        D = np.empty((self._spectra.shape[0] * L, est_channels))
        for b in range(self._spectra.shape[0]):
            cc = scipy.fft.irfft(
                self._spectra[b] * est_spectra.conj(), self._n_fft, axis=-1
            )
            D[b * L:(b + 1) * L] = np.concatenate(
                (cc[:, :1], cc[:, -1:-L:-1]), axis=1
            ).T
        return D

    def _shape_taps(self, flat: np.ndarray, est_channels: int) -> np.ndarray:
        taps = flat.reshape(self.num_refs, self.channels, self.filter_len, est_channels)
        return np.ascontiguousarray(np.moveaxis(taps, 2, 3))

    def solve(self, D: np.ndarray) -> np.ndarray:
        """Joint filters over all references, shaped (J, I_ref, I_est, L)."""
        if self._factor is not None:
            flat = cho_solve(self._factor, D)
        else:
            flat = np.linalg.lstsq(self._gram, D, rcond=None)[0]
        return self._shape_taps(flat, D.shape[1])

    def solve_solo(self, j: int, D: np.ndarray) -> np.ndarray:
        """Filters over reference j alone, shaped (1, I_ref, I_est, L)."""
        block = self.channels * self.filter_len
        rows = D[j * block:(j + 1) * block]
        factor = self._solo_factors[j]
        if factor is not None:
            flat = cho_solve(factor, rows)
        else:
            sub = self._gram[j * block:(j + 1) * block, j * block:(j + 1) * block]
            flat = np.linalg.lstsq(sub, rows, rcond=None)[0]
        taps = flat.reshape(1, self.channels, self.filter_len, D.shape[1])
        return np.ascontiguousarray(np.moveaxis(taps, 2, 3))


def _signal_stack(references) -> np.ndarray:
    """Validate and stack reference signals to (J, N, I)."""
    if not references:
        raise ValueError("at least one reference is required")
    arrays = []
    shape = references[0].samples.shape
    rate = references[0].sample_rate
    for ref in references:
        if ref.samples.shape != shape:
            raise ValueError(
                f"reference shapes differ: {ref.samples.shape} vs {shape}"
            )
        if ref.sample_rate != rate:
            raise ValueError("reference sample rates differ")
        arrays.append(ref.samples)
    return np.stack(arrays)


def compute_projection(
    references,
    estimate: AudioSignal,
    filter_len: int = DEFAULT_FILTER_LEN,
    mode: str = "global",
    window: int | None = None,
    hop: int | None = None,
):
    """Least-squares FIR distortion filters matching references to an estimate.

    In ``global`` mode one :class:`ProjectionFilters` covers the whole
    signal; in ``windowed`` mode a list is returned, one per evaluation
    window of ``window`` samples advanced by ``hop``.
    """
    refs = _signal_stack(references)
    est = estimate.samples
    if est.shape[0] != refs.shape[1] or est.shape[1] != refs.shape[2]:
        raise ValueError(
            f"estimate shape {est.shape} does not match references "
            f"{refs.shape[1:]}"
        )
    if mode == "global":
        return _projection_for_span(refs, est, filter_len, "global", 0)
    if mode != "windowed":
        raise ValueError(f"mode must be 'global' or 'windowed', got {mode!r}")
    if window is None:
        raise ValueError("windowed mode requires a window length")
    hop = hop or window
    out = []
    for start, stop in _windows(refs.shape[1], window, hop):
        span_len = min(filter_len, stop - start)
        out.append(
            _projection_for_span(
                refs[:, start:stop], est[start:stop], span_len, "windowed", start
            )
        )
    return out


def _projection_for_span(refs, est, filter_len, mode, start) -> ProjectionFilters:
    projector = _Projector(refs, filter_len)
    D = projector.cross_correlations(est)
    taps = projector.solve(D)
    solo = np.empty_like(taps)
    for j in range(refs.shape[0]):
        solo[j] = projector.solve_solo(j, D)[0]
    return ProjectionFilters(
        taps,
        solo,
        filter_len,
        mode=mode,
        window_start=start,
        window_len=refs.shape[1],
        degenerate=projector.degenerate,
    )


def _convolve(signal: np.ndarray, taps: np.ndarray) -> np.ndarray:
    if signal.shape[0] >= _OACONV_THRESHOLD:
        return oaconvolve(signal, taps)
    return fftconvolve(signal, taps)


def project(references, taps: np.ndarray) -> np.ndarray:
    """Filter-and-sum references through (J, I_ref, I_est, L) taps.

    Returns the projection on the padded domain, length N + L - 1, where
    the least-squares optimality (residual orthogonal to every delayed
    reference) holds.
    """
    refs = references if isinstance(references, np.ndarray) else _signal_stack(references)
    num_refs, num_samples, channels = refs.shape
    if taps.shape[0] != num_refs or taps.shape[1] != channels:
        raise ValueError(
            f"taps shape {taps.shape} does not match references {refs.shape}"
        )
    est_channels, filter_len = taps.shape[2], taps.shape[3]
    out = np.zeros((num_samples + filter_len - 1, est_channels))
    for j in range(num_refs):
        for c_ref in range(channels):
            for c_est in range(est_channels):
                out[:, c_est] += _convolve(refs[j, :, c_ref], taps[j, c_ref, c_est])
    return out


def decompose(
    estimate: AudioSignal,
    references,
    target_index: int,
    filters: ProjectionFilters,
) -> Decomposition:
    """Split an estimate into target, spatial, interference and artifact parts.

    The target part is the true image itself; the spatial part is the
    single-reference projection minus the target; interference is what
    the remaining references additionally explain; artifacts are the
    unexplained residual.  Successive residuals make the four parts sum
    to the estimate exactly.
    """
    refs = _signal_stack(references)
    est = estimate.samples
    num_refs, num_samples, _ = refs.shape
    if not 0 <= target_index < num_refs:
        raise IndexError(f"target index {target_index} out of range")
    if est.shape[0] != num_samples:
        raise ValueError("estimate and references differ in length")
    if filters.taps.shape[0] != num_refs:
        raise ValueError(
            f"filters cover {filters.taps.shape[0]} references, got {num_refs}"
        )

    proj_solo = project(refs[target_index:target_index + 1],
                        filters.solo_taps[target_index:target_index + 1])
    proj_all = project(refs, filters.taps)

    s_target = refs[target_index]
    e_spatial = proj_solo[:num_samples] - s_target
    e_interf = proj_all[:num_samples] - proj_solo[:num_samples]
    e_artif = est - proj_all[:num_samples]
    return Decomposition(s_target.copy(), e_spatial, e_interf, e_artif)


def _ratio_db(num: float, den: float) -> float:
    if den > 0.0:
        return 10.0 * math.log10(num / den) if num > 0.0 else -math.inf
    return math.inf if num > 0.0 else math.nan


def _windows(num_samples: int, window: int, hop: int):
    if window < 1 or hop < 1:
        raise ValueError(f"window and hop must be >= 1, got {window}, {hop}")
    if window > num_samples:
        raise ValueError(
            f"window of {window} samples exceeds signal length {num_samples}"
        )
    return [
        (start, min(start + window, num_samples))
        for start in range(0, num_samples, hop)
    ]


def metrics_from_decomposition(
    d: Decomposition, window: int, hop: int | None = None
) -> list:
    """Energy-ratio metrics over rectangular windows covering the signal.

    Per window: SDR compares the target to the total error, ISR to the
    spatial part, SIR to interference (after granting the spatial fit),
    SAR to artifacts (after granting everything else).
    """
    hop = hop or window
    return [
        _frame_scores(d, start, stop)
        for start, stop in _windows(d.s_target.shape[0], window, hop)
    ]


def bss_eval(
    references,
    estimates,
    filter_len: int = DEFAULT_FILTER_LEN,
    window: int = DEFAULT_WINDOW,
    hop: int | None = None,
    mode: str = "v4_global",
    targets=None,
) -> list:
    """Score each estimate against its target reference, framewise.

    Pairing is positional by default (estimate k scored against reference
    k); pass ``targets`` to name the reference index for each estimate.
    Returns one list of :class:`FrameScores` per estimate.
    """
    refs = _signal_stack(references)
    num_refs, num_samples, channels = refs.shape
    if not estimates:
        raise ValueError("at least one estimate is required")
    est_arrays = []
    for est in estimates:
        if est.samples.shape[0] != num_samples:
            raise ValueError(
                f"estimate length {est.samples.shape[0]} does not match "
                f"references ({num_samples})"
            )
        est_arrays.append(est.samples)
    if targets is None:
        if len(est_arrays) > num_refs:
            raise ValueError(
                f"{len(est_arrays)} estimates for {num_refs} references; "
                "pass explicit targets"
            )
        targets = list(range(len(est_arrays)))
    elif len(targets) != len(est_arrays):
        raise ValueError("one target index is required per estimate")
    for j in targets:
        if not 0 <= j < num_refs:
            raise IndexError(f"target index {j} out of range")
    hop = hop or window
    spans = _windows(num_samples, window, hop)

    if mode == "v4_global":
        projector = _Projector(refs, filter_len)
        results = []
        for est, j in zip(est_arrays, targets):
            d = _decompose_with(projector, refs, est, j)
            frames = []
            for start, stop in spans:
                frames.append(_frame_scores(d, start, stop))
            results.append(frames)
        return results

    if mode != "v3_windowed":
        raise ValueError(
            f"mode must be 'v4_global' or 'v3_windowed', got {mode!r}"
        )
    results = [[] for _ in est_arrays]
    for start, stop in spans:
        span_refs = refs[:, start:stop]
        span_len = min(filter_len, stop - start)
        projector = _Projector(span_refs, span_len)
        for k, (est, j) in enumerate(zip(est_arrays, targets)):
            d = _decompose_with(projector, span_refs, est[start:stop], j)
            score = _frame_scores(d, 0, stop - start)
            results[k].append(
                FrameScores(score.sdr, score.isr, score.sir, score.sar,
                            window_start=start, window_len=stop - start)
            )
    return results


def _decompose_with(projector: _Projector, refs, est, target_index) -> Decomposition:
    D = projector.cross_correlations(est)
    taps = projector.solve(D)
    solo = projector.solve_solo(target_index, D)
    num_samples = refs.shape[1]
    proj_solo = project(refs[target_index:target_index + 1], solo)
    proj_all = project(refs, taps)
    s_target = refs[target_index]
    return Decomposition(
        s_target.copy(),
        proj_solo[:num_samples] - s_target,
        proj_all[:num_samples] - proj_solo[:num_samples],
        est - proj_all[:num_samples],
    )


def _frame_scores(d: Decomposition, start: int, stop: int) -> FrameScores:
    sl = slice(start, stop)
    s = d.s_target[sl]
    e_spat = d.e_spatial[sl]
    e_interf = d.e_interf[sl]
    e_artif = d.e_artif[sl]
    s_energy = float(np.sum(s * s))
    return FrameScores(
        sdr=_ratio_db(s_energy, float(np.sum((e_spat + e_interf + e_artif) ** 2))),
        isr=_ratio_db(s_energy, float(np.sum(e_spat * e_spat))),
        sir=_ratio_db(float(np.sum((s + e_spat) ** 2)),
                      float(np.sum(e_interf * e_interf))),
        sar=_ratio_db(float(np.sum((s + e_spat + e_interf) ** 2)),
                      float(np.sum(e_artif * e_artif))),
        window_start=start,
        window_len=stop - start,
    )
