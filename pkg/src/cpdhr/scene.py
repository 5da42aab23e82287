"""Multichannel harmonic-retrieval scene model.

A scene is a half-wavelength uniform rectangular array observing R
far-field sources. Modes 1 and 2 of the data tensor carry Vandermonde
steering vectors whose generators encode azimuth/elevation; mode 3 carries
the attenuated source time series. Broken-sensor observation patterns
become boolean masks. Direction of arrival is recovered from estimated
factors through the shift-invariance ratio of each steering column.

Angles are degrees everywhere in this module; grid and time indices are
0-based in code (the file formats and CLI use 1-based labels).
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import metrics
from .core import CpdModel, IncompleteTensor, outer_product, reconstruct

MASK_KINDS = ("deactivated_sensor", "breaks_at_half", "starts_at_half")

DEFAULT_LABELS = ("O1", "Oz", "O2")


@dataclass
class SourceSpec:
    azimuth_deg: float
    elevation_deg: float
    attenuation: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.azimuth_deg < 90.0:
            raise ValueError(f"azimuth must be in (0, 90) degrees, got {self.azimuth_deg}")
        if not 0.0 < self.elevation_deg < 90.0:
            raise ValueError(f"elevation must be in (0, 90) degrees, got {self.elevation_deg}")
        if self.attenuation <= 0:
            raise ValueError("attenuation must be positive")


@dataclass
class DoaScene:
    sources: list
    grid_m1: int = 10
    grid_m2: int = 10
    time_len: int = 15

    def __post_init__(self):
        if self.grid_m1 < 1 or self.grid_m2 < 1:
            raise ValueError("grid extents must be >= 1")
        if self.time_len < 2:
            raise ValueError("time_len must be >= 2")
        if not self.sources:
            raise ValueError("a scene needs at least one source")
        self.sources = [
            s if isinstance(s, SourceSpec) else SourceSpec(**s) for s in self.sources
        ]

    @property
    def rank(self):
        return len(self.sources)

    @property
    def shape(self):
        return (self.grid_m1, self.grid_m2, self.time_len)


@dataclass
class SourceSet:
    """Real source time series, one column per source."""

    signals: np.ndarray
    labels: list = field(default_factory=list)

    def __post_init__(self):
        self.signals = np.asarray(self.signals, dtype=np.float64)
        if self.signals.ndim != 2:
            raise ValueError("signals must be a K x R matrix")
        if not self.labels:
            self.labels = [f"src{r + 1}" for r in range(self.signals.shape[1])]
        if len(self.labels) != self.signals.shape[1]:
            raise ValueError("one label per source column required")
        stds = self.signals.std(axis=0)
        if np.any(stds == 0):
            raise ValueError("source columns must not be constant")


@dataclass
class MaskPattern:
    """One broken sensor. sensor is a 0-based (i, j) grid coordinate."""

    kind: str
    sensor: tuple

    def __post_init__(self):
        if self.kind not in MASK_KINDS:
            raise ValueError(f"unknown mask kind {self.kind!r}, expected one of {MASK_KINDS}")
        self.sensor = (int(self.sensor[0]), int(self.sensor[1]))


@dataclass
class DoaEstimate:
    azimuth_deg: list
    elevation_deg: list
    azimuth_rel_err: list
    elevation_rel_err: list


def _generator(azimuth_deg, elevation_deg, axis):
    az = math.radians(azimuth_deg)
    el = math.radians(elevation_deg)
    if axis == 1:
        return complex(np.exp(1j * math.pi * math.sin(el) * math.cos(az)))
    return complex(np.exp(1j * math.pi * math.sin(el) * math.sin(az)))


def steering_vector(azimuth_deg, elevation_deg, axis, m):
    """Vandermonde steering vector [1, z, ..., z^(m-1)] for one array axis.

    Half-wavelength spacing: z = exp(i*pi*sin(el)*cos(az)) along axis 1 and
    exp(i*pi*sin(el)*sin(az)) along axis 2.
    """
    if axis not in (1, 2):
        raise ValueError("axis must be 1 or 2")
    if not 0.0 < azimuth_deg < 90.0 or not 0.0 < elevation_deg < 90.0:
        raise ValueError("angles must be inside (0, 90) degrees")
    if m < 1:
        raise ValueError("m must be >= 1")
    z = _generator(azimuth_deg, elevation_deg, axis)
    return z ** np.arange(m)


def build_scene_tensor(scene, sources):
    """Scene tensor and its ground-truth model.

    T = sum_r a_r o b_r o (attenuation_r * s_r), with a_r and b_r the two
    steering vectors of source r.
    """
    signals = sources.signals
    if signals.shape != (scene.time_len, scene.rank):
        raise ValueError(
            f"signals shape {signals.shape} does not match scene "
            f"(K={scene.time_len}, R={scene.rank})"
        )
    a = np.column_stack(
        [steering_vector(s.azimuth_deg, s.elevation_deg, 1, scene.grid_m1) for s in scene.sources]
    )
    b = np.column_stack(
        [steering_vector(s.azimuth_deg, s.elevation_deg, 2, scene.grid_m2) for s in scene.sources]
    )
    attens = np.array([s.attenuation for s in scene.sources])
    c = signals.astype(np.complex128) * attens[None, :]
    truth = CpdModel([a, b, c])
    return reconstruct(truth), truth


def add_noise(t, snr_db, seed):
    """t plus seeded circular complex Gaussian noise, scaled so that
    20*log10(||t|| / ||noise||) equals snr_db exactly."""
    t = np.asarray(t, dtype=np.complex128)
    t_norm = float(np.linalg.norm(t.ravel()))
    if t_norm == 0.0:
        raise ValueError("cannot calibrate noise against a zero tensor")
    rng = np.random.default_rng(seed)
    re = rng.standard_normal(t.shape)
    im = rng.standard_normal(t.shape)
    noise = (re + 1j * im) / np.sqrt(2.0)
    target = t_norm / 10.0 ** (snr_db / 20.0)
    noise *= target / float(np.linalg.norm(noise.ravel()))
    return t + noise


def synthetic_sources(time_len, n_sources, seed, sample_rate=128.0, freqs=(8.0, 10.0, 12.0)):
    """Seeded stand-in source set: each channel is a sum of sinusoids at
    the given frequencies with channel-specific random amplitudes and
    phases, plus 10% white noise."""
    rng = np.random.default_rng(seed)
    t = np.arange(time_len) / sample_rate
    cols = []
    for _ in range(n_sources):
        wave = np.zeros(time_len)
        for f in freqs:
            amp = rng.uniform(0.5, 1.5)
            phase = rng.uniform(0.0, 2.0 * np.pi)
            wave = wave + amp * np.sin(2.0 * np.pi * f * t + phase)
        wave = wave + 0.1 * float(np.std(wave)) * rng.standard_normal(time_len)
        cols.append(wave)
    labels = [
        DEFAULT_LABELS[r] if n_sources <= len(DEFAULT_LABELS) else f"src{r + 1}"
        for r in range(n_sources)
    ]
    return SourceSet(np.column_stack(cols), labels)


def estimate_generator(v):
    """Least-squares shift ratio of a (noisy) Vandermonde vector."""
    v = np.asarray(v, dtype=np.complex128).ravel()
    if v.size < 2:
        raise ValueError("need at least 2 entries")
    head = v[:-1]
    denom = np.vdot(head, head)
    if denom == 0:
        raise ValueError("leading subvector is zero, shift ratio undefined")
    return complex(np.vdot(head, v[1:]) / denom)


def doa_from_generators(z1, z2):
    """Invert the steering generator map back to (azimuth, elevation) in
    degrees. Phases must sit in (0, pi) with sqrt(p1^2 + p2^2) <= pi."""
    p1 = np.angle(z1)
    p2 = np.angle(z2)
    if not 0.0 < p1 < np.pi or not 0.0 < p2 < np.pi:
        raise ValueError(f"generator phases ({p1:.4f}, {p2:.4f}) outside (0, pi)")
    rho = math.hypot(p1, p2)
    if rho > np.pi:
        raise ValueError(f"combined phase magnitude {rho:.4f} exceeds pi")
    azimuth = math.degrees(math.atan2(p2, p1))
    elevation = math.degrees(math.asin(rho / np.pi))
    return azimuth, elevation


def _truth_steering_model(scene):
    a = np.column_stack(
        [steering_vector(s.azimuth_deg, s.elevation_deg, 1, scene.grid_m1) for s in scene.sources]
    )
    b = np.column_stack(
        [steering_vector(s.azimuth_deg, s.elevation_deg, 2, scene.grid_m2) for s in scene.sources]
    )
    return CpdModel([a, b])


def estimate_doa(model, scene):
    """Direction of arrival per source from an estimated model.

    Sources are matched to estimate columns through the steering modes
    only (the congruence assignment of the first two factor matrices), so
    no knowledge of the source signals is needed.
    """
    if model.shape[0] < 2 or model.shape[1] < 2:
        raise ValueError("steering modes need at least 2 rows for shift invariance")
    if (model.shape[0], model.shape[1]) != (scene.grid_m1, scene.grid_m2):
        raise ValueError("model grid does not match the scene")
    truth2 = _truth_steering_model(scene)
    est2 = CpdModel([model.factors[0], model.factors[1]])
    rep = metrics.cpderr(truth2, est2)

    az_list, el_list, az_err, el_err = [], [], [], []
    for r, spec in enumerate(scene.sources):
        c = rep.permutation[r]
        if c is None:
            az_list.append(float("nan"))
            el_list.append(float("nan"))
            az_err.append(float("inf"))
            el_err.append(float("inf"))
            continue
        z1 = estimate_generator(model.factors[0][:, c])
        z2 = estimate_generator(model.factors[1][:, c])
        az, el = doa_from_generators(z1, z2)
        az_list.append(az)
        el_list.append(el)
        az_err.append(abs(az - spec.azimuth_deg) / spec.azimuth_deg)
        el_err.append(abs(el - spec.elevation_deg) / spec.elevation_deg)
    return DoaEstimate(az_list, el_list, az_err, el_err)


def apply_mask(t, patterns):
    """Boolean observation mask from broken-sensor patterns, unioned.

    A deactivated sensor loses its whole time fiber; one that breaks at
    half time loses indices >= ceil(K/2); one that starts at half time
    loses indices < ceil(K/2) (for odd K the extra sample goes to the
    first half).
    """
    t = np.asarray(t, dtype=np.complex128)
    if t.ndim != 3:
        raise ValueError("expected an order-3 scene tensor")
    m1, m2, k = t.shape
    half = math.ceil(k / 2)
    mask = np.ones(t.shape, dtype=bool)
    for pat in patterns:
        if not isinstance(pat, MaskPattern):
            pat = MaskPattern(**pat)
        i, j = pat.sensor
        if not (0 <= i < m1 and 0 <= j < m2):
            raise ValueError(f"sensor {pat.sensor} outside the {m1}x{m2} grid")
        if pat.kind == "deactivated_sensor":
            mask[i, j, :] = False
        elif pat.kind == "breaks_at_half":
            mask[i, j, half:] = False
        else:
            mask[i, j, :half] = False
    return IncompleteTensor(t, mask)


def default_scene(sources=None):
    """The reference three-source scene on a 10 x 10 array, 15 samples."""
    sources = sources or [
        SourceSpec(10.0, 20.0),
        SourceSpec(30.0, 30.0),
        SourceSpec(70.0, 40.0),
    ]
    return DoaScene(sources=sources)
