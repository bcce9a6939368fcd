"""Labeled synthetic power delay profiles.

A profile is a noise floor up to a first arrival, then a baseline that decays
linearly in dB. Multipath components are tapered bumps on top of that
baseline; the apex of each bump is its label. Gaussian noise (in dB) is added
everywhere.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import PdpRecord, PdpSet, write_pdp_csv
from .errors import ParameterError, PlacementError


@dataclass(frozen=True)
class SynthParams:
    length: int = 820
    n_peaks: tuple[int, int] = (3, 8)
    decay_db_per_sample: float = 0.05
    noise_floor_db: float = -110.0
    peak_power_db: tuple[float, float] = (8.0, 25.0)
    noise_sigma_db: float = 1.5
    min_peak_separation: int = 10
    seed: int = 0
    # level and position of the first arrival, both drawn uniformly per record
    first_arrival_db: tuple[float, float] = (-65.0, -55.0)
    first_arrival_index: tuple[int, int] = (20, 100)
    # samples of linear dB taper on each side of an apex
    peak_skirt: tuple[int, int] = (1, 3)

    def __post_init__(self):
        k_min, k_max = self.n_peaks
        if k_min < 1 or k_max < k_min:
            raise ParameterError(f"n_peaks must satisfy 1 <= k_min <= k_max, got {self.n_peaks}")
        if self.length < 1:
            raise ParameterError("length must be positive")
        if self.decay_db_per_sample <= 0:
            raise ParameterError("decay_db_per_sample must be positive")
        if self.noise_sigma_db < 0:
            raise ParameterError("noise_sigma_db must be non-negative")
        lo, hi = self.peak_power_db
        if hi < lo:
            raise ParameterError(f"peak_power_db range is inverted: {self.peak_power_db}")
        if not lo > 3 * self.noise_sigma_db:
            raise ParameterError(
                f"lowest peak power {lo} dB must exceed 3 x noise sigma ({3 * self.noise_sigma_db} dB)"
            )
        if self.min_peak_separation < 1:
            raise ParameterError("min_peak_separation must be >= 1")
        s_lo, s_hi = self.peak_skirt
        if s_lo < 0 or s_hi < s_lo:
            raise ParameterError(f"invalid peak_skirt {self.peak_skirt}")
        a_lo, a_hi = self.first_arrival_index
        if not 0 <= a_lo <= a_hi < self.length:
            raise ParameterError(f"first_arrival_index {self.first_arrival_index} outside the profile")
        if self.first_arrival_db[1] < self.first_arrival_db[0]:
            raise ParameterError("first_arrival_db range is inverted")
        if self.first_arrival_db[0] <= self.noise_floor_db:
            raise ParameterError("first arrival must lie above the noise floor")


@dataclass(frozen=True)
class SynthDatasetSpec:
    n_records: int = 80
    params: SynthParams = SynthParams()

    def __post_init__(self):
        if self.n_records < 2:
            raise ParameterError(f"n_records must be >= 2, got {self.n_records}")


def _place_peaks(rng, k, lo, hi, sep):
    """Draw ``k`` apex positions in [lo, hi] with pairwise distance >= sep."""
    span = hi - lo
    if span < 0 or k > span // sep + 1:
        raise PlacementError(
            f"cannot place {k} peaks with separation {sep} in index range [{lo}, {hi}]"
        )
    # stars and bars: spread the free slack over k+1 gaps, which is uniform
    # over all admissible configurations
    slack = span - (k - 1) * sep
    cuts = np.sort(rng.choice(slack + k, size=k, replace=False)) - np.arange(k)
    return lo + cuts + sep * np.arange(k)


def _baseline(params, arrival_idx, arrival_db):
    i = np.arange(params.length)
    decayed = arrival_db - params.decay_db_per_sample * (i - arrival_idx)
    base = np.maximum(params.noise_floor_db, decayed)
    base[i < arrival_idx] = params.noise_floor_db
    return base


def generate_pdp(params: SynthParams, record_seed: int, record_id: int = 0, *, return_clean=False):
    """Draw one labeled profile; a pure function of ``(params, record_seed)``.

    With ``return_clean=True`` the noiseless construction is returned too.
    """
    rng = np.random.default_rng(record_seed)
    n = params.length
    arrival_idx = int(rng.integers(params.first_arrival_index[0], params.first_arrival_index[1] + 1))
    arrival_db = float(rng.uniform(*params.first_arrival_db))
    clean = _baseline(params, arrival_idx, arrival_db)

    k = int(rng.integers(params.n_peaks[0], params.n_peaks[1] + 1))
    s_max = params.peak_skirt[1]
    apexes = _place_peaks(rng, k, arrival_idx, n - 1 - s_max, params.min_peak_separation)
    bump = np.zeros(n)
    for apex in apexes:
        power = rng.uniform(*params.peak_power_db)
        skirt = int(rng.integers(params.peak_skirt[0], params.peak_skirt[1] + 1))
        for j in range(-skirt, skirt + 1):
            pos = apex + j
            if 0 <= pos < n:
                bump[pos] = max(bump[pos], power * (1.0 - abs(j) / (skirt + 1)))
    clean = clean + bump
    noisy = clean + rng.normal(0.0, params.noise_sigma_db, size=n) if params.noise_sigma_db > 0 else clean.copy()
    rec = PdpRecord(record_id, noisy, tuple(int(a) for a in apexes))
    if return_clean:
        return rec, clean
    return rec


def generate_dataset(spec: SynthDatasetSpec, out_path=None) -> PdpSet:
    """Generate ``spec.n_records`` profiles with seeds ``seed + index``.

    When ``out_path`` is given the PDP CSV, its companion label CSV and the
    spec (``<stem>_spec.txt``) are written next to each other.
    """
    pdp_set = generate_records(spec.params, spec.n_records)
    if out_path is not None:
        write_dataset(pdp_set, spec.params, out_path)
    return pdp_set


def generate_records(params: SynthParams, n_records: int) -> PdpSet:
    """Records ``0..n_records-1`` without the dataset-size invariant."""
    records = tuple(generate_pdp(params, params.seed + i, record_id=i) for i in range(n_records))
    return PdpSet(records, params.length)


def write_dataset(pdp_set: PdpSet, params: SynthParams, out_path):
    out_path = Path(out_path)
    write_pdp_csv(pdp_set, out_path)
    spec_path = out_path.with_name(f"{out_path.stem}_spec.txt")
    spec_path.write_text(_spec_lines(len(pdp_set), params), encoding="utf-8")
    return spec_path


# -- flat key=value persistence ---------------------------------------------


def _fmt(value):
    if isinstance(value, tuple):
        return ",".join(_fmt(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _spec_lines(n_records, params):
    lines = [f"n_records={n_records}"]
    for f in dataclasses.fields(SynthParams):
        lines.append(f"{f.name}={_fmt(getattr(params, f.name))}")
    return "\n".join(lines) + "\n"


def spec_to_text(spec: SynthDatasetSpec) -> str:
    return _spec_lines(spec.n_records, spec.params)


def spec_from_text(text: str) -> SynthDatasetSpec:
    kv = {}
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, _, value = line.partition("=")
        kv[key.strip()] = value.strip()
    defaults = SynthParams()
    kwargs = {}
    for f in dataclasses.fields(SynthParams):
        if f.name not in kv:
            continue
        default = getattr(defaults, f.name)
        raw = kv[f.name]
        if isinstance(default, tuple):
            kind = type(default[0])
            kwargs[f.name] = tuple(kind(v) for v in raw.split(","))
        else:
            kwargs[f.name] = type(default)(raw)
    n_records = int(kv.get("n_records", SynthDatasetSpec.n_records))
    return SynthDatasetSpec(n_records, SynthParams(**kwargs))


def save_spec(spec: SynthDatasetSpec, path):
    Path(path).write_text(spec_to_text(spec), encoding="utf-8")


def load_spec(path) -> SynthDatasetSpec:
    return spec_from_text(Path(path).read_text(encoding="utf-8"))
