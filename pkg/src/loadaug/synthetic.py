"""Synthetic household load/weather data.

Produces a week of hourly rows shaped like a small rural household in spring:
diurnal clear-sky radiation modulated by daily cloudiness, lagged temperature
swing, slowly drifting high-altitude pressure, and a load profile with morning
and evening peaks that also responds to temperature and daylight. Column
means and standard deviations are calibrated to published summary values for
such a site, so the data can stand in for the real file in tests and demos.
"""

from __future__ import annotations

import numpy as np

from .dataset import VALUE_COLUMNS, TimeSeriesDataset
from .numerics.rng import standard_normal, substream, uniform_open

# (mean, std) per value column
TARGET_MOMENTS = {
    "temperature": (12.1151, 3.5519),
    "pressure": (805.4252, 2.1036),
    "wind_speed": (3.0823, 2.0580),
    "wind_direction": (200.2355, 112.9504),
    "ghi": (223.0501, 299.1725),
    "dni": (174.3329, 280.0541),
    "dhi": (95.8374, 114.8145),
    "load": (0.0846, 0.0796),
}


def _smooth(x: np.ndarray, width: int) -> np.ndarray:
    kernel = np.ones(width) / width
    padded = np.pad(x, width, mode="edge")
    return np.convolve(padded, kernel, mode="same")[width:-width]


def _affine_to(x: np.ndarray, mean: float, std: float) -> np.ndarray:
    return (x - x.mean()) / x.std(ddof=1) * std + mean


def _raw_week(gen: np.random.Generator, n: int, hour0: int):
    hours = (hour0 + np.arange(n)) % 24
    day = (hour0 + np.arange(n)) // 24
    n_days = int(day.max()) + 1

    clear = np.clip(np.sin(np.pi * (hours - 7.0) / 13.0), 0.0, None) ** 1.4
    cloud_day = 0.35 + 0.65 * uniform_open(gen, n_days)
    cloud = np.clip(cloud_day[day] + 0.12 * standard_normal(gen, n), 0.05, 1.0)
    ghi = 950.0 * clear * cloud
    dni = np.clip(1.05 * ghi * cloud**1.5 - 20.0 * clear, 0.0, None)
    dhi = np.clip(ghi - 0.8 * dni * clear, 0.0, None)

    warm_day = 2.0 * standard_normal(gen, n_days)
    swing = -np.cos(2.0 * np.pi * (hours - 3.0) / 24.0)
    temperature = (
        12.0 + warm_day[day] + 4.5 * swing * (0.6 + 0.4 * cloud) + 0.6 * standard_normal(gen, n)
    )

    pressure = np.cumsum(0.35 * standard_normal(gen, n))
    pressure = _smooth(pressure, 6) - 0.6 * np.cos(2.0 * np.pi * hours / 12.0)

    gust = np.abs(standard_normal(gen, n))
    wind_speed = np.clip(_smooth(1.0 + 1.6 * gust + 1.2 * clear, 3), 0.1, None)
    heading = _smooth(np.cumsum(25.0 * standard_normal(gen, n)), 3)
    wind_direction = np.mod(200.0 + heading, 360.0)

    morning = np.exp(-0.5 * ((hours - 7.5) / 1.2) ** 2)
    evening = np.exp(-0.5 * ((hours - 20.0) / 1.8) ** 2)
    cold = np.clip(10.0 - temperature, 0.0, None)
    load = (
        0.012
        + 0.09 * morning
        + 0.27 * evening
        + 0.01 * cold
        + 0.01 * (1.0 - cloud) * (clear > 0)
        + 0.01 * np.abs(standard_normal(gen, n)) * (1.0 + 3.0 * evening)
    )
    return {
        "temperature": temperature,
        "pressure": pressure,
        "wind_speed": wind_speed,
        "wind_direction": wind_direction,
        "ghi": ghi,
        "dni": dni,
        "dhi": dhi,
        "load": load,
    }


def _calibrate(raw: dict) -> np.ndarray:
    cols = []
    for name in VALUE_COLUMNS:
        mean, std = TARGET_MOMENTS[name]
        x = raw[name]
        if name in ("ghi", "dni", "dhi", "load"):
            x = x * (mean / x.mean())  # scale only: zeros and the load floor stay put
        elif name == "wind_direction":
            x = np.mod(_affine_to(x, mean, std), 360.0)
        else:
            x = _affine_to(x, mean, std)
        if name in ("wind_speed", "load"):
            x = np.clip(x, 0.0, None)
        cols.append(x)
    return np.column_stack(cols)


def household_standin(seed: int = 2024, start: str = "2024-04-16T00", hours: int = 168) -> TimeSeriesDataset:
    """Hourly dataset with the same schema and similar statistics as the
    original 168-row household file."""
    gen = substream(seed, "synthetic", "household")
    t0 = np.datetime64(start, "h")
    hour0 = int((t0 - t0.astype("datetime64[D]")).astype(int))
    values = _calibrate(_raw_week(gen, hours, hour0))
    return TimeSeriesDataset(t0 + np.arange(hours), values, "original")


def next_day_features(seed: int = 2024) -> tuple[np.ndarray, np.ndarray]:
    """Timestamps and 24 rows of weather features for the day after the
    stand-in week, drawn from the same process so values share its ranges."""
    extended = household_standin(seed, hours=192)
    return extended.timestamps[168:], extended.features[168:]


def write_sample_files(directory) -> None:
    """Write the stand-in week and next-day feature file as CSV."""
    from pathlib import Path

    import pandas as pd

    from .dataset import FEATURE_COLUMNS

    directory = Path(directory)
    ds = household_standin()
    frame = ds.to_frame().drop(columns="source")
    frame.to_csv(directory / "household_standin.csv", index=False, float_format="%.6f", lineterminator="\n")
    ts, feats = next_day_features()
    nd = pd.DataFrame(feats, columns=list(FEATURE_COLUMNS))
    nd.insert(0, "timestamp", [str(t) + ":00:00" for t in ts])
    nd.to_csv(directory / "next_day_features.csv", index=False, float_format="%.6f", lineterminator="\n")
