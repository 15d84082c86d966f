"""Spherical-Earth geometry for a LEO pass over a user population.

The array frame of the satellite is north-east-down at the sub-satellite
point: boresight points to nadir, ``u`` is the direction cosine towards
local north and ``v`` towards local east.  All functions accept scalars or
numpy arrays of latitudes/longitudes (degrees) and broadcast.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DegenerateMixture, NotVisible

EARTH_GM = 3.986004418e14  # m^3/s^2


@dataclass(frozen=True)
class OrbitConfig:
    altitude: float = 1000.0  # km
    earth_radius: float = 6371.0  # km
    min_elevation: float = 30.0  # deg

    def __post_init__(self):
        if not self.altitude > 0:
            raise ValueError("altitude must be positive")
        if not 0 < self.min_elevation < 90:
            raise ValueError("min_elevation must lie in (0, 90) degrees")

    @property
    def orbit_radius_m(self) -> float:
        return (self.earth_radius + self.altitude) * 1e3

    @property
    def earth_radius_m(self) -> float:
        return self.earth_radius * 1e3

    @property
    def angular_rate(self) -> float:
        """Orbital angular rate of a circular orbit (rad/s)."""
        return math.sqrt(EARTH_GM / self.orbit_radius_m**3)

    def footprint_angle(self, elevation_deg: float | None = None) -> float:
        """Earth-central angle (rad) from nadir to the ``elevation_deg`` contour."""
        eps = math.radians(self.min_elevation if elevation_deg is None else elevation_deg)
        eta = math.asin(self.earth_radius_m * math.cos(eps) / self.orbit_radius_m)
        return math.pi / 2 - eps - eta


@dataclass(frozen=True)
class GroundPosition:
    latitude: float
    longitude: float

    def __post_init__(self):
        if abs(self.latitude) > 90:
            raise ValueError(f"latitude out of range: {self.latitude}")
        if not -180 <= self.longitude < 180:
            raise ValueError(f"longitude out of range: {self.longitude}")


@dataclass(frozen=True)
class UvCoordinate:
    u: float
    v: float


@dataclass(frozen=True)
class PassInstant:
    time: float
    sub_satellite_point: GroundPosition

    def __post_init__(self):
        if self.time < 0:
            raise ValueError("time must be non-negative")


@dataclass
class UserPopulation:
    latitude: np.ndarray
    longitude: np.ndarray
    density_weight: np.ndarray

    def __post_init__(self):
        if len(self.latitude) == 0:
            raise ValueError("population must be non-empty")
        if not np.all(np.isfinite(self.density_weight)):
            raise ValueError("density weights must be finite")

    def __len__(self):
        return len(self.latitude)

    @property
    def positions(self) -> list[GroundPosition]:
        return [GroundPosition(float(a), float(b)) for a, b in zip(self.latitude, self.longitude)]


def wrap_longitude(lon):
    return (np.asarray(lon) + 180.0) % 360.0 - 180.0


def unit_vector(lat, lon) -> np.ndarray:
    """Geocentric unit vector(s), shape ``(..., 3)``."""
    la, lo = np.radians(lat), np.radians(lon)
    return np.stack([np.cos(la) * np.cos(lo), np.cos(la) * np.sin(lo), np.sin(la)], axis=-1)


def _to_latlon(n: np.ndarray):
    lat = np.degrees(np.arcsin(np.clip(n[..., 2], -1.0, 1.0)))
    lon = np.degrees(np.arctan2(n[..., 1], n[..., 0]))
    return lat, wrap_longitude(lon)


def _north_east(lat, lon):
    la, lo = np.radians(lat), np.radians(lon)
    north = np.stack([-np.sin(la) * np.cos(lo), -np.sin(la) * np.sin(lo), np.cos(la)], axis=-1)
    east = np.stack([-np.sin(lo), np.cos(lo), np.zeros_like(lo)], axis=-1)
    return north, east


def destination(lat, lon, bearing_deg, angle_rad):
    """Point reached from (lat, lon) along a great circle with initial bearing."""
    n = unit_vector(lat, lon)
    north, east = _north_east(lat, lon)
    b = np.radians(bearing_deg)
    heading = np.cos(b)[..., None] * north + np.sin(b)[..., None] * east
    a = np.asarray(angle_rad)[..., None]
    return _to_latlon(np.cos(a) * n + np.sin(a) * heading)


def great_circle_distance(lat1, lon1, lat2, lon2, radius: float = 6371.0):
    """Haversine distance, in the units of ``radius``."""
    p1, p2 = np.radians(lat1), np.radians(lat2)
    dp = p2 - p1
    dl = np.radians(np.asarray(lon2) - np.asarray(lon1))
    h = np.sin(dp / 2) ** 2 + np.cos(p1) * np.cos(p2) * np.sin(dl / 2) ** 2
    return 2 * radius * np.arcsin(np.sqrt(np.clip(h, 0.0, 1.0)))


def look_angles(sat_lat, sat_lon, orbit: OrbitConfig, lat, lon):
    """Slant range (m), elevation (deg), and (u, v) for broadcastable satellite/user arrays.

    ``sat_lat``/``sat_lon`` give sub-satellite points; with shape ``(n, 1)``
    against users of shape ``(n, k)`` this evaluates ``n`` instants at once.
    """
    n_sat = unit_vector(sat_lat, sat_lon)
    n_user = unit_vector(lat, lon)
    d = orbit.earth_radius_m * n_user - orbit.orbit_radius_m * n_sat
    rng = np.linalg.norm(d, axis=-1)
    sin_e = -np.sum(d * n_user, axis=-1) / rng
    r_hat = d / rng[..., None]
    north, east = _north_east(sat_lat, sat_lon)
    u = np.sum(r_hat * north, axis=-1)
    v = np.sum(r_hat * east, axis=-1)
    return rng, np.degrees(np.arcsin(np.clip(sin_e, -1.0, 1.0))), u, v


def _look(sat: PassInstant, orbit: OrbitConfig, lat, lon):
    p = sat.sub_satellite_point
    return look_angles(p.latitude, p.longitude, orbit, lat, lon)


def slant_range(sat: PassInstant, orbit: OrbitConfig, lat, lon):
    """Straight-line satellite-to-user distance in metres."""
    return _look(sat, orbit, lat, lon)[0]


def slant_range_from_elevation(elevation_deg, orbit: OrbitConfig):
    """Closed-form slant range (m) for a given elevation angle."""
    r = orbit.earth_radius_m
    h = orbit.altitude * 1e3
    s = np.sin(np.radians(elevation_deg))
    return np.sqrt((r * s) ** 2 + 2 * r * h + h * h) - r * s


def elevation_angle(sat: PassInstant, orbit: OrbitConfig, lat, lon):
    """Elevation of the satellite seen from the user, degrees (negative below horizon)."""
    return _look(sat, orbit, lat, lon)[1]


def uv_coordinates(sat: PassInstant, orbit: OrbitConfig, lat, lon):
    """Direction cosines ``(u, v)`` of users in the array frame.

    No visibility check; see :func:`uv_of_user` for the checked scalar form.
    """
    _, _, u, v = _look(sat, orbit, lat, lon)
    return u, v


def off_nadir_angle(sat: PassInstant, orbit: OrbitConfig, lat, lon):
    """Angle (rad) between nadir and the direction towards the user."""
    p = sat.sub_satellite_point
    nadir = -unit_vector(p.latitude, p.longitude)
    d = orbit.earth_radius_m * unit_vector(lat, lon) + orbit.orbit_radius_m * nadir
    return np.arctan2(np.linalg.norm(np.cross(d, nadir), axis=-1), d @ nadir)


def uv_of_user(sat: PassInstant, orbit: OrbitConfig, user: GroundPosition) -> UvCoordinate:
    if elevation_angle(sat, orbit, user.latitude, user.longitude) < 0:
        raise NotVisible(f"user at {user} is below the horizon")
    u, v = uv_coordinates(sat, orbit, user.latitude, user.longitude)
    return UvCoordinate(float(u), float(v))


@dataclass(frozen=True)
class SatellitePass:
    """Great-circle pass at constant altitude that overflies ``center``.

    Time zero is the instant the satellite rises above the minimum
    elevation seen from ``center``.
    """

    orbit: OrbitConfig
    center: GroundPosition
    heading: float = 0.0  # deg, ground-track bearing at the center

    @property
    def duration(self) -> float:
        return 2 * self.orbit.footprint_angle() / self.orbit.angular_rate

    def along_track(self, time):
        """Signed along-track angle (rad) from the center at ``time``."""
        return self.orbit.angular_rate * np.asarray(time, dtype=float) - self.orbit.footprint_angle()

    def at(self, time: float) -> PassInstant:
        lat, lon = destination(self.center.latitude, self.center.longitude,
                               self.heading, self.along_track(time))
        return PassInstant(float(time), GroundPosition(float(lat), float(lon)))

    def sample_instant(self, rng: np.random.Generator) -> PassInstant:
        return self.at(rng.uniform(0.0, self.duration))

    def time_until_set(self, time: float, lat, lon, iterations: int = 60):
        """Seconds from ``time`` until each user's elevation drops below minimum.

        Users already below the minimum elevation get 0.
        """
        c = unit_vector(self.center.latitude, self.center.longitude)
        north, east = _north_east(self.center.latitude, self.center.longitude)
        b = math.radians(self.heading)
        e_h = math.cos(b) * north + math.sin(b) * east
        n_u = np.atleast_2d(unit_vector(lat, lon))
        closest = np.arctan2(n_u @ e_h, n_u @ c)
        now = float(self.along_track(time))
        r_s = self.orbit.orbit_radius_m
        r_e = self.orbit.earth_radius_m
        sin_min = math.sin(math.radians(self.orbit.min_elevation))

        def sin_elev(a):
            s = r_s * (np.cos(a)[:, None] * c + np.sin(a)[:, None] * e_h)
            d = r_e * n_u - s
            return -np.sum(d * n_u, axis=-1) / np.linalg.norm(d, axis=-1)

        lo = np.maximum(now, closest)
        hi = closest + math.pi / 2
        visible = sin_elev(np.full(len(n_u), now)) >= sin_min
        for _ in range(iterations):
            mid = 0.5 * (lo + hi)
            above = sin_elev(mid) >= sin_min
            lo = np.where(above, mid, lo)
            hi = np.where(above, hi, mid)
        dt = (lo - now) / self.orbit.angular_rate
        out = np.where(visible, dt, 0.0)
        return out if np.ndim(lat) else float(out[0])


@dataclass(frozen=True)
class Cluster:
    north: float  # km offset of the cluster centre from the area centre
    east: float  # km
    sigma: float  # km
    weight: float = 1.0


@dataclass(frozen=True)
class ClusterSpec:
    center: GroundPosition
    clusters: tuple[Cluster, ...] = field(default_factory=tuple)

    def weights(self) -> np.ndarray:
        w = np.array([c.weight for c in self.clusters], dtype=float)
        if len(w) == 0 or np.any(w < 0) or not np.any(w > 0):
            raise DegenerateMixture("mixture weights must be non-negative and not all zero")
        return w / w.sum()

    def density(self, north, east) -> np.ndarray:
        """Mixture density (1/km^2) on the local ground plane."""
        w = self.weights()
        north = np.asarray(north, dtype=float)[..., None]
        east = np.asarray(east, dtype=float)[..., None]
        mn = np.array([c.north for c in self.clusters])
        me = np.array([c.east for c in self.clusters])
        s = np.array([c.sigma for c in self.clusters])
        r2 = ((north - mn) ** 2 + (east - me) ** 2) / s**2
        return np.sum(w * np.exp(-0.5 * r2) / (2 * np.pi * s**2), axis=-1)


def _plane_to_latlon(center: GroundPosition, north, east, radius_km):
    dist = np.hypot(north, east) / radius_km
    bearing = np.degrees(np.arctan2(east, north))
    return destination(center.latitude, center.longitude, bearing, dist)


def sample_mixture(rng: np.random.Generator, shape, spec: ClusterSpec, orbit: OrbitConfig | None = None,
                   max_rounds: int = 1000):
    """Ground-plane (north, east) offsets in km, array ``shape``, drawn from the mixture.

    With ``orbit`` given, draws whose elevation towards a satellite above
    the centre is below the minimum are redrawn.
    """
    w = spec.weights()
    mn = np.array([c.north for c in spec.clusters])
    me = np.array([c.east for c in spec.clusters])
    s = np.array([c.sigma for c in spec.clusters])
    radius = orbit.earth_radius if orbit is not None else 6371.0
    north = np.empty(shape)
    east = np.empty(shape)
    todo = np.ones(shape, dtype=bool)
    for _ in range(max_rounds):
        n = int(todo.sum())
        if n == 0:
            return north, east
        k = rng.choice(len(w), size=n, p=w)
        north[todo] = mn[k] + s[k] * rng.standard_normal(n)
        east[todo] = me[k] + s[k] * rng.standard_normal(n)
        if orbit is None:
            todo[:] = False
            continue
        lat, lon = _plane_to_latlon(spec.center, north, east, radius)
        _, elev, _, _ = look_angles(spec.center.latitude, spec.center.longitude, orbit, lat, lon)
        todo &= elev < orbit.min_elevation
    raise DegenerateMixture("could not place users inside the footprint; move the clusters towards the centre")


def drop_user_batch(rng: np.random.Generator, shape, spec: ClusterSpec, orbit: OrbitConfig | None = None):
    """Latitudes and longitudes of an array of users drawn from the mixture."""
    north, east = sample_mixture(rng, shape, spec, orbit)
    radius = orbit.earth_radius if orbit is not None else 6371.0
    return _plane_to_latlon(spec.center, north, east, radius)


def drop_users(seed, count: int, spec: ClusterSpec, orbit: OrbitConfig | None = None) -> UserPopulation:
    """Sample ``count`` users from a Gaussian mixture on the ground plane.

    Positions are local (north, east) offsets around ``spec.center`` mapped
    to the sphere along great circles; ``density_weight`` is the mixture
    density at each user divided by the population maximum.  With ``orbit``
    given, only users inside the footprint of a satellite above the centre
    are kept.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    spec.weights()
    rng = np.random.default_rng(seed)
    north, east = sample_mixture(rng, (count,), spec, orbit)
    radius = orbit.earth_radius if orbit is not None else 6371.0
    lat, lon = _plane_to_latlon(spec.center, north, east, radius)
    dens = spec.density(north, east)
    return UserPopulation(np.atleast_1d(lat), np.atleast_1d(lon), dens / dens.max())
