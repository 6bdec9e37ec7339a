"""Geodesic distances, bearings and relative antenna orientation angles.

All cell-to-cell geometry is expressed relative to the pair (distance
along the great circle, plus three fold-to-[0,180] angles), never in
absolute coordinates, so that downstream models stay portable across
geographical regions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

# Mean Earth radius (IUGG mean radius R1), meters.
EARTH_RADIUS_M = 6_371_008.8

# Below this separation bearings are numerically meaningless (under GPS
# precision); angle features are masked instead of computed.
CO_LOCATION_THRESHOLD_M = 0.5


class CoLocatedSites(ValueError):
    """Two sites are too close for a bearing to be defined."""


@dataclass(frozen=True)
class GeoPoint:
    """A WGS-84 style lat/lon position in degrees.

    Latitude must lie in [-90, 90]; longitude is normalized into
    [-180, 180) on construction.
    """

    lat: float
    lon: float

    def __post_init__(self):
        if not (-90.0 <= self.lat <= 90.0):
            raise ValueError(f"latitude {self.lat} outside [-90, 90]")
        if not math.isfinite(self.lon):
            raise ValueError(f"longitude {self.lon} is not finite")
        lon = ((self.lon + 180.0) % 360.0) - 180.0
        object.__setattr__(self, "lon", lon)


@dataclass(frozen=True)
class Azimuth:
    """Antenna pointing direction, degrees clockwise from true North.

    For omnidirectional antennas ``is_omni`` is set and the numeric value
    is ignored by every consumer (edge angles get masked instead).
    """

    value: float = 0.0
    is_omni: bool = False

    def __post_init__(self):
        if not math.isfinite(self.value):
            raise ValueError("azimuth value is not finite")
        object.__setattr__(self, "value", self.value % 360.0)


@dataclass(frozen=True)
class EdgeGeometry:
    """Relative geometry of an ordered cell pair (src, dst).

    ``d`` is the great-circle distance between the two sites in meters.
    ``alpha`` is the angle between the src boresight and the src->dst
    direction, ``theta`` the angle between the dst boresight and the
    dst->src direction, and ``rho`` the angle between the two boresights.
    All three are folded into [0, 180] and only meaningful when
    ``angles_valid`` is set (both antennas sectored, sites not co-located).
    """

    d: float
    alpha: float
    theta: float
    rho: float
    angles_valid: bool

    def __post_init__(self):
        if self.d < 0.0:
            raise ValueError("distance must be non-negative")
        if self.angles_valid:
            for name in ("alpha", "theta", "rho"):
                v = getattr(self, name)
                if not (0.0 <= v <= 180.0):
                    raise ValueError(f"{name}={v} outside [0, 180]")


def geodesic_distance(a: GeoPoint, b: GeoPoint) -> float:
    """Great-circle (haversine) distance between two points, in meters."""
    phi1 = math.radians(a.lat)
    phi2 = math.radians(b.lat)
    dphi = math.radians(b.lat - a.lat)
    dlam = math.radians(b.lon - a.lon)
    h = (
        math.sin(dphi / 2.0) ** 2
        + math.cos(phi1) * math.cos(phi2) * math.sin(dlam / 2.0) ** 2
    )
    # atan2 form is stable for antipodal-ish points, unlike 2*asin(sqrt(h))
    return 2.0 * EARTH_RADIUS_M * math.atan2(math.sqrt(h), math.sqrt(max(0.0, 1.0 - h)))


def initial_bearing(a: GeoPoint, b: GeoPoint) -> float:
    """Initial great-circle bearing at ``a`` toward ``b``.

    Returns degrees clockwise from true North in [0, 360). Raises
    CoLocatedSites when the points are closer than the co-location
    threshold, where a bearing is undefined.
    """
    if geodesic_distance(a, b) < CO_LOCATION_THRESHOLD_M:
        raise CoLocatedSites(
            f"sites {a} and {b} are within {CO_LOCATION_THRESHOLD_M} m"
        )
    phi1 = math.radians(a.lat)
    phi2 = math.radians(b.lat)
    dlam = math.radians(b.lon - a.lon)
    x = math.sin(dlam) * math.cos(phi2)
    y = math.cos(phi1) * math.sin(phi2) - math.sin(phi1) * math.cos(phi2) * math.cos(dlam)
    return (math.degrees(math.atan2(x, y)) + 360.0) % 360.0


def fold_angle(deg: float) -> float:
    """Fold any angle to its minimal absolute equivalent in [0, 180]."""
    folded = abs(deg) % 360.0
    return 360.0 - folded if folded > 180.0 else folded


def relative_angles(
    a: GeoPoint, az_a: Azimuth, b: GeoPoint, az_b: Azimuth
) -> EdgeGeometry:
    """Edge geometry for the ordered pair (a, b).

    Distance is always computed. The three orientation angles are masked
    (zeroed, angles_valid=False) when either antenna is omnidirectional or
    the sites are effectively co-located.
    """
    d = geodesic_distance(a, b)
    if az_a.is_omni or az_b.is_omni or d < CO_LOCATION_THRESHOLD_M:
        return EdgeGeometry(d=d, alpha=0.0, theta=0.0, rho=0.0, angles_valid=False)
    alpha = fold_angle(az_a.value - initial_bearing(a, b))
    theta = fold_angle(az_b.value - initial_bearing(b, a))
    rho = fold_angle(az_a.value - az_b.value)
    return EdgeGeometry(d=d, alpha=alpha, theta=theta, rho=rho, angles_valid=True)


def reverse_edge(edge: EdgeGeometry) -> EdgeGeometry:
    """Geometry of the opposite edge direction without recomputation.

    Swapping src and dst leaves d and rho unchanged and exchanges alpha
    with theta; the result is bit-identical to calling relative_angles
    with the arguments swapped.
    """
    return EdgeGeometry(
        d=edge.d,
        alpha=edge.theta,
        theta=edge.alpha,
        rho=edge.rho,
        angles_valid=edge.angles_valid,
    )
