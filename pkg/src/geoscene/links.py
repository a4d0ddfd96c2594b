"""External map links for a coordinate, for hand-off to other tools."""

from __future__ import annotations

DEFAULT_ZOOM = 18


def build_external_links(lat: float, lon: float, zoom: int = DEFAULT_ZOOM) -> dict[str, str]:
    """Map-view URLs for the big providers plus street-level imagery.

    Coordinates are formatted to five decimals (about meter precision).
    """
    if not (-90.0 <= lat <= 90.0 and -180.0 <= lon <= 180.0):
        raise ValueError(f"coordinates out of range: ({lat}, {lon})")
    lat_s = f"{lat:.5f}"
    lon_s = f"{lon:.5f}"
    return {
        "google": f"https://www.google.com/maps/search/?api=1&query={lat_s}%2C{lon_s}",
        "bing": f"https://www.bing.com/maps?cp={lat_s}~{lon_s}&lvl={zoom}",
        # Yandex wants lon,lat order
        "yandex": f"https://yandex.com/maps/?ll={lon_s}%2C{lat_s}&z={zoom}",
        "street_level": f"https://kartaview.org/map/@{lat_s},{lon_s},{zoom}z",
    }
