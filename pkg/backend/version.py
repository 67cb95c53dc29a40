"""DeFusion version information."""

VERSION = "2026.10.1"
BUILD_NUMBER = 1
VERSION_NAME = "Desk-scale DeFusion"


def get_version_string() -> str:
    """Return formatted version string."""
    return f"{VERSION_NAME} {VERSION} (build {BUILD_NUMBER})"
