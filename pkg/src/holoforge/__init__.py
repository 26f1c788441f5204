"""RGB-only volumetric hologram toolkit: depth-estimating CNN + FFT wave optics.

Kept import-light on purpose: the CLI applies the HOLOFORGE_THREADS cap
before numpy is first loaded, so nothing heavy may be imported here.
"""

__version__ = "0.1.0"
