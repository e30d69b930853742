"""Volume-integral-equation light-scattering toolkit on voxel grids.

Wavenumber convention: all lengths are expressed in k = 1 units, fields
carry the exp(i omega t) time factor, and the outgoing kernel is
exp(-ik|r - r'|)/(4 pi |r - r'|).
"""

__version__ = "0.1.0"
