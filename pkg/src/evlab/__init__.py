"""evlab: pseudo-spectral incompressible flow on the torus with an
energy-variational certificate engine and maximal-dissipation selection."""

__version__ = "0.1.0"
