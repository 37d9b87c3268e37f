"""eqforge: equilibrium states of torus diffeomorphisms from weighted unstable-leaf measures."""

__version__ = "0.1.0"
