"""Phase diagrams from low-depth Hamiltonian-variational VQE runs."""

__version__ = "0.1.0"
