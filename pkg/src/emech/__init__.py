"""Lindblad simulations of a driven transmon-cavity-nanomechanical hybrid.

Subpackages are organized in layers: `hilbert` (truncated Fock-space algebra),
`model` (parameters, derived coupling rates, Hamiltonian assembly, polariton
transformation), `dynamics` (master-equation integration), `analysis` (state
metrics, target states, Wigner maps), `protocols` (cooling, Fock and GHZ pulse
sequences) and `cli` (the `emech` command).
"""

__version__ = "0.1.0"
