"""Cross-field THz UM-MIMO channel simulation and estimation."""
