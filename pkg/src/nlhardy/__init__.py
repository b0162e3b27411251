"""Mixed Dirichlet-Neumann fractional Hardy problems on uniform grids."""
