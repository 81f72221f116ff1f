"""
Analytic targets, path samplers, estimators, clouds, the lattice oracle and the results ledger.
"""
