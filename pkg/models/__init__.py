"""
Dataclasses for regions, paths, estimates, clouds, lattices and experiment configs.
"""
