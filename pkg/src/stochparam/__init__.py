"""Locality assumptions in stochastic parameterisations: a numerical testbed.

Subpackages cover the deterministic dynamical cores (``dynamics``), synthetic
stochastic error processes (``forcing``), climate and weather scoring rules
(``scores``), data-driven conditional error models (``mdn``), experiment
orchestration (``harness``), persistent file formats (``io``) and ready-made
experiment pipelines (``pipelines``). ``stochparam.cli`` is the command-line
front end.
"""

__version__ = "0.1.0"

from . import dynamics, forcing, harness, io, mdn, pipelines, scores  # noqa: F401
