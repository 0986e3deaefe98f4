"""Hard instances and oracle-metered algorithm classes for lower bounds on
first-order methods with a structured nonsmooth coupling and linear constraints.

Subpackages are plain modules: ``instance`` (problem data), ``linops``
(matrix-free operators), ``prox``, ``oracle`` (metering and class checks),
``stationarity`` (residuals), ``algorithms``, ``bruteforce`` (test oracles),
``checks`` (acceptance suites) and ``harness`` (command line).
"""

from .instance import InstanceParams

__all__ = ["InstanceParams"]
__version__ = "0.1.0"
