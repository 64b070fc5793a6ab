"""Dual-loop aerial agent runtime.

A deterministic UAV world simulator, a fast reactive control pipeline
(estimation, mapping, planning, safety), and a slow deliberative planning
loop backed by pluggable language-model backends, coupled through a
four-channel context blackboard with human-in-the-loop mission approval.
"""

__version__ = "0.1.0"
