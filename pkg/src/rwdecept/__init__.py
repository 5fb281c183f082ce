"""rwdecept: a desk-scale ransomware deception sandbox.

Pipeline: a knowledge base of behavioral artifacts (dataflow subgraphs,
crypto function fingerprints, extension/keyword lists), a staged real-time
monitor that identifies and deceives simulated ransomware at the API level,
and a reset-loop orchestrator that patches confirmed samples into infinite
key-regeneration loops to deplete a simulated attacker backend.
"""

__version__ = "0.1.0"

from ._kernels import BACKEND as KERNEL_BACKEND  # noqa: F401
