"""Buffer-aided relay key generation: closed-form rates, power allocation and Monte Carlo simulation."""

from .buffer import BufferState, SchemeKind, build_xor_message, recover_at_node_b
from .channel import LinkParams, run_probe_phase, sample_channel
from .keygen import BitKey, GuardBand, difference_pmf, key_length_pmf, quantize_and_reconcile
from .pmf import Pmf
from .rate import key_rate_M, marcum_q1, outage_probability, throughput, throughput_lower_bound

__all__ = [
    "BitKey", "BufferState", "GuardBand", "LinkParams", "Pmf", "SchemeKind", "build_xor_message",
    "difference_pmf", "key_length_pmf", "key_rate_M", "marcum_q1", "outage_probability",
    "quantize_and_reconcile", "recover_at_node_b", "run_probe_phase", "sample_channel", "throughput",
    "throughput_lower_bound",
]
__version__ = "0.1.0"
