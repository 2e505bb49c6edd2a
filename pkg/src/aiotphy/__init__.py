"""aiotphy: link-level simulator for the Ambient-IoT physical layer.

Transmit/receive chains for the reader-to-device (PRDCH) and
device-to-reader (PDRCH) channels, TDL-A fading and AWGN impairments,
the random-access procedure, and a Monte-Carlo BLER harness exposed
through a FastAPI service and a thin CLI client.
"""

__version__ = "0.1.0"
