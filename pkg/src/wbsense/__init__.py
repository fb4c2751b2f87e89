"""Wideband spectrum sensing with dual power-spectrum inputs.

Pipeline: generate labeled multi-user wideband IQ datasets (`siggen`),
compute periodogram and multitaper spectra (`specest`), optionally augment
by subband shuffling (`augment`), train the dual-stream fusion network
(`dsffnet`), calibrate per-subband thresholds and report micro-averaged
detection metrics (`sensing`). The `wbsense` CLI ties these together.
"""

__version__ = "0.1.0"
