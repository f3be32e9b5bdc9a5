"""Schema-driven WSN telemetry engine with checkpointed, seekable replay."""

__version__ = "0.1.0"
