"""RGB-event single-object tracking pipeline with frequency-domain fusion and motion-guided token sparsification."""

__version__ = "0.1.0"
