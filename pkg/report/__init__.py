from .plots import emit_plot, emit_series_plot

__all__ = ["emit_plot", "emit_series_plot"]
