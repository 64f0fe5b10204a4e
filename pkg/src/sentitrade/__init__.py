"""Tweet sentiment features, gradient-boosted direction classifier and walk-forward backtest."""

__version__ = "0.1.0"
