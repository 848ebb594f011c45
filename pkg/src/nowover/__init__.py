"""Byzantine-resilient clustering over a churn-maintained expander overlay."""

__version__ = "0.1.0"
