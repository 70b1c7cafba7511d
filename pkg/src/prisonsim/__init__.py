"""Guard/prisoner multi-agent LLM simulation and analysis workbench."""

__version__ = "0.1.0"
