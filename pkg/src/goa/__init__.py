"""Graph of Agents: long-document QA through an input-dependent linear forest of worker agents."""

__version__ = "0.1.0"
