"""docrag: hybrid retrieval, reranking and QA evaluation for tool documentation."""

__version__ = "0.1.0"
