"""Pass detection toolkit: features, sequence classifier, evaluation, annotation."""

__version__ = "0.1.0"
