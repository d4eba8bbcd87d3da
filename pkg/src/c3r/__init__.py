"""Causal-completeness toolkit: exact scoring over discrete causal tables,
risk estimators with differentiable surrogates, a min-max regularized
trainer for a small multimodal encoder, a synthetic dataset generator, and
an evaluation suite with computable risk bounds."""

__version__ = "0.1.0"
