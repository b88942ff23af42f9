"""Universal domain adaptation with selective pseudo-labels.

Desk-scale implementation: a minimal autodiff engine, MLP feature
extractor / label classifier / adversarial domain classifier, transfer
score based sample selection, and an unknown-class rejection evaluator.
"""

__version__ = "0.1.0"
