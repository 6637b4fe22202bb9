"""Rehearsal with auxiliary-informed sampling for continual deepfake detection.

The package is organised bottom-up:

numcore
    softmax variants, losses, Adam, seeded RNG streams.
model
    detector (extractor + classification head) and auxiliary label generator.
memory
    segment buffer and auxiliary-informed selection.
samplers
    baseline selection policies (random, reservoir, class-balanced, herding).
datagen
    synthetic experience stream.
metrics
    EER, average EER, forgetting rate.
harness
    sequential training protocol and method matrix.
cli
    command-line entry point.
"""

__version__ = "0.1.0"
