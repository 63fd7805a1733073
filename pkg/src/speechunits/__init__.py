"""Discrete speech-unit pretraining for multilingual sequence-to-text recognition.

Pipeline: synthesize a seeded multilingual audio-visual corpus, quantize
feature streams into compact unit IDs with k-means, pretrain a unit-to-text
transformer under a progressive audio-masking curriculum, finetune on
continuous features, and measure everything (WER, speaker-probe EER, unit
purity, throughput).
"""

__version__ = "0.1.0"
