"""kNN-augmented phone/text transformer for ASR slot error correction."""
