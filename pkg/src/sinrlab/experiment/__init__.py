"""Configuration, data generation, training, evaluation and the command line."""
