"""Data-collecting agents: novelty-driven tree search and double Q-learning."""
