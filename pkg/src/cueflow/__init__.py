"""cueflow: cue-word driven multi-turn dialogue with a reinforcement-learned
cue selection policy, a hand-backpropagated LSTM generator, and an
evaluation pipeline for simulated conversations."""

__version__ = "0.1.0"
