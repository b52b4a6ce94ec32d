"""Competitive-ratio approximation for online makespan scheduling, solved as
a finite min-max game over trimmed schedule summaries, plus an exact solver
for the bounded-size semi-online variant."""

__version__ = "0.1.0"
