"""bldc: a desk-scale laboratory for cloning blindfolded demonstrators.

Procedurally generated gridworld tasks are demonstrated by scripted experts
whose view of the world can be restricted ("blindfolded"); the resulting
trajectories, always logged with full observations, are cloned into a
recurrent sequence policy whose generalization across unseen tasks can be
measured empirically and bounded analytically.
"""

__version__ = "0.1.0"
