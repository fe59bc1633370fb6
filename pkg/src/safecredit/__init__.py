"""safecredit: learning unknown safety constraints from trajectory labels.

The package learns a safety constraint (per-step cost structure and budget)
from trajectory-level binary safe/unsafe labels, assigns per-timestep safety
credit, and optimizes a reward-maximizing policy subject to the learned
constraint with a Lagrangian PPO solver. Selective labeling keeps the human
(or scripted oracle) feedback budget small.
"""

__version__ = "0.1.0"
