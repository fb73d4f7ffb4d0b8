"""BanditMF: matrix factorization recommenders with a bandit-driven cold-start stage.

Subpackages follow the processing order of the system:

- ``dataset``      rating matrices, catalogs, replay logs, holdout splits
- ``mf``           SGD matrix factorization (base and bias variants)
- ``neighborhood`` user-based CF and the latent-factor hybrid recommender
- ``clustering``   k-means over predicted rating rows, unified preference vectors
- ``bandit``       context-free policies, LinUCB, replay CTR and regret
- ``pipeline``     offline fit, online cold-start sessions, DCG/NDCG
- ``cli``          the ``banditmf`` command
"""

from banditmf.errors import BanditMFError, DatasetError, TrainingDiverged

__version__ = "0.1.0"

__all__ = ["BanditMFError", "DatasetError", "TrainingDiverged", "__version__"]
