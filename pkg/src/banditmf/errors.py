class BanditMFError(ValueError):
    """Base class for errors raised on invalid input or failed computation."""


class DatasetError(BanditMFError):
    pass


class TrainingDiverged(BanditMFError):
    def __init__(self, epoch: int, loss: float):
        super().__init__(f"training diverged at epoch {epoch} (loss={loss!r})")
        self.epoch = epoch
        self.loss = loss


class InsufficientOverlap(BanditMFError):
    pass


class ClusterExhausted(BanditMFError):
    pass
