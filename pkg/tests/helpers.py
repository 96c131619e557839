from memefuse.config import Config


def tiny_config(**overrides) -> Config:
    """Desk-scale configuration used throughout the tests."""
    cfg = Config()
    cfg.text.h12, cfg.text.h3, cfg.text.dropout = 4, 4, 0.0
    cfg.fusion.d = 8
    cfg.image.c, cfg.image.m, cfg.image.p, cfg.image.size, cfg.image.proj = 2, 3, 0.0, 16, 6
    cfg.train.batch, cfg.train.epochs, cfg.train.lr = 20, 2, 0.01
    for key, value in overrides.items():
        cfg.set(key.replace("__", "."), value)
    return cfg.validate()
