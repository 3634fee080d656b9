import pytest

from anima.config import EngineConfig


class TestEngineConfig:
    def test_defaults(self):
        cfg = EngineConfig()
        assert cfg.always_quick
        assert cfg.loop.continuation_probability == 0.5
        assert cfg.loop.max_analytical_messages == 3
        assert cfg.consolidation_interval == 10
        assert cfg.retrieval_k_responders == 5
        assert cfg.retrieval_k_rethink == 3
        assert cfg.seed_mode == "fixed"

    def test_from_dict_dotted_keys(self):
        cfg = EngineConfig.from_dict({
            "loop.continuation_probability": 0.3,
            "loop.max_analytical_messages": 5,
            "loop.seed_mode": "per_session",
            "always_quick": False,
        })
        assert cfg.loop.continuation_probability == 0.3
        assert cfg.loop.max_analytical_messages == 5
        assert cfg.seed_mode == "per_session"
        assert not cfg.always_quick

    def test_from_dict_nested(self):
        cfg = EngineConfig.from_dict({"loop": {"rng_seed": 9}})
        assert cfg.loop.rng_seed == 9

    def test_bad_seed_mode(self):
        with pytest.raises(ValueError):
            EngineConfig.from_dict({"loop.seed_mode": "chaotic"})

    def test_with_seed(self):
        assert EngineConfig().with_seed(42).loop.rng_seed == 42
