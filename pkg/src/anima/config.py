"""Engine configuration."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

from .responders import LoopConfig


@dataclass(frozen=True)
class EngineConfig:
    # The quick message is always emitted by default: a reflexive reply masks
    # analysis latency even for complex inputs and keeps the turn shape
    # predictable. Disable for quick-less turns (analytical only).
    always_quick: bool = True
    window_size: int = 20
    loop: LoopConfig = field(default_factory=LoopConfig)
    # fixed: every session draws from the same seeded stream; per_session:
    # the stream is derived from (seed, session id).
    seed_mode: str = "fixed"
    consolidation_interval: int = 10
    retrieval_k_responders: int = 5
    retrieval_k_rethink: int = 3
    split_perspectives: bool = False
    # Benchmark mode: run the dispatch phase one task at a time instead of
    # concurrently, to measure the overlap gain.
    phase_a_serial: bool = False
    max_backlog: int = 8

    @classmethod
    def from_dict(cls, data: dict) -> "EngineConfig":
        """Build from a config mapping; accepts nested or dotted loop keys."""
        flat = dict(data)
        loop_data = dict(flat.pop("loop", {}) or {})
        for key in list(flat):
            if key.startswith("loop."):
                loop_data[key.split(".", 1)[1]] = flat.pop(key)
        loop = LoopConfig(
            continuation_probability=float(
                loop_data.get("continuation_probability", 0.5)),
            max_analytical_messages=int(loop_data.get("max_analytical_messages", 3)),
            rng_seed=int(loop_data.get("rng_seed", loop_data.get("seed", 0))),
        )
        seed_mode = str(loop_data.get("seed_mode", flat.pop("seed_mode", "fixed")))
        if seed_mode not in ("fixed", "per_session"):
            raise ValueError(f"seed_mode must be fixed|per_session, got {seed_mode!r}")
        known = {f for f in cls.__dataclass_fields__ if f not in ("loop", "seed_mode")}
        kwargs = {k: v for k, v in flat.items() if k in known}
        return cls(loop=loop, seed_mode=seed_mode, **kwargs)

    def with_seed(self, seed: int) -> "EngineConfig":
        return replace(self, loop=replace(self.loop, rng_seed=seed))
