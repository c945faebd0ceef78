"""Versioned checkpoints: every ParamStore (with optimizer moments), the
threshold state and RNG states, dumped to a single .npz. Float64 arrays
round-trip bitwise through the npz container."""

import json

import numpy as np

FORMAT_VERSION = 1
_ARRAY_FIELDS = ("W", "b", "gW", "gb", "mW", "vW", "mb", "vb")


def save_checkpoint(path, team, threshold=None, rng_states=None, meta=None):
    arrays = {}
    adam_t = {}
    stores = team.all_stores()
    for name, store in stores.items():
        adam_t[name] = store.adam_t
        for k, lay in enumerate(store.layers):
            for f in _ARRAY_FIELDS:
                arrays[f"{name}|{k}|{f}"] = getattr(lay, f)
    header = {
        "version": FORMAT_VERSION,
        "adam_t": adam_t,
        "phase1_done": team.phase1_done,
        "threshold": threshold.state_dict() if threshold is not None else None,
        "rng_states": rng_states or {},
        "meta": meta or {},
    }
    arrays["__header__"] = np.frombuffer(
        json.dumps(header).encode(), dtype=np.uint8)
    np.savez(path, **arrays)


def load_checkpoint(path, team):
    """Restore parameters, moments and phase flag into an already-built team;
    returns the header dict (threshold state, rng states, meta)."""
    with np.load(path) as data:
        header = json.loads(bytes(data["__header__"]).decode())
        if header["version"] != FORMAT_VERSION:
            raise ValueError(
                f"unsupported checkpoint version {header['version']}")
        stores = team.all_stores()
        missing = set(header["adam_t"]) ^ set(stores)
        if missing:
            raise ValueError(f"checkpoint/team store mismatch: {sorted(missing)}")
        for name, store in stores.items():
            store.adam_t = header["adam_t"][name]
            for k, lay in enumerate(store.layers):
                for f in _ARRAY_FIELDS:
                    getattr(lay, f)[...] = data[f"{name}|{k}|{f}"]
    team.phase1_done = header["phase1_done"]
    return header
