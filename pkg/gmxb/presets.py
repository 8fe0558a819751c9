from __future__ import annotations

import json
from pathlib import Path

# section -> key -> raw value, in the same text form a config file uses
PresetData = dict[str, dict[str, str]]

DEFAULT_PRESETS: dict[str, PresetData] = {
    "glwb-table1": {
        "contract": {
            "kind": "glwb", "w0": "100", "N": "57", "delta": "0.05", "beta": "0.06",
            "penalties": "1:0.03, 2:0.02, 3:0.01, 4:0", "ratchets": "triennial",
        },
        "market": {"sigma": "0.20", "r": "0.04", "alpha": "0.015"},
        "mortality": {"table": "bundled"},
        "mc": {"paths": "1000000", "seed": "2013", "substeps_per_year": "100"},
        "slice": {"x1": "100", "anniversary": "1"},
        "control_maps": {"anniversaries": "1, 2, 3, 4"},
    },
    "gmwb-table2": {
        "contract": {
            "kind": "gmwb", "w0": "100", "N": "10", "G": "10",
            "penalties": "1:0.08, 2:0.07, 3:0.06, 4:0.05, 5:0.04, 6:0.03, 7:0",
        },
        "market": {"sigma": "0.15", "r": "0.05", "alpha": "0.01"},
        "mc": {"paths": "1000000", "seed": "2013", "substeps_per_year": "100"},
        "slice": {"x1": "100", "anniversary": "6"},
        "control_maps": {"anniversaries": "6, 7"},
    },
    # no withdrawals, a full surrender penalty and no deaths: every cash flow is zero
    "zero-contract": {
        "contract": {
            "kind": "glwb", "w0": "100", "N": "5", "delta": "0", "beta": "0",
            "penalties": "0:1", "ratchets": "none",
        },
        "market": {"sigma": "0.20", "r": "0.04", "alpha": "0.015"},
        "mortality": {"table": "zero"},
    },
}


def get_user_preset_path() -> Path:
    return Path.home() / ".gmxb" / "presets.json"


def load_all_presets(user_path: Path | None = None) -> dict[str, PresetData]:
    merged = dict(DEFAULT_PRESETS)

    user_path = user_path or get_user_preset_path()
    if user_path.exists():
        try:
            user_data = json.loads(user_path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError):
            return merged  # corrupted file
        if isinstance(user_data, dict):
            merged.update({
                name: _stringify(data) for name, data in user_data.items()
                if name not in DEFAULT_PRESETS and isinstance(data, dict)
            })
    return merged


def _stringify(data: dict) -> PresetData:
    return {
        str(section): {str(k): str(v) for k, v in keys.items()}
        for section, keys in data.items() if isinstance(keys, dict)
    }

