"""JSON instance format for both game representations.

Explicit games::

    {"resources": [{"id": "e1", "latency": {"coeffs": {"1": 1.0}, "beta": 0.5}}],
     "types": [{"demand": 1.0, "strategies": [["e1"], ["e2"]]}]}

Network games::

    {"nodes": ["s", "t"],
     "edges": [{"id": "a", "from": "s", "to": "t", "latency": {...}}],
     "commodities": [{"source": "s", "sink": "t", "demand": 1.0}]}
"""

from __future__ import annotations

import json
from pathlib import Path

from .game import CongestionGame
from .latency import LatencyFunction
from .network import Commodity, NetworkCongestionGame


class InstanceFormatError(ValueError):
    pass


def game_to_json(game) -> dict:
    if isinstance(game, NetworkCongestionGame):
        return {
            "nodes": list(game.nodes),
            "edges": [
                {"id": e, "from": u, "to": v, "latency": f.to_json()}
                for (e, u, v), f in zip(game.edges, game.latencies)
            ],
            "commodities": [{"source": c.source, "sink": c.sink, "demand": c.demand} for c in game.commodities],
        }
    return {
        "resources": [{"id": r, "latency": f.to_json()} for r, f in zip(game.resource_ids, game.latencies)],
        "types": [
            {"demand": r, "strategies": [[game.resource_ids[e] for e in s] for s in strats]}
            for r, strats in zip(game.demands, game.strategies)
        ],
    }


def game_from_json(data) -> CongestionGame | NetworkCongestionGame:
    if not isinstance(data, dict):
        raise InstanceFormatError("instance must be a JSON object")
    try:
        if "edges" in data:
            return NetworkCongestionGame(
                tuple(data["nodes"]),
                tuple((str(e["id"]), e["from"], e["to"]) for e in data["edges"]),
                tuple(LatencyFunction.from_json(e["latency"]) for e in data["edges"]),
                tuple(Commodity(c["source"], c["sink"], float(c["demand"])) for c in data["commodities"]),
            )
        latencies = {str(r["id"]): LatencyFunction.from_json(r["latency"]) for r in data["resources"]}
        if len(latencies) != len(data["resources"]):
            raise InstanceFormatError("duplicate resource id")
        types = [(float(t["demand"]), [[str(e) for e in s] for s in t["strategies"]]) for t in data["types"]]
        return CongestionGame.build(latencies, types)
    except InstanceFormatError:
        raise
    except (KeyError, TypeError, ValueError, AttributeError) as exc:
        raise InstanceFormatError(f"invalid instance: {exc}") from exc


def load_game(path: str | Path):
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise InstanceFormatError(f"malformed JSON: {exc}") from exc
    return game_from_json(data)


def save_game(game, path: str | Path) -> None:
    Path(path).write_text(json.dumps(game_to_json(game), indent=2) + "\n")
