from wsnsec import parse_scenario


def star(p, rounds, seed, m=2, spacing=20, adversary=True):
    """Initiator 0, suspect 1, and ``m`` nodes adjacent to both, one scripted round every ``spacing`` ticks."""
    xs = list(range(2, 2 + m))
    edges = [[0, 1]] + [[0, x] for x in xs] + [[1, x] for x in xs]
    doc = {"topology": {"nodes": list(range(2 + m)), "edges": edges}, "base_station": 0, "seed": seed,
           "duration": 300 + rounds * spacing, "protocol": "dri_grayhole", "dri_scan": False,
           "actions": [{"tick": 100 + k * spacing, "node": 0, "action": "cooperative_detection", "suspect": 1}
                       for k in range(rounds)]}
    if adversary:
        doc["adversaries"] = [{"node": 1, "kind": "Grayhole", "drop_p": p}]
    return parse_scenario(doc)
