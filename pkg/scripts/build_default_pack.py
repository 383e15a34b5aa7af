#!/usr/bin/env python3
"""Regenerate the bundled default rule pack.

Expands each rule's seed keyword list against the offline thesaurus
snapshot and freezes the result into src/sentinel/data/default_rules.json.
Run after editing the thesaurus or the seed lists below.
"""

import json
from pathlib import Path

from sentinel.rules import expand_synonyms, load_thesaurus, pack_from_dict

SEMANTIC_SEEDS = {
    "is_ignore": ["ignore", "reveal", "disregard", "forget", "overlook", "regardless"],
    "is_urgent": ["urgent", "immediate", "asap", "emergency", "critical", "time"],
    "is_incentive": ["excellent", "fantastic", "nice", "awesome", "brilliant", "great"],
    "is_covert": [
        "secret", "hidden", "covert", "quiet", "silent",
        "discreetly", "stealth", "sneak", "confidential", "personal",
    ],
    "is_format_manipulation": ["encode", "disguising", "morse", "binary", "hexadecimal"],
    "is_hypothetical": [
        "assume", "imagine", "act", "role", "play",
        "hypothetical", "fictional", "scenario",
    ],
    "is_systemic": ["developer", "boss", "manager", "administrator", "creator"],
    "is_immoral": [
        "hitting", "amoral", "immoral", "deceit", "irresponsible", "offensive",
        "violent", "unethical", "smack", "fake", "illegal", "biased",
    ],
}

STRUCTURAL = [
    {"name": "is_shot_attack", "kind": "qa_pairs", "threshold": 3},
    {"name": "is_repeated_token", "kind": "consecutive_repeat", "threshold": 3},
]

VERSION = "default-1"


def main() -> None:
    thesaurus = load_thesaurus()
    doc = {
        "version": VERSION,
        "semantic": [
            {
                "name": name,
                "keywords": seeds,
                "synonyms": sorted(expand_synonyms(seeds, thesaurus)),
            }
            for name, seeds in SEMANTIC_SEEDS.items()
        ],
        "structural": STRUCTURAL,
    }
    pack_from_dict(doc)  # validate before freezing
    out = Path(__file__).resolve().parents[1] / "src/sentinel/data/default_rules.json"
    out.write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
    print(f"wrote {out}")


if __name__ == "__main__":
    main()
