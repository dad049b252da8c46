"""
Default seed topics for the calltopics ontology
Root categories and the level below them; documents grow the tree from here
"""

import json
import sys
from pathlib import Path
from typing import List, Optional, Union

from loguru import logger

from config import MAX_DEPTH
from ontology import EPOCH, Ontology, Timestamp, load_seed_spec, seed
from schemas import SeedTopic

# A small sample seed list; a production run would seed a few dozen roots
DEFAULT_SEED_TOPICS = [
    # --- the topic tree the ontologist prompt is written around ---
    {"name": "Technology and Innovation", "children": ["5G", "Automation", "Batteries"]},
    {"name": "Environmental Issues", "children": ["Air Quality", "Biodiversity", "Carbon Neutral"]},
    {"name": "Financial Technology", "children": ["Digital Payments", "Digital Wallet", "Fintech"]},

    # --- financial analyst staples ---
    {
        "name": "Corporate Finance",
        "children": ["Mergers & Acquisitions", "Dividends", "Buybacks", "Capital Expenditures", "Guidance"],
    },
    {"name": "Operations", "children": ["Supply Chain", "Cost Reduction", "Manufacturing", "Logistics"]},
    {"name": "Markets and Demand", "children": ["Pricing", "Market Share", "Inflation", "Consumer Demand"]},

    # --- sector themes ---
    {"name": "Artificial Intelligence", "children": ["Generative AI", "Machine Learning", "AI Accelerators"]},
    {"name": "Automotive", "children": ["Electric Vehicles", "Autonomous Driving", "Charging Infrastructure"]},
    {"name": "Semiconductors", "children": ["Data Center", "Chip Design", "Foundry"]},
]


def default_seed_spec() -> List[SeedTopic]:
    return [SeedTopic.model_validate(entry) for entry in DEFAULT_SEED_TOPICS]


def seed_default_ontology(
    max_depth: int = MAX_DEPTH,
    seed_spec_path: Optional[Union[str, Path]] = None,
    now: Timestamp = EPOCH,
) -> Ontology:
    """Fresh tree seeded from a seed-spec file, or from the default list"""
    spec = load_seed_spec(seed_spec_path) if seed_spec_path else default_seed_spec()
    tree = seed(Ontology(max_depth=max_depth), spec, now)
    logger.info(f"Seed ontology ready: {len(spec)} roots, {len(tree)} nodes")
    return tree


if __name__ == "__main__":
    json.dump(DEFAULT_SEED_TOPICS, sys.stdout, indent=2, ensure_ascii=False)
    sys.stdout.write("\n")
