"""Pick the best stage-2 scoring backend per dataset using its qrels.

Each candidate runs as stage 2 of the cascade over the labelled dataset;
the backend with the highest mean NDCG@k wins (ties go to the smaller
backend id).  Point --config at a run config whose scoring section lists
the candidates.

Usage: python scripts/select_rerankers.py --config CONFIG --candidates bm25,oracle [--stage1 bm25] [--k 10]
"""

from __future__ import annotations

import argparse
import sys

from finrag.config import RunConfig
from finrag.errors import FinragError
from finrag.evaluation import select_backends
from finrag.reranking import route


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--config", required=True)
    parser.add_argument("--candidates", required=True, help="comma-separated scoring backend ids")
    parser.add_argument("--stage1", default=None, help="stage-1 backend id (default: routing's stage 1)")
    parser.add_argument("--k", type=int, default=10)
    args = parser.parse_args(argv)

    config = RunConfig.from_file(args.config)
    config.validate_paths(need_qrels=True)
    bundle = config.load_bundle()
    registry = config.build_scoring_registry(bundle.qrels)
    cascade_cfg = route(config.dataset_name, config.routing)
    stage1 = args.stage1 or cascade_cfg.stage1_backend
    candidates = [c.strip() for c in args.candidates.split(",") if c.strip()]

    selections = select_backends(
        [bundle], candidates, registry, stage1_backend=stage1, k1=cascade_cfg.k1, k=args.k
    )
    for dataset, backend_id in selections.items():
        print(f"{dataset}\t{backend_id}")
    return 0


if __name__ == "__main__":
    try:
        sys.exit(main())
    except FinragError as e:
        print(f"error: {e}", file=sys.stderr)
        sys.exit(2)
