"""Print the class-balancing job table for a stand-in corpus at the published class counts.

No images are read; every record is a label-only placeholder, so the run
only exercises planning and count bookkeeping.
"""
import argparse

from protestnet.augmentor import default_plan, plan_jobs, run_augmentation, summary_table
from protestnet.dataset import class_counts, standin_manifest


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    m = standin_manifest()
    plan = default_plan(m, args.seed)
    jobs = plan_jobs(m, plan)
    print(summary_table(m, plan, jobs))
    out = run_augmentation(m, jobs)
    print(f"records {len(m)} -> {len(out)}; per-class counts {class_counts(out)}")


if __name__ == "__main__":
    main()
