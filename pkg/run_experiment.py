"""
Run a smoke experiment with dummy data
"""

import os
import sys
sys.path.append(os.path.dirname(os.path.abspath(__file__)))

from mocks import SMOKE_OVERRIDES
from src.core.harness import run_experiment
from src.utils.validation import load_config

if __name__ == "__main__":
    out_dir = sys.argv[1] if len(sys.argv) > 1 else os.path.join('runs', 'smoke')
    print("Hybrid TD3 smoke experiment starting...")
    config = load_config(None, SMOKE_OVERRIDES)
    logs = run_experiment(config, out_dir)
    complete = sum(not log.diverged for log in logs)
    print(f"Smoke experiment complete: {complete}/{len(logs)} seeds, outputs in {out_dir}")
