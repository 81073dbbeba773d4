import sys
from pathlib import Path

# Allow the brute-force oracles (tests/brute_force.py) to be imported when
# pytest is launched from the repository root.
sys.path.insert(0, str(Path(__file__).resolve().parent))
