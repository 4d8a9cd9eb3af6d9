import sys
from pathlib import Path

# The fixtures reuse block helpers from the design-engine test suite; the
# trainer package itself has no such dependency.
sys.path.insert(0, str(Path(__file__).resolve().parents[2] / "tests"))
