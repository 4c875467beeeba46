import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))

DEMO_SYSTEMS = Path(__file__).resolve().parents[1] / "demos" / "systems"
