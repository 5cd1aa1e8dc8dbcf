import os
import sys
import subprocess
import logging
from pathlib import Path

# Configure logging
logging.basicConfig(
    level=logging.INFO,
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
)
logger = logging.getLogger(__name__)

DEMO_DIR = Path("demo_output")
DATA_DIR = DEMO_DIR / "data"


def ensure_directories():
    """Ensure all necessary directories exist."""
    for dir_path in [DEMO_DIR, DATA_DIR]:
        dir_path.mkdir(parents=True, exist_ok=True)
        logger.info(f"Ensured directory exists: {dir_path}")


def run_step(name: str, args: list) -> bool:
    """Run one crashlens subcommand in a child process."""
    try:
        logger.info(f"Running {name}...")
        result = subprocess.run([sys.executable, "-m", "src.main", *args], check=True)
        return result.returncode == 0
    except subprocess.CalledProcessError as e:
        logger.error(f"Step {name} failed with exit code {e.returncode}")
        return False
    except Exception as e:
        logger.error(f"Unexpected error in {name}: {e}")
        return False


def run_demo() -> bool:
    """synth -> moran -> train-agg -> train-point on one synthetic city."""
    raw = [
        "--tracts", str(DATA_DIR / "tracts.geojson"),
        "--accidents", str(DATA_DIR / "accidents.csv"),
        "--nodes", str(DATA_DIR / "nodes.csv"),
        "--edges", str(DATA_DIR / "edges.csv"),
    ]
    steps = [
        ("synth", ["synth", "--out", str(DATA_DIR), "--seed", "7"]),
        ("moran", ["moran", *raw, "--out", str(DEMO_DIR / "moran")]),
        ("train-agg", ["train-agg", "--table", str(DATA_DIR / "aggregated.csv"), "--out", str(DEMO_DIR / "aggregated")]),
        ("train-point", ["train-point", "--table", str(DATA_DIR / "point.csv"), "--out", str(DEMO_DIR / "point")]),
    ]
    for name, args in steps:
        if not run_step(name, args):
            return False
    logger.info(f"Demo finished; outputs in {DEMO_DIR.resolve()}")
    return True


if __name__ == "__main__":
    # Ensure we're in the correct directory
    script_dir = os.path.dirname(os.path.abspath(__file__))
    os.chdir(script_dir)

    ensure_directories()
    sys.exit(0 if run_demo() else 1)
